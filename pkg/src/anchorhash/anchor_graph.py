"""Sparse instance-to-anchor affinity graphs and their fusion.

A graph stores, per instance, nonnegative weights on at most ``knn``
anchors. Per-modality graphs are row stochastic; fusing several graphs
multiplies them entrywise, which keeps the shared support and drops
modality-specific edges, so fused row sums can fall below one.

The text dump format is one line per stored entry,
``instance_index anchor_index weight``, sorted by (instance, anchor).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DataFormatError, NumericError


@dataclass
class AnchorGraph:
    """CSR-backed ``(count, anchors)`` affinity matrix with weights >= 0."""

    matrix: sparse.csr_matrix

    def __post_init__(self) -> None:
        m = sparse.csr_matrix(self.matrix)
        m.sort_indices()
        if m.nnz and m.data.min() < 0:
            raise DataFormatError("anchor graph weights must be nonnegative")
        self.matrix = m

    @property
    def count(self) -> int:
        return self.matrix.shape[0]

    @property
    def anchors(self) -> int:
        return self.matrix.shape[1]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "AnchorGraph":
        return cls(matrix=sparse.csr_matrix(np.asarray(arr, dtype=np.float64)))


def squared_distances(x: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distances, instances by anchors."""
    x = np.asarray(x, dtype=np.float64)
    anchors = np.asarray(anchors, dtype=np.float64)
    if x.shape[0] != anchors.shape[0]:
        raise DataFormatError(
            f"feature dimension {x.shape[0]} does not match anchor dimension "
            f"{anchors.shape[0]}"
        )
    xx = np.einsum("ij,ij->j", x, x)
    aa = np.einsum("ij,ij->j", anchors, anchors)
    d2 = xx[:, None] + aa[None, :] - 2.0 * (x.T @ anchors)
    np.maximum(d2, 0.0, out=d2)
    return d2


def build_anchor_graph(features, anchor_points: np.ndarray, knn: int) -> AnchorGraph:
    """Row-stochastic affinity from each instance to its ``knn`` nearest anchors.

    Weights on the k nearest anchors are proportional to how far each one
    sits inside the (k+1)-th nearest distance:
    ``(b_{k+1} - b_j) / (k * b_{k+1} - sum_{j'<=k} b_{j'})``, with distances
    sorted ascending. When the k+1 nearest distances are all equal the
    denominator vanishes and the weights fall back to uniform ``1/k``.
    Ties at the k-th distance go to the lower anchor index.
    """
    data = features.data if hasattr(features, "data") else np.asarray(features)
    anchor_points = np.asarray(anchor_points, dtype=np.float64)
    p = anchor_points.shape[1]
    if not 1 <= knn < p:
        raise DataFormatError(f"knn {knn} must satisfy 1 <= knn < anchors {p}")
    d2 = squared_distances(data, anchor_points)
    n = d2.shape[0]
    # stable sort keeps equal distances in anchor-index order
    order = np.argsort(d2, axis=1, kind="stable")
    rows = np.arange(n)[:, None]
    near = order[:, :knn]
    bvals = d2[rows, near]
    bnext = d2[rows, order[:, knn : knn + 1]]
    num = bnext - bvals
    den = num.sum(axis=1, keepdims=True)
    uniform = np.full_like(num, 1.0 / knn)
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(den > 0, num / np.where(den > 0, den, 1.0), uniform)
    indptr = np.arange(0, n * knn + 1, knn)
    graph = sparse.csr_matrix(
        (weights.ravel(), near.ravel(), indptr), shape=(n, p)
    )
    graph.sort_indices()
    return AnchorGraph(matrix=graph)


def fuse_graphs(graphs: list[AnchorGraph], renormalize: bool = False) -> AnchorGraph:
    """Entrywise product of per-modality graphs.

    With ``renormalize`` set, rows that keep any weight are rescaled to sum
    to one; rows that lose all support stay empty either way.
    """
    if not graphs:
        raise DataFormatError("cannot fuse an empty graph list")
    shapes = {g.matrix.shape for g in graphs}
    if len(shapes) != 1:
        raise DataFormatError(f"graphs disagree on shape: {sorted(shapes)}")
    fused = graphs[0].matrix.copy()
    for g in graphs[1:]:
        fused = fused.multiply(g.matrix)
    fused = sparse.csr_matrix(fused)
    fused.eliminate_zeros()
    if fused.nnz == 0:
        raise NumericError(
            "fusion removed every edge; increase knn or use a shared anchor set"
        )
    if renormalize:
        sums = np.asarray(fused.sum(axis=1)).ravel()
        scale = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > 0)
        fused = sparse.csr_matrix(sparse.diags(scale) @ fused)
    fused.sort_indices()
    return AnchorGraph(matrix=fused)


def initial_laplacian_embedding(graph: AnchorGraph, clusters: int):
    """Spectral starting point from the fused graph.

    Builds the degree-normalized anchor Gram matrix of the fused graph and
    returns the embedding spanned by the bottom of its Laplacian spectrum,
    with the anchor degree vector reset to ones, which is the documented
    starting value for the alternating optimization.
    """
    from .spectral import SpectralState, anchor_degrees, normalized_gram, update_embedding

    p = graph.anchors
    if not 1 <= clusters <= p:
        raise DataFormatError(f"clusters {clusters} must lie in [1, anchors {p}]")
    degrees = anchor_degrees(graph)
    usable = int(np.count_nonzero(degrees > 0))
    if usable < clusters:
        raise NumericError(
            f"only {usable} anchors carry weight but {clusters} clusters were "
            "requested; increase the anchor count or reduce clusters"
        )
    gram = normalized_gram(graph, degrees)
    basis, eigenvalues = update_embedding(gram, clusters)
    return SpectralState(degrees=np.ones(p), basis=basis, eigenvalues=eigenvalues)


def save_graph(graph: AnchorGraph, path) -> None:
    m = graph.matrix.tocoo()
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="ascii") as fh:
        for i, j, w in zip(m.row[order], m.col[order], m.data[order]):
            fh.write(f"{i} {j} {w:.17g}\n")


def load_graph(path, count: int, anchors: int) -> AnchorGraph:
    rows, cols, vals = [], [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise DataFormatError(
                    f"{path}:{lineno}: expected 'instance anchor weight', got {line!r}"
                )
            rows.append(int(parts[0]))
            cols.append(int(parts[1]))
            vals.append(float(parts[2]))
    matrix = sparse.csr_matrix(
        (vals, (rows, cols)), shape=(count, anchors), dtype=np.float64
    )
    return AnchorGraph(matrix=matrix)
