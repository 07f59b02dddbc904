"""Spectral bookkeeping for the learned anchor graph.

The normalized anchor Gram matrix of a graph ``S`` with anchor degrees
``D`` is ``E = D^{-1/2} S^T S D^{-1/2}``; the associated Laplacian is
``I - E``. The number of Laplacian eigenvalues at zero equals the number
of connected components of the instance-anchor graph that contain an
instance, which is how the trainer checks that the learned graph carries
the requested cluster structure.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import csgraph

from .errors import DataFormatError, NumericError

DEGREE_FLOOR = 1e-10
EDGE_THRESHOLD = 1e-8
ZERO_EIGENVALUE_TOL = 1e-6


@dataclass
class SpectralState:
    """Anchor degrees plus the current spectral embedding.

    ``basis`` is ``(anchors, clusters)`` with orthonormal columns;
    ``eigenvalues`` are the matching Laplacian eigenvalues, ascending.
    """

    degrees: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray


class ComponentCount(NamedTuple):
    clusters: int
    isolated_anchors: int


def _graph_matrix(graph) -> sparse.csr_matrix:
    m = graph.matrix if hasattr(graph, "matrix") else graph
    if sparse.issparse(m):
        return sparse.csr_matrix(m)
    return sparse.csr_matrix(np.asarray(m, dtype=np.float64))


def anchor_degrees(graph) -> np.ndarray:
    """Column sums of the graph: total incoming weight per anchor."""
    m = _graph_matrix(graph)
    return np.asarray(m.sum(axis=0)).ravel()


def normalized_gram(graph, degrees: np.ndarray, floor: float = DEGREE_FLOOR) -> np.ndarray:
    """Dense ``D^{-1/2} S^T S D^{-1/2}`` with degrees floored at ``floor``.

    Anchors with zero degree have empty columns in ``S``, so their rows
    and columns come out zero regardless of the floor.
    """
    m = _graph_matrix(graph)
    degrees = np.asarray(degrees, dtype=np.float64).ravel()
    if degrees.size != m.shape[1]:
        raise DataFormatError(
            f"degree vector length {degrees.size} does not match anchor count "
            f"{m.shape[1]}"
        )
    scale = 1.0 / np.sqrt(np.maximum(degrees, floor))
    gram = (m.T @ m).toarray()
    gram *= scale[:, None]
    gram *= scale[None, :]
    return 0.5 * (gram + gram.T)


def update_embedding(gram: np.ndarray, clusters: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal basis for the bottom of the Laplacian spectrum.

    Returns the eigenvectors of the ``clusters`` largest eigenvalues of the
    normalized Gram matrix (equivalently the smallest of ``I - gram``) and
    the Laplacian eigenvalues, ascending. Each eigenvector is flipped so
    its largest-magnitude entry is positive, which pins the sign.
    """
    gram = np.asarray(gram, dtype=np.float64)
    p = gram.shape[0]
    if not 1 <= clusters <= p:
        raise DataFormatError(f"clusters {clusters} must lie in [1, {p}]")
    try:
        vals, vecs = linalg.eigh(gram, subset_by_index=[p - clusters, p - 1])
    except linalg.LinAlgError as exc:
        raise NumericError(f"eigendecomposition failed: {exc}") from exc
    # reverse so Laplacian eigenvalues come out ascending
    vals = vals[::-1]
    basis = vecs[:, ::-1].copy()
    eigenvalues = 1.0 - vals
    if eigenvalues.min() < -1e-8 or eigenvalues.max() > 2.0 + 1e-8:
        raise NumericError(
            f"Laplacian eigenvalues outside [0, 2]: "
            f"[{eigenvalues.min():.3e}, {eigenvalues.max():.3e}]"
        )
    peaks = np.argmax(np.abs(basis), axis=0)
    signs = np.where(basis[peaks, np.arange(basis.shape[1])] < 0, -1.0, 1.0)
    basis *= signs[None, :]
    return basis, eigenvalues


def count_components(graph, threshold: float = EDGE_THRESHOLD) -> ComponentCount:
    """Connected components of the bipartite instance-anchor graph.

    Edges are entries strictly above ``threshold``. ``clusters`` counts the
    components that contain at least one instance; anchors unreachable from
    any instance are tallied separately as ``isolated_anchors``.
    """
    m = _graph_matrix(graph)
    n, p = m.shape
    mask = _threshold_mask(m, threshold)
    bipartite = sparse.bmat(
        [[None, mask], [mask.T, None]], format="csr", dtype=np.float64
    )
    total, labels = csgraph.connected_components(bipartite, directed=False)
    instance_components = int(np.unique(labels[:n]).size) if n else 0
    return ComponentCount(
        clusters=instance_components,
        isolated_anchors=int(total - instance_components),
    )


def _threshold_mask(m: sparse.csr_matrix, threshold: float) -> sparse.csr_matrix:
    keep = m.copy()
    keep.data = (keep.data > threshold).astype(np.float64)
    keep.eliminate_zeros()
    return keep


def zero_eigenvalue_count(eigenvalues: np.ndarray, tol: float = ZERO_EIGENVALUE_TOL) -> int:
    """How many of the given Laplacian eigenvalues sit at zero."""
    return int(np.count_nonzero(np.asarray(eigenvalues) < tol))
