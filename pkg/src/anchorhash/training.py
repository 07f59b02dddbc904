"""Alternating optimization of binary codes over a fused anchor graph.

One training iteration refits six blocks in a fixed order, each with the
others held:

1. graph columns: per-instance simplex-constrained quadratics solved by
   the accelerated projected-gradient method, all sharing one quadratic
   term built from the current spectral basis;
2. anchor degrees: column sums of the refit graph;
3. spectral basis: bottom eigenvectors of the graph's normalized Laplacian;
4. unified codes: sign of the code-agreement score plus the scaled sum of
   per-modality projections;
5. anchor codes: sign of the unified codes pushed through the graph;
6. projection matrices: ridge-stabilized least squares from features to
   codes.

The loop stops when the relative change of the objective falls below
``tol`` or after ``max_iters`` iterations. ``sign(0)`` is ``+1``
everywhere a sign is taken.

Model files use the ``AGSF`` format: magic ``AGSF``, u32 version (1), the
hyperparameters (u32 bits, anchors, clusters, knn; f8 gamma1, gamma2,
gamma3, lam; u32 max_iters, ogm_max_iters; f8 tol, ogm_tol; i64 seed;
u8 center, renormalize_fusion, classic_momentum), u32 modality count,
u32 feature dims, then per modality the f8 mean vector and the f8
projection matrix (row-major), the i8 anchor-code matrix (row-major), a
u8 flag for stored database codes, and if set a u64 train count followed
by the i8 code matrix. Everything is little-endian; round-trips are byte
exact.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .anchor_graph import (
    AnchorGraph,
    build_anchor_graph,
    fuse_graphs,
    initial_laplacian_embedding,
)
from .dataset import Dataset, draw_anchor_indices, training_means
from .errors import ConfigError, DataFormatError, NumericError
from .simplex_opt import lipschitz_constant, ogm_solve_columns
from .spectral import (
    DEGREE_FLOOR,
    anchor_degrees,
    count_components,
    normalized_gram,
    update_embedding,
)

MODEL_MAGIC = b"AGSF"
MODEL_VERSION = 1


@dataclass
class Hyperparams:
    """Training knobs; defaults follow the reference configuration."""

    bits: int = 16
    anchors: int = 900
    clusters: int = 60
    knn: int = 45
    gamma1: float = 0.01
    gamma2: float = 10.0
    gamma3: float = 0.01
    lam: float = 300.0
    max_iters: int = 50
    ogm_max_iters: int = 200
    tol: float = 1e-4
    ogm_tol: float = 1e-4
    seed: int = 0
    center: bool = True
    renormalize_fusion: bool = False
    classic_momentum: bool = False

    def validate(self) -> None:
        if self.bits < 1:
            raise ConfigError(f"bits must be >= 1, got {self.bits}")
        if self.anchors < 1:
            raise ConfigError(f"anchors must be >= 1, got {self.anchors}")
        if not 1 <= self.clusters <= self.anchors:
            raise ConfigError(
                f"clusters {self.clusters} must lie in [1, anchors {self.anchors}]"
            )
        if not 1 <= self.knn < self.anchors:
            raise ConfigError(
                f"knn {self.knn} must satisfy 1 <= knn < anchors {self.anchors}"
            )
        if self.gamma2 <= 0:
            raise ConfigError("gamma2 must be positive (the column quadratics "
                              "need a strictly convex ridge)")
        for name in ("gamma1", "gamma3", "lam", "tol", "ogm_tol"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.max_iters < 0 or self.ogm_max_iters < 0:
            raise ConfigError("iteration limits must be nonnegative")


class ObjectiveTerms(NamedTuple):
    """Signed addends of the training objective; they sum to the total."""

    spectral: float
    alignment: float
    norm_penalty: float
    code_graph: float
    regression: float


@dataclass
class HashModel:
    """Learned parameters: database codes, anchor codes, per-modality
    projections, and the centering means applied to queries."""

    codes: np.ndarray
    anchor_codes: np.ndarray
    projections: list[np.ndarray]
    means: list[np.ndarray]
    hyper: Hyperparams

    @property
    def bits(self) -> int:
        return self.anchor_codes.shape[0]

    @property
    def modality_count(self) -> int:
        return len(self.projections)


@dataclass
class TrainTrace:
    """Per-iteration diagnostics collected during training."""

    train_count: int
    objective: list[float] = field(default_factory=list)
    terms: list[ObjectiveTerms] = field(default_factory=list)
    components: list[int] = field(default_factory=list)
    isolated_anchors: list[int] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    eigenvalues: list[np.ndarray] = field(default_factory=list)
    ogm_iterations: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.objective)

    def normalized(self) -> np.ndarray:
        """Objective scaled by the training count and the first value,
        so the series starts at 1."""
        vals = np.asarray(self.objective, dtype=np.float64) / max(self.train_count, 1)
        if vals.size == 0 or vals[0] == 0.0:
            return vals
        return vals / vals[0]

    def to_csv(self, path) -> None:
        normalized = self.normalized()
        with open(path, "w", encoding="ascii") as fh:
            fh.write(
                "iteration,objective,normalized_objective,spectral_term,"
                "alignment_term,norm_penalty_term,code_graph_term,"
                "regression_term,components,isolated_anchors,"
                "mean_ogm_iterations,seconds\n"
            )
            for i in range(len(self)):
                t = self.terms[i]
                fh.write(
                    f"{i},{self.objective[i]:.17g},{normalized[i]:.17g},"
                    f"{t.spectral:.17g},{t.alignment:.17g},{t.norm_penalty:.17g},"
                    f"{t.code_graph:.17g},{t.regression:.17g},"
                    f"{self.components[i]},{self.isolated_anchors[i]},"
                    f"{self.ogm_iterations[i]:.17g},{self.seconds[i]:.17g}\n"
                )

    def eigenvalues_to_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            width = self.eigenvalues[0].size if self.eigenvalues else 0
            fh.write("iteration," + ",".join(f"eig{i}" for i in range(width)) + "\n")
            for i, eigs in enumerate(self.eigenvalues):
                fh.write(f"{i}," + ",".join(f"{e:.17g}" for e in eigs) + "\n")


def sign_codes(values: np.ndarray) -> np.ndarray:
    """Sign matrix with the zero convention ``sign(0) = +1``."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


def balanced_sign_rows(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    """Random sign matrix whose rows each hold half +1 and half -1
    (the +1 side gets the extra entry when ``cols`` is odd)."""
    base = np.concatenate(
        [np.ones((cols + 1) // 2, dtype=np.int8), -np.ones(cols // 2, dtype=np.int8)]
    )
    return rng.permuted(np.tile(base, (rows, 1)), axis=1)


def _dense_graph(graph) -> np.ndarray:
    if isinstance(graph, AnchorGraph):
        return graph.to_dense()
    if sparse.issparse(graph):
        return graph.toarray()
    return np.asarray(graph, dtype=np.float64)


def objective(
    graph,
    target,
    basis: np.ndarray,
    codes: np.ndarray,
    anchor_codes: np.ndarray,
    projections: list[np.ndarray],
    features: list[np.ndarray],
    hyper: Hyperparams,
) -> tuple[float, ObjectiveTerms]:
    """Training objective and its per-term breakdown.

    ``graph`` is the learned instance-anchor graph, ``target`` the fused
    graph it is pulled toward, ``features`` the centered training
    matrices. The anchor degrees inside the spectral term are recomputed
    from ``graph``, matching the degree refresh inside the training loop.
    """
    s = _dense_graph(graph)
    a = _dense_graph(target)
    b = codes.astype(np.float64)
    bs = anchor_codes.astype(np.float64)

    gram = normalized_gram(s, anchor_degrees(s))
    spectral = float(np.trace(basis.T @ basis) - np.einsum("ij,ij->", basis, gram @ basis))
    alignment = -hyper.gamma1 * float(np.einsum("ij,ij->", a, s))
    norm_penalty = hyper.gamma2 * float(np.einsum("ij,ij->", s, s))
    code_graph = -hyper.gamma3 * float(np.einsum("ij,ij->", b @ s, bs))
    regression = hyper.lam * sum(
        float(np.linalg.norm(b - w.T @ x) ** 2)
        for w, x in zip(projections, features)
    )
    terms = ObjectiveTerms(spectral, alignment, norm_penalty, code_graph, regression)
    return float(sum(terms)), terms


def update_codes(
    graph,
    anchor_codes: np.ndarray,
    projections: list[np.ndarray],
    features: list[np.ndarray],
    gamma3: float,
    lam: float,
) -> np.ndarray:
    """Unified-code step: sign of the code-agreement score plus the
    scaled projection responses (exact minimizer of its subproblem)."""
    s = _dense_graph(graph)
    score = gamma3 * (anchor_codes.astype(np.float64) @ s.T)
    for w, x in zip(projections, features):
        score += 2.0 * lam * (w.T @ x)
    return sign_codes(score)


def update_anchor_codes(codes: np.ndarray, graph) -> np.ndarray:
    """Anchor-code step: sign of the codes pushed through the graph."""
    s = _dense_graph(graph)
    return sign_codes(codes.astype(np.float64) @ s)


def update_projection(
    features: np.ndarray, codes: np.ndarray, relative_ridge: float = 1e-6
) -> np.ndarray:
    """Projection step: solve ``(X X' + eps I) W = X B'`` where ``eps``
    is ``relative_ridge * trace(X X') / d``, stabilizing rank-deficient
    feature Grams without visibly moving well-posed solutions."""
    x = np.asarray(features, dtype=np.float64)
    g = x @ x.T
    eps = relative_ridge * float(np.trace(g)) / max(x.shape[0], 1)
    g[np.diag_indices_from(g)] += eps
    try:
        return np.linalg.solve(g, x @ codes.T.astype(np.float64))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"projection solve failed: {exc}") from exc


def train(dataset: Dataset, hyper: Hyperparams) -> tuple[HashModel, TrainTrace]:
    """Run the full pipeline on the dataset's training split.

    Anchors are sampled from the training split, per-modality graphs are
    built and fused, the spectral state is initialized from the fused
    graph, and the six-block loop runs until the objective stalls. All
    randomness comes from ``default_rng(hyper.seed)``, so equal seeds give
    identical models.
    """
    hyper.validate()
    train_idx = dataset.split.train
    n = train_idx.size
    if n == 0:
        raise DataFormatError("training split is empty")
    if hyper.anchors > n:
        raise ConfigError(
            f"anchors {hyper.anchors} exceed the training split size {n}"
        )

    rng = np.random.default_rng(hyper.seed)
    if hyper.center:
        means = training_means(dataset)
    else:
        means = [np.zeros(m.feature_dim) for m in dataset.modalities]
    feats = [
        m.data[:, train_idx] - mu[:, None]
        for m, mu in zip(dataset.modalities, means)
    ]

    anchor_pos = draw_anchor_indices(np.arange(n), hyper.anchors, rng)
    graphs = [
        build_anchor_graph(x, x[:, anchor_pos], hyper.knn) for x in feats
    ]
    target = fuse_graphs(graphs, renormalize=hyper.renormalize_fusion)
    state = initial_laplacian_embedding(target, hyper.clusters)
    basis, degrees = state.basis, state.degrees

    codes = balanced_sign_rows(hyper.bits, n, rng)
    anchor_codes = balanced_sign_rows(hyper.bits, hyper.anchors, rng)
    projections = [rng.normal(size=(x.shape[0], hyper.bits)) for x in feats]

    target_cols = target.to_dense().T  # (anchors, train) linear-term component
    graph_cols = None
    trace = TrainTrace(train_count=n)
    prev_value = None

    for _ in range(hyper.max_iters):
        tick = time.perf_counter()

        # graph-column step: shared quadratic, one simplex QP per instance
        scaled_basis = basis / np.sqrt(np.maximum(degrees, DEGREE_FLOOR))[:, None]
        quad = scaled_basis @ scaled_basis.T
        quad[np.diag_indices_from(quad)] += hyper.gamma2
        lipschitz = lipschitz_constant(quad)
        linear = hyper.gamma1 * target_cols + hyper.gamma3 * (
            anchor_codes.T.astype(np.float64) @ codes.astype(np.float64)
        )
        if graph_cols is None:
            start = np.linalg.solve(quad, linear)  # unprojected warm start
        else:
            start = graph_cols  # previous columns seed the next pass
        graph_cols, ogm_iters = ogm_solve_columns(
            quad,
            linear,
            start,
            tol=hyper.ogm_tol,
            max_iter=hyper.ogm_max_iters,
            classic_momentum=hyper.classic_momentum,
            lipschitz=lipschitz,
        )
        graph = AnchorGraph(matrix=sparse.csr_matrix(graph_cols.T))

        # degree and spectral steps
        degrees = anchor_degrees(graph)
        gram = normalized_gram(graph, degrees)
        basis, eigenvalues = update_embedding(gram, hyper.clusters)

        # code and projection steps
        codes = update_codes(
            graph, anchor_codes, projections, feats, hyper.gamma3, hyper.lam
        )
        anchor_codes = update_anchor_codes(codes, graph)
        projections = [update_projection(x, codes) for x in feats]

        value, terms = objective(
            graph, target, basis, codes, anchor_codes, projections, feats, hyper
        )
        parts = count_components(graph)
        trace.objective.append(value)
        trace.terms.append(terms)
        trace.components.append(parts.clusters)
        trace.isolated_anchors.append(parts.isolated_anchors)
        trace.seconds.append(time.perf_counter() - tick)
        trace.eigenvalues.append(eigenvalues)
        trace.ogm_iterations.append(float(ogm_iters.mean()))

        if prev_value is not None and abs(value - prev_value) < hyper.tol * abs(prev_value):
            break
        prev_value = value

    model = HashModel(
        codes=codes,
        anchor_codes=anchor_codes,
        projections=projections,
        means=means,
        hyper=hyper,
    )
    return model, trace


def save_model(model: HashModel, path, include_codes: bool = True) -> None:
    """Serialize a model to the ``AGSF`` binary format."""
    h = model.hyper
    buf = io.BytesIO()
    buf.write(MODEL_MAGIC)
    buf.write(np.uint32(MODEL_VERSION).tobytes())
    buf.write(np.array([h.bits, h.anchors, h.clusters, h.knn], "<u4").tobytes())
    buf.write(np.array([h.gamma1, h.gamma2, h.gamma3, h.lam], "<f8").tobytes())
    buf.write(np.array([h.max_iters, h.ogm_max_iters], "<u4").tobytes())
    buf.write(np.array([h.tol, h.ogm_tol], "<f8").tobytes())
    buf.write(np.int64(h.seed).tobytes())
    buf.write(
        np.array(
            [h.center, h.renormalize_fusion, h.classic_momentum], "u1"
        ).tobytes()
    )
    buf.write(np.uint32(model.modality_count).tobytes())
    dims = [w.shape[0] for w in model.projections]
    buf.write(np.array(dims, "<u4").tobytes())
    for mean in model.means:
        buf.write(np.asarray(mean, "<f8").tobytes())
    for w in model.projections:
        buf.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(model.anchor_codes, dtype="i1").tobytes())
    buf.write(np.uint8(1 if include_codes else 0).tobytes())
    if include_codes:
        buf.write(np.uint64(model.codes.shape[1]).tobytes())
        buf.write(np.ascontiguousarray(model.codes, dtype="i1").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


class _Cursor:
    def __init__(self, payload: bytes, path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, dtype, count: int) -> np.ndarray:
        dt = np.dtype(dtype)
        end = self.offset + dt.itemsize * count
        if end > len(self.payload):
            raise DataFormatError(f"{self.path}: truncated model file")
        out = np.frombuffer(self.payload, dtype=dt, count=count, offset=self.offset)
        self.offset = end
        return out


def load_model(path) -> HashModel:
    """Read a model saved by :func:`save_model`; round-trips are exact."""
    with open(path, "rb") as fh:
        payload = fh.read()
    if payload[:4] != MODEL_MAGIC:
        raise DataFormatError(
            f"{path}: bad magic {payload[:4]!r}, expected {MODEL_MAGIC!r}"
        )
    cur = _Cursor(payload, path)
    cur.offset = 4
    version = int(cur.take("<u4", 1)[0])
    if version != MODEL_VERSION:
        raise DataFormatError(f"{path}: unsupported model version {version}")
    bits, anchors, clusters, knn = (int(v) for v in cur.take("<u4", 4))
    gamma1, gamma2, gamma3, lam = (float(v) for v in cur.take("<f8", 4))
    max_iters, ogm_max_iters = (int(v) for v in cur.take("<u4", 2))
    tol, ogm_tol = (float(v) for v in cur.take("<f8", 2))
    seed = int(cur.take("<i8", 1)[0])
    center, renorm, classic = (bool(v) for v in cur.take("u1", 3))
    hyper = Hyperparams(
        bits=bits, anchors=anchors, clusters=clusters, knn=knn,
        gamma1=gamma1, gamma2=gamma2, gamma3=gamma3, lam=lam,
        max_iters=max_iters, ogm_max_iters=ogm_max_iters,
        tol=tol, ogm_tol=ogm_tol, seed=seed,
        center=center, renormalize_fusion=renorm, classic_momentum=classic,
    )
    modality_count = int(cur.take("<u4", 1)[0])
    dims = [int(v) for v in cur.take("<u4", modality_count)]
    means = [cur.take("<f8", d).copy() for d in dims]
    projections = [cur.take("<f8", d * bits).reshape(d, bits).copy() for d in dims]
    anchor_codes = cur.take("i1", bits * anchors).reshape(bits, anchors).copy()
    has_codes = bool(cur.take("u1", 1)[0])
    if has_codes:
        n = int(cur.take("<u8", 1)[0])
        codes = cur.take("i1", bits * n).reshape(bits, n).copy()
    else:
        codes = np.zeros((bits, 0), dtype=np.int8)
    if cur.offset != len(payload):
        raise DataFormatError(f"{path}: {len(payload) - cur.offset} trailing bytes")
    return HashModel(
        codes=codes,
        anchor_codes=anchor_codes,
        projections=projections,
        means=means,
        hyper=hyper,
    )
