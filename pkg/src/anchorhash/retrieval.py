"""Hamming-space retrieval: encoding, ranking, and evaluation.

Codes are sign matrices, one instance per column. For storage and fast
distances each instance's bits are packed most-significant-bit first into
``ceil(bits / 8)`` bytes; Hamming distances are popcounts of XORed rows
and agree exactly with the sign-matrix identity
``d(a, b) = (bits - a . b) / 2``.

Packed code files use the ``AGSC`` format: magic ``AGSC``, little-endian
u32 version (1), u32 bits, u64 instance count, then one packed row per
instance.

Evaluation ranks the database by Hamming distance with ties broken by
database index (stable sort), and reports mean average precision at a
cutoff, precision at a grid of ranking depths, and a micro-averaged
precision-recall curve over Hamming radii. Relevance is label equality
for single-label data and any shared label for multi-label data. Queries
with no relevant database item are excluded from the averages and counted
separately.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset, FeatureMatrix
from .errors import DataFormatError
from .training import HashModel, sign_codes

CODES_MAGIC = b"AGSC"
CODES_VERSION = 1

DEFAULT_CUTOFF = 50
DEFAULT_TOPN_GRID = tuple(range(50, 1001, 50))
AP_DENOMINATORS = ("min-relevant", "retrieved")


def pack_codes(codes: np.ndarray) -> np.ndarray:
    """Pack a ``(bits, count)`` sign matrix into per-instance byte rows."""
    codes = np.asarray(codes)
    if codes.ndim != 2:
        raise DataFormatError(f"expected a 2-d code matrix, got {codes.ndim}-d")
    return np.packbits(codes.T > 0, axis=1, bitorder="big")


def unpack_codes(packed: np.ndarray, bits: int) -> np.ndarray:
    """Inverse of :func:`pack_codes`; returns int8 signs."""
    unpacked = np.unpackbits(packed, axis=1, count=bits, bitorder="big")
    return (2 * unpacked.astype(np.int8) - 1).T


@dataclass
class CodeIndex:
    """Packed database codes plus their labels."""

    packed: np.ndarray
    bits: int
    labels: np.ndarray | None = None

    @classmethod
    def from_codes(cls, codes: np.ndarray, labels: np.ndarray | None = None) -> "CodeIndex":
        return cls(packed=pack_codes(codes), bits=codes.shape[0], labels=labels)

    @property
    def count(self) -> int:
        return self.packed.shape[0]

    def codes(self) -> np.ndarray:
        return unpack_codes(self.packed, self.bits)


def encode(features: FeatureMatrix, model: HashModel) -> np.ndarray:
    """Sign codes for unseen instances of one modality.

    Applies the model's stored centering means, then takes the sign of the
    projected features; ``sign(0)`` is ``+1``.
    """
    m = features.modality_id
    if not 0 <= m < model.modality_count:
        raise DataFormatError(
            f"modality {m} out of range for a {model.modality_count}-modality model"
        )
    w = model.projections[m]
    if features.feature_dim != w.shape[0]:
        raise DataFormatError(
            f"modality {m} features have dimension {features.feature_dim}, "
            f"model expects {w.shape[0]}"
        )
    centered = features.data - model.means[m][:, None]
    return sign_codes(w.T @ centered)


def hamming_distances(query_code: np.ndarray, index: CodeIndex) -> np.ndarray:
    """Hamming distances from one query to every database instance."""
    q = pack_codes(np.asarray(query_code).reshape(-1, 1))[0]
    return _packed_distances(q, index.packed)


def _packed_distances(query_row: np.ndarray, packed: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.bitwise_xor(packed, query_row[None, :])).sum(
        axis=1, dtype=np.int64
    )


def sign_dot_distances(codes_a: np.ndarray, codes_b: np.ndarray) -> np.ndarray:
    """Reference Hamming distances from the sign inner product:
    ``(bits - a . b) / 2``, instances of ``a`` by instances of ``b``."""
    a = np.asarray(codes_a, dtype=np.int64)
    b = np.asarray(codes_b, dtype=np.int64)
    return (a.shape[0] - a.T @ b) // 2


def hamming_rank(query_code: np.ndarray, index: CodeIndex) -> np.ndarray:
    """Database permutation by increasing distance, ties by index."""
    return np.argsort(hamming_distances(query_code, index), kind="stable")


@dataclass
class RetrievalReport:
    """Metrics for one retrieval direction."""

    task: str
    map_score: float
    cutoff: int
    ap_denominator: str
    queries_evaluated: int
    queries_skipped: int
    topn: list = field(default_factory=list)
    pr_curve: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "map": self.map_score,
            "cutoff": self.cutoff,
            "ap_denominator": self.ap_denominator,
            "queries_evaluated": self.queries_evaluated,
            "queries_skipped": self.queries_skipped,
            "topn": [[int(n), float(p)] for n, p in self.topn],
            "pr_curve": [
                [int(r), float(p), float(c)] for r, p, c in self.pr_curve
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, payload: dict) -> "RetrievalReport":
        return cls(
            task=payload["task"],
            map_score=payload["map"],
            cutoff=payload["cutoff"],
            ap_denominator=payload["ap_denominator"],
            queries_evaluated=payload["queries_evaluated"],
            queries_skipped=payload["queries_skipped"],
            topn=[(int(n), float(p)) for n, p in payload["topn"]],
            pr_curve=[(int(r), float(p), float(c)) for r, p, c in payload["pr_curve"]],
        )

    def save_json(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.to_json())

    def save_topn_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("depth,precision\n")
            for n, p in self.topn:
                fh.write(f"{n},{p:.17g}\n")

    def save_pr_csv(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write("radius,precision,recall\n")
            for r, p, c in self.pr_curve:
                fh.write(f"{r},{p:.17g},{c:.17g}\n")


def _relevance(query_label, db_labels: np.ndarray) -> np.ndarray:
    if db_labels.ndim == 1:
        return db_labels == query_label
    return (db_labels @ np.asarray(query_label)) > 0


def evaluate(
    query_codes: np.ndarray,
    query_labels: np.ndarray,
    index: CodeIndex,
    task: str = "",
    cutoff: int = DEFAULT_CUTOFF,
    topn_grid=None,
    ap_denominator: str = "min-relevant",
) -> RetrievalReport:
    """Rank the database for each query and aggregate the metrics.

    Average precision per query is the mean of precision-at-r over the
    relevant ranks r within the cutoff, divided by
    ``min(total relevant, cutoff)`` (default) or, with
    ``ap_denominator="retrieved"``, by the number of relevant items inside
    the cutoff window.
    """
    if ap_denominator not in AP_DENOMINATORS:
        raise DataFormatError(
            f"ap_denominator must be one of {AP_DENOMINATORS}, got {ap_denominator!r}"
        )
    if index.labels is None:
        raise DataFormatError("the code index carries no labels to evaluate against")
    query_codes = np.asarray(query_codes)
    bits, q = query_codes.shape
    if bits != index.bits:
        raise DataFormatError(
            f"query codes have {bits} bits, the index has {index.bits}"
        )
    n = index.count
    if topn_grid is None:
        topn_grid = DEFAULT_TOPN_GRID
    grid = [depth for depth in topn_grid if depth <= n]

    db_labels = np.asarray(index.labels)
    packed_queries = pack_codes(query_codes)

    ap_sum = 0.0
    evaluated = 0
    skipped = 0
    topn_hits = np.zeros(len(grid), dtype=np.float64)
    retrieved_by_radius = np.zeros(bits + 1, dtype=np.int64)
    relevant_by_radius = np.zeros(bits + 1, dtype=np.int64)
    total_relevant = 0

    for j in range(q):
        relevant = _relevance(query_labels[j], db_labels)
        rel_count = int(np.count_nonzero(relevant))
        if rel_count == 0:
            skipped += 1
            continue
        evaluated += 1
        dist = _packed_distances(packed_queries[j], index.packed)
        order = np.argsort(dist, kind="stable")
        rel_ranked = relevant[order]

        top = rel_ranked[:cutoff]
        hits = np.flatnonzero(top)
        if ap_denominator == "min-relevant":
            denom = min(rel_count, cutoff)
        else:
            denom = hits.size
        if hits.size and denom:
            precisions = (np.arange(hits.size) + 1.0) / (hits + 1.0)
            ap_sum += float(precisions.sum()) / denom

        cum_rel = np.cumsum(rel_ranked)
        for g, depth in enumerate(grid):
            topn_hits[g] += cum_rel[depth - 1] / depth

        retrieved_by_radius += np.bincount(dist, minlength=bits + 1)
        relevant_by_radius += np.bincount(
            dist[relevant], minlength=bits + 1
        )
        total_relevant += rel_count

    map_score = ap_sum / evaluated if evaluated else 0.0
    topn = [
        (depth, float(topn_hits[g] / evaluated) if evaluated else 0.0)
        for g, depth in enumerate(grid)
    ]
    ret_cum = np.cumsum(retrieved_by_radius)
    rel_cum = np.cumsum(relevant_by_radius)
    pr_curve = []
    for r in range(bits + 1):
        precision = float(rel_cum[r] / ret_cum[r]) if ret_cum[r] else 0.0
        recall = float(rel_cum[r] / total_relevant) if total_relevant else 0.0
        pr_curve.append((r, precision, recall))

    return RetrievalReport(
        task=task,
        map_score=float(map_score),
        cutoff=cutoff,
        ap_denominator=ap_denominator,
        queries_evaluated=evaluated,
        queries_skipped=skipped,
        topn=topn,
        pr_curve=pr_curve,
    )


def database_index(model: HashModel, dataset: Dataset) -> CodeIndex:
    """Index over the training split using the model's stored codes."""
    if model.codes.shape[1] == 0:
        raise DataFormatError(
            "the model carries no stored database codes; re-save it with codes"
        )
    labels = None
    if dataset.labels is not None:
        labels = dataset.labels[dataset.split.train]
    if model.codes.shape[1] != dataset.split.train.size:
        raise DataFormatError(
            f"model stores {model.codes.shape[1]} database codes but the "
            f"training split has {dataset.split.train.size} instances"
        )
    return CodeIndex.from_codes(model.codes, labels=labels)


def task_query_modality(task: str, modality_count: int) -> int:
    """Map a task name to the query modality index."""
    named = {"i2t": 0, "t2i": 1}
    if task in named:
        if modality_count < 2:
            raise DataFormatError(f"task {task!r} needs at least 2 modalities")
        return named[task]
    if task.startswith("m") and task.endswith("2db"):
        idx = int(task[1:-3])
        if not 0 <= idx < modality_count:
            raise DataFormatError(f"task {task!r} out of range")
        return idx
    raise DataFormatError(f"unknown task {task!r}")


def cross_modal_evaluate(
    model: HashModel,
    dataset: Dataset,
    tasks=("i2t", "t2i"),
    cutoff: int = DEFAULT_CUTOFF,
    topn_grid=None,
    ap_denominator: str = "min-relevant",
) -> dict[str, RetrievalReport]:
    """Evaluate every requested direction against the stored database codes."""
    if dataset.labels is None:
        raise DataFormatError("evaluation requires dataset labels")
    index = database_index(model, dataset)
    query_idx = dataset.split.query
    query_labels = dataset.labels[query_idx]
    reports = {}
    for task in tasks:
        m = task_query_modality(task, model.modality_count)
        queries = FeatureMatrix(
            modality_id=m, data=dataset.modalities[m].data[:, query_idx]
        )
        codes = encode(queries, model)
        reports[task] = evaluate(
            codes,
            query_labels,
            index,
            task=task,
            cutoff=cutoff,
            topn_grid=topn_grid,
            ap_denominator=ap_denominator,
        )
    return reports


def save_codes(codes: np.ndarray, path) -> None:
    """Write a packed code file (``AGSC``)."""
    codes = np.asarray(codes)
    bits, count = codes.shape
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(np.uint32(CODES_VERSION).tobytes())
        fh.write(np.uint32(bits).tobytes())
        fh.write(np.uint64(count).tobytes())
        fh.write(pack_codes(codes).tobytes())


def load_codes(path) -> np.ndarray:
    """Read a packed code file back into a ``(bits, count)`` sign matrix."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20:
            raise DataFormatError(f"{path}: truncated header ({len(header)} bytes)")
        if header[:4] != CODES_MAGIC:
            raise DataFormatError(
                f"{path}: bad magic {header[:4]!r}, expected {CODES_MAGIC!r}"
            )
        version = int(np.frombuffer(header, "<u4", count=1, offset=4)[0])
        if version != CODES_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        bits = int(np.frombuffer(header, "<u4", count=1, offset=8)[0])
        count = int(np.frombuffer(header, "<u8", count=1, offset=12)[0])
        payload = fh.read()
    row_bytes = (bits + 7) // 8
    expected = row_bytes * count
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    if count == 0:
        return np.zeros((bits, 0), dtype=np.int8)
    packed = np.frombuffer(payload, dtype=np.uint8).reshape(count, row_bytes)
    return unpack_codes(packed, bits)
