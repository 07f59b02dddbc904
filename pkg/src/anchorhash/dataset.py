"""Multi-modal feature containers, file formats, and synthetic data.

Feature files come in two flavors:

* CSV: headerless text, one matrix row per line, comma separated. A matrix
  row is a feature dimension, so a ``d x N`` matrix is ``d`` lines of ``N``
  values each.
* Binary: magic ``AGFM``, little-endian u32 version (currently 1), u32
  feature dimension ``d``, u64 instance count ``N``, then ``d * N``
  IEEE-754 float64 values little-endian in column-major order, so each
  instance's ``d`` values are contiguous. Round-trips are bit exact.

A split file is two lines of space-separated instance indices: training
indices first, query indices second. A label file has one line per
instance, either a single integer category or a comma-separated 0/1
membership vector for multi-label data.

All randomness flows through ``numpy.random.default_rng`` (PCG64); every
sampler takes an explicit integer seed, so identical seeds give identical
draws.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError

FEATURE_MAGIC = b"AGFM"
FEATURE_VERSION = 1


def _first_bad_cell(data: np.ndarray) -> tuple[int, int]:
    bad = np.argwhere(~np.isfinite(data))
    row, col = bad[0]
    return int(row), int(col)


@dataclass
class FeatureMatrix:
    """One modality's features, column per instance.

    ``data`` has shape ``(feature_dim, count)``; all entries must be finite.
    """

    modality_id: int
    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise DataFormatError(
                f"modality {self.modality_id}: expected a 2-d feature matrix, "
                f"got shape {arr.shape}"
            )
        if not np.isfinite(arr).all():
            row, col = _first_bad_cell(arr)
            raise DataFormatError(
                f"modality {self.modality_id}: non-finite value at "
                f"row {row}, column {col}"
            )
        self.data = arr

    @property
    def feature_dim(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]


@dataclass
class Split:
    """Training / query partition, as absolute instance indices."""

    train: np.ndarray
    query: np.ndarray

    def __post_init__(self) -> None:
        self.train = np.asarray(self.train, dtype=np.int64).ravel()
        self.query = np.asarray(self.query, dtype=np.int64).ravel()


@dataclass
class Dataset:
    """Aligned multi-modal collection with an optional label array.

    Labels are either a ``(count,)`` integer category vector or a
    ``(count, L)`` binary membership matrix for multi-label data.
    """

    modalities: list[FeatureMatrix]
    split: Split
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        if len(self.modalities) < 2:
            raise DataFormatError(
                f"a dataset needs at least 2 modalities, got {len(self.modalities)}"
            )
        counts = {m.count for m in self.modalities}
        if len(counts) != 1:
            raise DataFormatError(
                f"modalities disagree on instance count: {sorted(counts)}"
            )
        n = self.count
        for name, idx in (("train", self.split.train), ("query", self.split.query)):
            if idx.size and (idx.min() < 0 or idx.max() >= n):
                raise DataFormatError(
                    f"{name} split indices out of range for {n} instances"
                )
            if np.unique(idx).size != idx.size:
                raise DataFormatError(f"{name} split contains duplicate indices")
        if np.intersect1d(self.split.train, self.split.query).size:
            raise DataFormatError("train and query splits overlap")
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.ndim == 1:
                lab = lab.astype(np.int64)
            elif lab.ndim == 2:
                lab = lab.astype(np.int64)
                if not np.isin(lab, (0, 1)).all():
                    raise DataFormatError(
                        "2-d label matrices must contain only 0/1 memberships"
                    )
            else:
                raise DataFormatError(f"labels must be 1-d or 2-d, got {lab.ndim}-d")
            if lab.shape[0] != n:
                raise DataFormatError(
                    f"label count {lab.shape[0]} does not match instance count {n}"
                )
            self.labels = lab

    @property
    def count(self) -> int:
        return self.modalities[0].count


@dataclass
class AnchorSet:
    """Anchor instances: absolute indices plus per-modality columns."""

    indices: np.ndarray
    per_modality: list[np.ndarray] = field(default_factory=list)

    @property
    def count(self) -> int:
        return self.indices.size


def load_features(path, fmt: str = "auto", modality_id: int = 0) -> FeatureMatrix:
    """Read one modality's features from ``path``.

    ``fmt`` is ``csv``, ``bin``, or ``auto`` (``.csv`` suffix means CSV,
    anything else binary).
    """
    fmt = _resolve_format(path, fmt)
    if fmt == "csv":
        return _load_csv(path, modality_id)
    return _load_binary(path, modality_id)


def save_features(features: FeatureMatrix, path, fmt: str = "auto") -> None:
    """Write features to ``path`` in the chosen format."""
    fmt = _resolve_format(path, fmt)
    if fmt == "csv":
        np.savetxt(path, features.data, delimiter=",", fmt="%.17g")
        return
    d, n = features.data.shape
    with open(path, "wb") as fh:
        fh.write(FEATURE_MAGIC)
        fh.write(np.uint32(FEATURE_VERSION).tobytes())
        fh.write(np.uint32(d).tobytes())
        fh.write(np.uint64(n).tobytes())
        fh.write(np.asarray(features.data, dtype="<f8").tobytes(order="F"))


def _resolve_format(path, fmt: str) -> str:
    if fmt not in ("auto", "csv", "bin"):
        raise DataFormatError(f"unknown feature format {fmt!r}")
    if fmt == "auto":
        return "csv" if str(path).endswith(".csv") else "bin"
    return fmt


def _load_csv(path, modality_id: int) -> FeatureMatrix:
    try:
        data = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed CSV: {exc}") from exc
    if not np.isfinite(data).all():
        row, col = _first_bad_cell(data)
        raise DataFormatError(f"{path}: non-finite value at row {row}, column {col}")
    return FeatureMatrix(modality_id=modality_id, data=data)


def _load_binary(path, modality_id: int) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) < 20:
            raise DataFormatError(f"{path}: truncated header ({len(header)} bytes)")
        magic = header[:4]
        if magic != FEATURE_MAGIC:
            raise DataFormatError(
                f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}"
            )
        version = int(np.frombuffer(header, "<u4", count=1, offset=4)[0])
        if version != FEATURE_VERSION:
            raise DataFormatError(f"{path}: unsupported version {version}")
        d = int(np.frombuffer(header, "<u4", count=1, offset=8)[0])
        n = int(np.frombuffer(header, "<u8", count=1, offset=12)[0])
        payload = fh.read()
    expected = d * n * 8
    if len(payload) != expected:
        raise DataFormatError(
            f"{path}: payload is {len(payload)} bytes but header promises "
            f"{d} x {n} float64 values ({expected} bytes)"
        )
    values = np.frombuffer(payload, dtype="<f8")
    data = values.reshape((d, n), order="F")
    if not np.isfinite(data).all():
        row, col = _first_bad_cell(data)
        raise DataFormatError(f"{path}: non-finite value at row {row}, column {col}")
    return FeatureMatrix(modality_id=modality_id, data=data.copy())


def load_split(path) -> Split:
    """Read a two-line split file (training indices, then query indices)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 2:
        raise DataFormatError(f"{path}: split file needs two lines, got {len(lines)}")
    try:
        train = np.array([int(v) for v in lines[0].split()], dtype=np.int64)
        query = np.array([int(v) for v in lines[1].split()], dtype=np.int64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-integer split index: {exc}") from exc
    return Split(train=train, query=query)


def save_split(split: Split, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(" ".join(str(int(v)) for v in split.train) + "\n")
        fh.write(" ".join(str(int(v)) for v in split.query) + "\n")


def load_labels(path) -> np.ndarray:
    """Read labels: one integer per line, or comma-separated 0/1 rows."""
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty label file")
    multi = "," in lines[0]
    try:
        if multi:
            rows = [[int(v) for v in ln.split(",")] for ln in lines]
            widths = {len(r) for r in rows}
            if len(widths) != 1:
                raise DataFormatError(
                    f"{path}: label rows have inconsistent widths {sorted(widths)}"
                )
            return np.asarray(rows, dtype=np.int64)
        return np.asarray([int(ln) for ln in lines], dtype=np.int64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed label line: {exc}") from exc


def save_labels(labels: np.ndarray, path) -> None:
    labels = np.asarray(labels)
    with open(path, "w", encoding="ascii") as fh:
        if labels.ndim == 1:
            fh.write("\n".join(str(int(v)) for v in labels) + "\n")
        else:
            for row in labels:
                fh.write(",".join(str(int(v)) for v in row) + "\n")


def sample_anchors(dataset: Dataset, count: int, seed: int) -> AnchorSet:
    """Draw ``count`` anchor instances uniformly, without replacement,
    from the training split. Identical seeds give identical anchors."""
    rng = np.random.default_rng(seed)
    indices = draw_anchor_indices(dataset.split.train, count, rng)
    return AnchorSet(
        indices=indices,
        per_modality=[m.data[:, indices].copy() for m in dataset.modalities],
    )


def draw_anchor_indices(pool: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    pool = np.asarray(pool, dtype=np.int64)
    if not 1 <= count <= pool.size:
        raise DataFormatError(
            f"anchor count {count} must be between 1 and the training size {pool.size}"
        )
    return rng.choice(pool, size=count, replace=False)


def training_means(dataset: Dataset) -> list[np.ndarray]:
    """Per-dimension means over the training split, one vector per modality."""
    train = dataset.split.train
    return [m.data[:, train].mean(axis=1) for m in dataset.modalities]


def synth_multimodal(
    clusters: int,
    count: int,
    dims: list[int],
    noise: float = 0.1,
    seed: int = 0,
    query_fraction: float = 0.2,
) -> Dataset:
    """Generate a clustered multi-modal dataset.

    Instances fall into ``clusters`` balanced groups. Each modality embeds
    the shared group assignment through its own random linear map (a random
    center per cluster) and adds isotropic Gaussian noise with standard
    deviation ``noise``. Zero noise makes groups exactly separable in every
    modality. Labels are the group ids; the split holds out a
    ``query_fraction`` share of instances as queries.
    """
    if clusters < 1:
        raise DataFormatError("clusters must be >= 1")
    if count < clusters:
        raise DataFormatError(f"count {count} must be >= clusters {clusters}")
    if len(dims) < 2:
        raise DataFormatError("need at least 2 modality dimensions")
    if noise < 0:
        raise DataFormatError("noise must be nonnegative")
    if not 0 <= query_fraction < 1:
        raise DataFormatError("query_fraction must lie in [0, 1)")

    rng = np.random.default_rng(seed)
    sizes = np.full(clusters, count // clusters, dtype=np.int64)
    sizes[: count % clusters] += 1
    labels = np.repeat(np.arange(clusters), sizes)
    labels = labels[rng.permutation(count)]

    modalities = []
    for m, d in enumerate(dims):
        centers = rng.normal(size=(d, clusters))
        data = centers[:, labels]
        if noise > 0:
            data = data + noise * rng.normal(size=(d, count))
        modalities.append(FeatureMatrix(modality_id=m, data=data))

    order = rng.permutation(count)
    q = int(round(count * query_fraction))
    q = min(q, count - 1)  # keep the training split nonempty
    split = Split(train=np.sort(order[q:]), query=np.sort(order[:q]))
    return Dataset(modalities=modalities, split=split, labels=labels)
