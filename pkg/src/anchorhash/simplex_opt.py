"""Simplex-constrained quadratic columns and their projected-gradient solver.

Each graph column is refit by minimizing ``f(s) = s'Qs - c's`` over the
probability simplex, where ``Q`` combines the scaled spectral basis with a
ridge (``Q = B B' + gamma2 I``) and ``c`` mixes the fused-graph row with
the code-agreement profile of the instance. ``f`` is convex with gradient
``2Qs - c``, Lipschitz with constant ``2 * sigma_max(Q)``.

The solver is an accelerated projected-gradient method: project the
extrapolated point shifted by one Lipschitz step, then extrapolate with a
momentum weight ``(m_t - 1) / m_{t+1}``. The default momentum recurrence
``m_{t+1} = (1 + sqrt(4 m_t + 1)) / 2`` has a fixed point at 2, so the
extrapolation weight settles near one half; the ``classic_momentum``
variant ``(1 + sqrt(4 m_t^2 + 1)) / 2`` grows without bound and gives the
familiar accelerated schedule. Iterations stop once the relative change
of ``norm(s)`` drops below ``tol``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, NumericError


@dataclass
class ColumnQP:
    """One column's quadratic: symmetric PSD ``Q``, linear term ``c``,
    and the gradient Lipschitz constant ``2 * sigma_max(Q)``."""

    Q: np.ndarray
    c: np.ndarray
    lipschitz: float


def column_qp(scaled_basis: np.ndarray, gamma2: float, c: np.ndarray) -> ColumnQP:
    """Assemble ``Q = scaled_basis @ scaled_basis.T + gamma2 * I``."""
    scaled_basis = np.asarray(scaled_basis, dtype=np.float64)
    q = scaled_basis @ scaled_basis.T
    q[np.diag_indices_from(q)] += gamma2
    return ColumnQP(Q=q, c=np.asarray(c, dtype=np.float64), lipschitz=lipschitz_constant(q))


def lipschitz_constant(Q: np.ndarray) -> float:
    """Gradient Lipschitz constant of ``f``: twice the top eigenvalue of Q."""
    return 2.0 * float(np.linalg.eigvalsh(Q)[-1])


def qp_value(qp: ColumnQP, s: np.ndarray) -> float:
    return float(s @ qp.Q @ s - qp.c @ s)


def qp_gradient(qp: ColumnQP, s: np.ndarray) -> np.ndarray:
    return 2.0 * (qp.Q @ s) - qp.c


def warm_start(qp: ColumnQP) -> np.ndarray:
    """Unprojected starting point: the solution of ``Q s = c``."""
    try:
        return np.linalg.solve(qp.Q, qp.c)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"singular quadratic term in warm start: {exc}") from exc


def next_momentum(value: float, classic: bool = False) -> float:
    if classic:
        return 0.5 * (1.0 + math.sqrt(4.0 * value * value + 1.0))
    return 0.5 * (1.0 + math.sqrt(4.0 * value + 1.0))


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the probability simplex.

    Sort-based: with entries sorted descending, find the largest prefix
    whose KKT shift keeps it positive, then return ``(v + eta)_+`` where
    ``eta`` makes the result sum to one. Inputs already on the simplex
    come back unchanged, so the projection is exactly idempotent; "on the
    simplex" allows the sum to sit within a few ulps of one, because
    pairwise summation cannot always represent the total exactly.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        raise DataFormatError("cannot project an empty vector")
    if v.min() >= 0.0 and abs(float(v.sum()) - 1.0) <= 8.0 * np.finfo(np.float64).eps:
        return v.copy()
    return project_simplex_columns(v[:, None])[:, 0]


def project_simplex_columns(mat: np.ndarray) -> np.ndarray:
    """Column-wise simplex projection of a ``(p, m)`` matrix."""
    mat = np.asarray(mat, dtype=np.float64)
    p, m = mat.shape
    u = np.sort(mat, axis=0)[::-1]
    css = np.cumsum(u, axis=0)
    ranks = np.arange(1, p + 1, dtype=np.float64)[:, None]
    positive = u + (1.0 - css) / ranks > 0.0
    # the first prefix is always positive, so argmax on the flipped mask
    # finds the last index that still clears zero
    last = p - 1 - np.argmax(positive[::-1], axis=0)
    cols = np.arange(m)
    eta = (1.0 - css[last, cols]) / (last + 1.0)
    s = np.maximum(mat + eta[None, :], 0.0)
    # pin each column total to one (within summation rounding) so that
    # reprojection short-circuits and the projection is idempotent
    for _ in range(4):
        residual = 1.0 - s.sum(axis=0)
        if not residual.any():
            break
        s[np.argmax(s, axis=0), cols] += residual
    return s


def ogm_solve(
    qp: ColumnQP,
    start: np.ndarray | None = None,
    tol: float = 1e-4,
    max_iter: int = 200,
    classic_momentum: bool = False,
) -> np.ndarray:
    """Minimize one column's quadratic over the simplex.

    ``start`` defaults to the unprojected warm start; the first gradient
    step lands the iterate on the simplex. Returns the first iterate whose
    relative norm change falls below ``tol``, or the ``max_iter``-th.
    """
    s0 = warm_start(qp) if start is None else np.asarray(start, dtype=np.float64)
    result, _ = ogm_solve_columns(
        qp.Q,
        qp.c[:, None],
        s0[:, None],
        tol=tol,
        max_iter=max_iter,
        classic_momentum=classic_momentum,
        lipschitz=qp.lipschitz,
    )
    return result[:, 0]


def ogm_solve_columns(
    Q: np.ndarray,
    targets: np.ndarray,
    start: np.ndarray,
    tol: float = 1e-4,
    max_iter: int = 200,
    classic_momentum: bool = False,
    lipschitz: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve every column of ``targets`` against a shared ``Q``.

    Columns are independent, so one Lipschitz constant and one momentum
    schedule drive them all; each column freezes at its own stopping
    iteration. Returns the solution matrix and per-column iteration counts.
    """
    Q = np.asarray(Q, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    start = np.asarray(start, dtype=np.float64)
    p, m = targets.shape
    lp = lipschitz_constant(Q) if lipschitz is None else float(lipschitz)
    if not np.isfinite(lp) or lp <= 0:
        raise NumericError(f"Lipschitz constant must be finite and positive, got {lp}")

    result = project_simplex_columns(start)
    iterations = np.zeros(m, dtype=np.int64)
    if max_iter == 0:
        return result, iterations

    active = np.arange(m)
    cur_targets = targets.copy()
    s_prev = start.copy()
    z = start.copy()
    norms_prev = np.linalg.norm(s_prev, axis=0)
    momentum = 1.0

    for t in range(1, max_iter + 1):
        grad = 2.0 * (Q @ z) - cur_targets
        if not np.isfinite(grad).all():
            raise NumericError(
                "non-finite gradient in the column solver; the degree vector "
                "is likely degenerate"
            )
        s = project_simplex_columns(z - grad / lp)
        norms = np.linalg.norm(s, axis=0)
        done = np.abs(norms - norms_prev) < tol * norms_prev
        if t == max_iter:
            done = np.ones_like(done)
        momentum_next = next_momentum(momentum, classic_momentum)
        if done.any():
            finished = active[done]
            result[:, finished] = s[:, done]
            iterations[finished] = t
            keep = ~done
            if not keep.any():
                break
            active = active[keep]
            cur_targets = cur_targets[:, keep]
            s = s[:, keep]
            s_prev = s_prev[:, keep]
            norms = norms[keep]
        z = s + ((momentum - 1.0) / momentum_next) * (s - s_prev)
        s_prev = s
        norms_prev = norms
        momentum = momentum_next
    return result, iterations
