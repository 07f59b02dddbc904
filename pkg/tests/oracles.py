"""Independent reference implementations the tests check the library against.

Everything here is written from first principles: support enumeration,
small KKT systems, breadth-first search, plain loops over rankings. None
of it calls into the package, so a library bug cannot hide inside its own
oracle. The enumeration routines are exponential in the dimension and are
meant for the small sizes the tests use.
"""

from __future__ import annotations

import numpy as np


# ---------------------------------------------------------------------------
# simplex projection and simplex-constrained QP


def project_simplex_enum(vectors: np.ndarray) -> np.ndarray:
    """Exact simplex projection of each row by support enumeration.

    For a fixed support the equality-constrained minimizer of
    ``||s - v||^2`` shifts the supported entries by a common constant;
    scanning every nonempty support and keeping the feasible candidate
    with the smallest distance is exhaustive, hence exact.
    """
    v = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    n, p = v.shape
    best = np.zeros_like(v)
    best_dist = np.full(n, np.inf)
    for mask in range(1, 2**p):
        idx = np.flatnonzero([(mask >> i) & 1 for i in range(p)])
        shift = (1.0 - v[:, idx].sum(axis=1)) / idx.size
        supported = v[:, idx] + shift[:, None]
        feasible = supported.min(axis=1) >= -1e-12
        candidate = np.zeros((n, p))
        candidate[:, idx] = np.clip(supported, 0.0, None)
        dist = ((candidate - v) ** 2).sum(axis=1)
        better = feasible & (dist < best_dist)
        best[better] = candidate[better]
        best_dist[better] = dist[better]
    return best if np.asarray(vectors).ndim == 2 else best[0]


def _equality_qp(Q: np.ndarray, c: np.ndarray, idx: np.ndarray):
    """Stationary point of ``s'Qs - c's`` with the given support summing
    to one: solve the bordered KKT system for the supported entries and
    the equality multiplier."""
    k = idx.size
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = 2.0 * Q[np.ix_(idx, idx)]
    kkt[:k, k] = -1.0
    kkt[k, :k] = 1.0
    rhs = np.concatenate([c[idx], [1.0]])
    sol = np.linalg.solve(kkt, rhs)
    return sol[:k], sol[k]


def simplex_qp_enum(Q: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Global minimum of ``s'Qs - c's`` on the simplex by enumerating
    every support.

    The optimum is the stationary point of its own support, so the best
    feasible candidate over all supports is the global solution. Only
    usable for small dimensions (2^p supports).
    """
    Q = np.asarray(Q, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    p = c.size
    best = None
    best_value = np.inf
    for mask in range(1, 2**p):
        idx = np.flatnonzero([(mask >> i) & 1 for i in range(p)])
        try:
            x, _ = _equality_qp(Q, c, idx)
        except np.linalg.LinAlgError:
            continue
        if x.min() < -1e-11:
            continue
        s = np.zeros(p)
        s[idx] = np.clip(x, 0.0, None)
        s /= s.sum()
        value = float(s @ Q @ s - c @ s)
        if value < best_value:
            best, best_value = s, value
    return best


def simplex_kkt_residual(Q: np.ndarray, c: np.ndarray, s: np.ndarray,
                         support_tol: float = 1e-10) -> float:
    """Worst violation of the optimality conditions for the simplex QP at
    ``s``: stationarity on the support, dual feasibility off it, the sum
    constraint, and nonnegativity."""
    g = 2.0 * Q @ s - c
    support = s > support_tol
    mu = float(g[support].mean())
    stationarity = float(np.abs(g[support] - mu).max())
    off = ~support
    dual = max(0.0, mu - float(g[off].min())) if off.any() else 0.0
    return max(stationarity, dual, abs(float(s.sum()) - 1.0),
               max(0.0, -float(s.min())))


def simplex_qp_active_set(Q: np.ndarray, c: np.ndarray,
                          certify_tol: float = 1e-8) -> np.ndarray:
    """Primal active-set solver for ``min s'Qs - c's`` on the simplex.

    Works over the free-variable set: solve the equality-constrained
    subproblem; if infeasible, step to the nearest bound and pin that
    variable; if feasible, release the variable with the most negative
    multiplier or stop. The returned point is KKT-certified, which for a
    positive-definite Q means it is the exact global optimum.
    """
    Q = np.asarray(Q, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    p = c.size
    s = np.full(p, 1.0 / p)
    free = np.ones(p, dtype=bool)
    for _ in range(40 * p + 40):
        idx = np.flatnonzero(free)
        x, _ = _equality_qp(Q, c, idx)
        if x.min() >= -1e-13:
            s = np.zeros(p)
            s[idx] = np.clip(x, 0.0, None)
            s /= s.sum()
            g = 2.0 * Q @ s - c
            mu = g[idx].mean()
            pinned = np.flatnonzero(~free)
            if pinned.size == 0 or (g[pinned] - mu).min() >= -1e-11:
                break
            free[pinned[np.argmin(g[pinned] - mu)]] = True
        else:
            current = s[idx]
            step = x - current
            shrinking = step < -1e-15
            ratios = -current[shrinking] / step[shrinking]
            t = min(1.0, float(ratios.min()))
            moved = np.clip(current + t * step, 0.0, None)
            s = np.zeros(p)
            s[idx] = moved
            blocked = idx[shrinking][np.argmin(ratios)]
            s[blocked] = 0.0
            free[blocked] = False
    residual = simplex_kkt_residual(Q, c, s)
    if residual > certify_tol:
        raise AssertionError(
            f"active-set oracle failed to certify optimality: "
            f"KKT residual {residual:.3e}"
        )
    return s


# ---------------------------------------------------------------------------
# graph components


def bipartite_components(dense_graph: np.ndarray, threshold: float = 1e-8):
    """Connected components of the instance-anchor graph by BFS.

    Returns ``(instance_components, isolated_anchors)``: components that
    contain at least one instance, and anchors unreachable from any
    instance. Edges are entries strictly above ``threshold``.
    """
    g = np.asarray(dense_graph, dtype=np.float64)
    n, p = g.shape
    instance_edges = [list(np.flatnonzero(g[i] > threshold)) for i in range(n)]
    anchor_edges = [list(np.flatnonzero(g[:, j] > threshold)) for j in range(p)]
    seen = [False] * (n + p)  # instances first, then anchors
    instance_components = 0
    isolated_anchors = 0
    for root in range(n + p):
        if seen[root]:
            continue
        seen[root] = True
        queue = [root]
        contains_instance = False
        while queue:
            node = queue.pop()
            if node < n:
                contains_instance = True
                neighbors = [n + j for j in instance_edges[node]]
            else:
                neighbors = anchor_edges[node - n]
            for other in neighbors:
                if not seen[other]:
                    seen[other] = True
                    queue.append(other)
        if contains_instance:
            instance_components += 1
        else:
            isolated_anchors += 1
    return instance_components, isolated_anchors


def block_graph(rng: np.random.Generator, group_instances, group_anchors):
    """Random block-structured row-stochastic graph: group ``b`` wires its
    instances to its anchors only, with weights bounded away from zero.
    Returns the dense matrix; its component count is ``len(groups)`` by
    construction."""
    n = int(sum(group_instances))
    p = int(sum(group_anchors))
    graph = np.zeros((n, p))
    row = 0
    col = 0
    for rows, cols in zip(group_instances, group_anchors):
        block = rng.uniform(0.2, 1.0, size=(rows, cols))
        block /= block.sum(axis=1, keepdims=True)
        graph[row:row + rows, col:col + cols] = block
        row += rows
        col += cols
    return graph


# ---------------------------------------------------------------------------
# retrieval metrics


def average_precision_ref(ranked_relevance, total_relevant: int,
                          cutoff: int = 50,
                          denominator: str = "min-relevant") -> float:
    """Average precision from the definition, as a plain loop over the
    ranked relevance flags."""
    hits = 0
    precision_sum = 0.0
    for rank, flag in enumerate(ranked_relevance[:cutoff], start=1):
        if flag:
            hits += 1
            precision_sum += hits / rank
    if denominator == "min-relevant":
        denom = min(int(total_relevant), cutoff)
    else:
        denom = hits
    return precision_sum / denom if denom else 0.0


def mean_average_precision_ref(query_codes, query_labels, db_codes,
                               db_labels, cutoff: int = 50,
                               denominator: str = "min-relevant"):
    """MAP over sign-matrix codes, ranking by the inner-product Hamming
    identity with ties broken by database index. Returns
    ``(map, evaluated, skipped)``."""
    bits, q = np.asarray(query_codes).shape
    db = np.asarray(db_codes, dtype=np.int64)
    dbl = np.asarray(db_labels)
    ap_sum = 0.0
    evaluated = 0
    skipped = 0
    for j in range(q):
        if dbl.ndim == 1:
            relevant = dbl == np.asarray(query_labels)[j]
        else:
            relevant = (dbl @ np.asarray(query_labels)[j]) > 0
        total = int(np.count_nonzero(relevant))
        if total == 0:
            skipped += 1
            continue
        evaluated += 1
        dist = (bits - np.asarray(query_codes)[:, j].astype(np.int64) @ db) // 2
        order = sorted(range(db.shape[1]), key=lambda i: (dist[i], i))
        flags = [bool(relevant[i]) for i in order]
        ap_sum += average_precision_ref(flags, total, cutoff, denominator)
    return (ap_sum / evaluated if evaluated else 0.0), evaluated, skipped
