"""Freidlin-Wentzell graph quantities on ``l`` families.

A tree in ``T(i)`` is a spanning in-tree rooted at ``i``: every ``m != i``
has exactly one outgoing edge ``(m, n)`` (child to parent) and following
the edges from any vertex ends at ``i``. Trees are stored as parent
vectors with ``parent[i] = -1``.
"""

from dataclasses import dataclass
from functools import lru_cache
import itertools
import json

import numpy as np

__all__ = [
    "TreeWeights",
    "min_arborescence",
    "enumerate_trees",
    "brute_force_arborescence",
    "tree_weights",
    "weight_interval",
    "W_eval",
    "tree_polynomial_Q",
    "stationary_from_Q",
    "invariant_sandwich",
    "tree_report",
]


ARGMIN_RTOL = 1e-6


def _as_matrix(v):
    return np.asarray(getattr(v, "values", v), dtype=float)


# ---------------------------------------------------------------------------
# Contraction algorithm
# ---------------------------------------------------------------------------


def _find_cycle(best, root):
    n = len(best)
    color = [0] * n
    for s in range(n):
        if s == root or color[s]:
            continue
        path = []
        u = s
        while u != root and color[u] == 0:
            color[u] = 1
            path.append(u)
            u = best[u]
        if u != root and color[u] == 1:
            return path[path.index(u):]
        for x in path:
            color[x] = 2
    return None


def _edmonds(W, root):
    """Parent vector of a minimum in-tree into ``root``; ``W[m, n]`` weighs edge ``m -> n``."""
    n = W.shape[0]
    best = [-1] * n
    for u in range(n):
        if u == root:
            continue
        row = W[u].copy()
        row[u] = np.inf
        best[u] = int(np.argmin(row))
    cycle = _find_cycle(best, root)
    if cycle is None:
        return best
    cset = set(cycle)
    rest = [u for u in range(n) if u not in cset]
    idx = {u: k for k, u in enumerate(rest)}
    c = len(rest)
    W2 = np.full((c + 1, c + 1), np.inf)
    enter = {}
    leave = {}
    for u in rest:
        for x in rest:
            if u != x:
                W2[idx[u], idx[x]] = W[u, x]
        cyc = [W[u, y] for y in cycle]
        k = int(np.argmin(cyc))
        W2[idx[u], c] = cyc[k]
        enter[u] = cycle[k]
    for x in rest:
        red = [W[u, x] - W[u, best[u]] if np.isfinite(W[u, x]) else np.inf for u in cycle]
        k = int(np.argmin(red))
        W2[c, idx[x]] = red[k]
        leave[x] = cycle[k]
    sub = _edmonds(W2, idx[root])
    parent = [-1] * n
    for u in rest:
        if u == root:
            continue
        p = sub[idx[u]]
        parent[u] = enter[u] if p == c else rest[p]
    for u in cycle:
        parent[u] = best[u]
    x = rest[sub[c]]
    parent[leave[x]] = x
    return parent


def _tree_weight(W, parent):
    return float(sum(W[m, p] for m, p in enumerate(parent) if p >= 0))


def min_arborescence(v, root, *, tie_tol=None):
    """``(w_root, parent)`` for the minimum-weight in-tree into ``root``.

    Weights come from the contraction algorithm. Among optimal trees the one
    with the lexicographically smallest parent vector is returned, found
    greedily by pinning parents one vertex at a time and re-solving.
    ``tie_tol`` defaults to exact comparison for integer input and to
    ``1e-12`` times the largest weight otherwise.
    """
    W = _as_matrix(v)
    n = W.shape[0]
    if not 0 <= root < n:
        raise ValueError("root out of range")
    if n == 1:
        return 0.0, [-1]
    Wn = W.copy()
    np.fill_diagonal(Wn, np.inf)
    Wn[root, :] = np.inf
    best = _tree_weight(W, _edmonds(Wn, root))
    if tie_tol is None:
        exact = np.all(np.mod(W, 1.0) == 0.0)
        tie_tol = 0.0 if exact else 1e-12 * max(1.0, float(np.max(np.abs(W))))
    pinned = Wn.copy()
    current = _edmonds(Wn, root)
    parent = [-1] * n
    for u in range(n):
        if u == root:
            continue
        # cheapest possible tree once u -> p is forced: row minima elsewhere
        row_min = np.min(pinned, axis=1)
        row_min[root] = 0.0
        base = float(np.sum(row_min)) - row_min[u]
        for p in range(n):
            if p == u or not np.isfinite(pinned[u, p]):
                continue
            if p != current[u] and base + pinned[u, p] > best + tie_tol:
                continue
            trial = pinned.copy()
            keep = trial[u, p]
            trial[u, :] = np.inf
            trial[u, p] = keep
            if p == current[u]:
                t = current
            else:
                t = _edmonds(trial, root)
                if not (_tree_weight(trial, t) <= best + tie_tol and _is_tree(t, root)):
                    continue
            parent[u] = p
            pinned = trial
            current = t
            break
    return _tree_weight(W, parent), parent


def _is_tree(parent, root):
    n = len(parent)
    for s in range(n):
        u, steps = s, 0
        while u != root:
            u = parent[u]
            steps += 1
            if u < 0 or steps > n:
                return False
    return True


# ---------------------------------------------------------------------------
# Enumeration oracle
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def enumerate_trees(n, root):
    """All in-trees into ``root`` on ``n`` vertices, as an int array of parent vectors.

    Rows are in lexicographic order of the parent vector. ``n^(n-2)`` rows.
    """
    others = [u for u in range(n) if u != root]
    if not others:
        return np.full((1, n), -1, dtype=np.int64)
    choices = [[p for p in range(n) if p != u] for u in others]
    cand = np.array(list(itertools.product(*choices)), dtype=np.int64)
    par = np.full((cand.shape[0], n), -1, dtype=np.int64)
    par[:, others] = cand
    # a parent vector is a tree iff n-1 jumps from every vertex reach the root
    pos = np.tile(np.arange(n), (par.shape[0], 1))
    rows = np.arange(par.shape[0])[:, None]
    for _ in range(n - 1):
        step = par[rows, pos]
        pos = np.where(pos == root, root, step)
    ok = np.all(pos == root, axis=1)
    out = par[ok]
    out.setflags(write=False)
    return out


def brute_force_arborescence(v, root):
    """``(w_root, parent)`` by exhaustive enumeration, ties broken lexicographically."""
    W = _as_matrix(v)
    n = W.shape[0]
    trees = enumerate_trees(n, root)
    if n == 1:
        return 0.0, [-1]
    others = [u for u in range(n) if u != root]
    weights = np.sum(W[np.array(others)[None, :], trees[:, others]], axis=1)
    k = int(np.argmin(weights))
    return float(weights[k]), trees[k].tolist()


# ---------------------------------------------------------------------------
# Tree weights and W
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TreeWeights:
    """``w[i]`` minimal in-tree weight into ``i``; ``normalized = w - min(w)``."""

    w: np.ndarray
    trees: tuple

    @property
    def w_min(self):
        return float(np.min(self.w))

    @property
    def normalized(self):
        return self.w - self.w_min

    @property
    def argmin(self):
        """Families with ``w_i`` within ``ARGMIN_RTOL * max|w|`` of the minimum.

        Cost entries from path optimisation are only accurate to about 1e-8
        relative, so exact comparison would split symmetric ties.
        """
        tol = ARGMIN_RTOL * max(1e-300, float(np.max(np.abs(self.w))))
        return tuple(int(i) for i in np.flatnonzero(self.normalized <= tol))

    def check_triangle(self, v, tol=1e-12):
        """``w_i <= w_j + v_ji`` for all ``i != j``."""
        W = _as_matrix(v)
        n = self.w.size
        return all(self.w[i] <= self.w[j] + W[j, i] + tol for i in range(n) for j in range(n) if i != j)


def tree_weights(v):
    W = _as_matrix(v)
    res = [min_arborescence(W, i) for i in range(W.shape[0])]
    return TreeWeights(np.array([r[0] for r in res]), tuple(tuple(r[1]) for r in res))


def weight_interval(cost_matrix):
    """``(lower, upper)`` bounds on every ``w_i`` from a tagged cost matrix.

    ``upper`` uses the entries as given. ``lower`` keeps the
    minimum-action values as best estimates, and puts 0 on entries tagged
    ``heteroclinic-zero`` (exact) or ``upper-bound`` (no lower information).
    """
    W = _as_matrix(cost_matrix)
    prov = getattr(cost_matrix, "provenance", None)
    if prov is None:
        w = tree_weights(W).w
        return w, w
    lo = W.copy()
    for i, row in enumerate(prov):
        for j, tag in enumerate(row):
            if i != j and tag != "mam":
                lo[i, j] = 0.0
    return tree_weights(lo).w, tree_weights(W).w


def W_eval(costs, tw):
    """``W = min_i (w_i - w + V_i)`` for quasi-potential values ``costs[i] = V_i``."""
    c = np.asarray(costs, dtype=float)
    if c.shape != tw.w.shape or not np.all(np.isfinite(c)):
        raise ValueError("need one finite cost per family")
    return float(np.min(tw.normalized + c))


# ---------------------------------------------------------------------------
# Tree polynomials
# ---------------------------------------------------------------------------


def tree_polynomial_Q(p, i, method="determinant"):
    """``Q_i = sum over T(i) of prod p_mn``.

    ``"determinant"`` uses the matrix-tree theorem: ``Q_i`` is the minor of
    ``diag(row sums) - p`` with row and column ``i`` removed.
    ``"enumeration"`` sums over :func:`enumerate_trees`.
    """
    P = np.array(_as_matrix(p))
    np.fill_diagonal(P, 0.0)
    n = P.shape[0]
    if n == 1:
        return 1.0
    if method == "determinant":
        lap = np.diag(P.sum(axis=1)) - P
        keep = [k for k in range(n) if k != i]
        return float(np.linalg.det(lap[np.ix_(keep, keep)]))
    if method == "enumeration":
        if n > 12:
            raise ValueError("enumeration limited to l <= 12")
        trees = enumerate_trees(n, i)
        others = np.array([u for u in range(n) if u != i])
        return float(np.sum(np.prod(P[others[None, :], trees[:, others]], axis=1)))
    raise ValueError(f"unknown method {method!r}")


def stationary_from_Q(p):
    q = np.array([tree_polynomial_Q(p, i) for i in range(_as_matrix(p).shape[0])])
    return q / q.sum()


def invariant_sandwich(p_low, p_high, a):
    """Per-family ``(lower, upper)`` bounds on the invariant mass of each block.

    Valid when ``p_low[i, j]/a <= P(x, block j) <= a p_high[i, j]`` for
    every ``x`` in block ``i``:
    ``a^{-2(l-1)} Q_i / sum_j Qt_j <= nu_i <= a^{2(l-1)} Qt_i / sum_j Q_j``
    with ``Q`` from ``p_low`` and ``Qt`` from ``p_high``.
    """
    if a < 1:
        raise ValueError("a must be at least 1")
    lo = _as_matrix(p_low)
    hi = _as_matrix(p_high)
    n = lo.shape[0]
    Q = np.array([tree_polynomial_Q(lo, i) for i in range(n)])
    Qt = np.array([tree_polynomial_Q(hi, i) for i in range(n)])
    f = float(a) ** (2 * (n - 1))
    return Q / (f * Qt.sum()), f * Qt / Q.sum()


def tree_report(v, file=None):
    """JSON-ready list of ``{root, weight, edges: [(child, parent, weight)]}``."""
    W = _as_matrix(v)
    tw = tree_weights(W)
    lower, _ = weight_interval(v)
    rows = []
    for i, parent in enumerate(tw.trees):
        edges = [(m, p, float(W[m, p])) for m, p in enumerate(parent) if p >= 0]
        rows.append({"root": i, "weight": float(tw.w[i]), "edges": edges,
                     "weight_interval": [float(lower[i]), float(tw.w[i])]})
    if file is not None:
        with open(file, "w") as fh:
            json.dump(rows, fh, indent=2)
    return rows
