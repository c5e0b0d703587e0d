"""Upper estimates of the quasi-potential and the inter-family cost matrix.

Every number here is the rate functional of an explicit discrete path, so
it bounds the quasi-potential from above (up to discretisation error).
Zero entries of the cost matrix come from traced heteroclinic connections.
"""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.optimize import minimize

from .elliptic import heteroclinic_edges
from .ldp import NewtonError, rate_and_gradient, rate_I
from .linalg import fourier_resample, fourier_shift
from .pde import DensityPath, heat_semigroup, hydro_solve

__all__ = [
    "PROVENANCE",
    "CostMatrix",
    "MAMResult",
    "interpolation_path",
    "interpolation_cost",
    "reversed_relaxation_cost",
    "mam_minimize",
    "v_matrix",
    "translation_cost_check",
]

PROVENANCE = ("heteroclinic-zero", "mam", "upper-bound")
SCHEDULES = {
    "linear": lambda s: s,
    "quadratic": lambda s: s * s,
}
DEFAULT_T_GRID = (1.0, 2.0, 4.0, 8.0, 16.0)
EDGE = 1e-9


@dataclass(frozen=True, eq=False)
class CostMatrix:
    """``values[i, j]`` estimates ``v_ij``; ``provenance[i][j]`` says where it came from."""

    values: np.ndarray
    provenance: tuple
    labels: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("cost matrix must be square")
        if np.any(np.diag(v) != 0.0) or np.any(v < 0.0) or not np.all(np.isfinite(v)):
            raise ValueError("need zero diagonal and finite nonnegative entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        prov = tuple(tuple(row) for row in self.provenance)
        if len(prov) != v.shape[0] or any(len(r) != v.shape[0] for r in prov):
            raise ValueError("provenance must match the matrix shape")
        for i, row in enumerate(prov):
            for j, tag in enumerate(row):
                if i != j and tag not in PROVENANCE:
                    raise ValueError(f"unknown provenance {tag!r}")
        object.__setattr__(self, "provenance", prov)

    @property
    def size(self):
        return self.values.shape[0]

    def to_dict(self):
        return {"labels": list(self.labels), "values": self.values.tolist(),
                "provenance": [list(r) for r in self.provenance],
                "note": "numerical upper estimates except heteroclinic-zero entries"}

    def to_json(self, file):
        with open(file, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def from_json(cls, file):
        with open(file) as fh:
            d = json.load(fh)
        return cls(np.array(d["values"]), d["provenance"], tuple(d.get("labels", ())))


@dataclass
class MAMResult:
    path: DensityPath
    value: float
    T: float
    converged: bool
    values_by_T: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.path, self.value))


def _values(x, m):
    v = x.values if hasattr(x, "values") else np.asarray(x, dtype=float)
    if v.size == m:
        return np.asarray(v, dtype=float)
    if np.ptp(v) == 0.0:
        return np.full(m, v[0])
    return fourier_resample(v, m)


def _n_slices(T, per_unit):
    return max(8, int(math.ceil(per_unit * T)))


# ---------------------------------------------------------------------------
# Constructive bounds
# ---------------------------------------------------------------------------


def interpolation_path(source, target, schedule="linear", T=1.0, m=32, per_unit=16):
    """``rho_t = (1 - alpha(t/T)) rho_src + alpha(t/T) rho_tgt`` on ``[0, T]``."""
    alpha = SCHEDULES[schedule] if isinstance(schedule, str) else schedule
    a = _values(source, m)
    b = _values(target, m)
    k = _n_slices(T, per_unit)
    s = alpha(np.linspace(0.0, 1.0, k + 1))
    return DensityPath(T / k, (1.0 - s)[:, None] * a + s[:, None] * b)


def reversed_relaxation_cost(gamma, T, poly, *, dt=None, m=None, return_path=False):
    """Cost of the time reversal of the hydrodynamic path started at ``gamma``.

    The reversed path runs from ``rho(T)`` back to ``gamma``; it bounds the
    cost of creating ``gamma`` from ``rho(T)``.
    """
    if T <= 0:
        raise ValueError("T must be positive")
    g = _values(gamma, m or np.size(getattr(gamma, "values", gamma)))
    if dt is None:
        dt = min(1e-3, 0.4 / poly.lipschitz_F)
    n = max(1, int(math.ceil(T / dt)))
    fwd = hydro_solve(g, n * dt, n * dt / n, poly, save_every=1)
    rev = DensityPath(fwd.dt, fwd.slices[::-1])
    cost = rate_I(rev, poly)
    return (cost, rev) if return_path else cost


def interpolation_cost(source, target, poly, schedule="linear", *, T=1.0, m=32, per_unit=16,
                       smooth_time=0.0):
    """Rate of the interpolation path, an upper bound on ``V_source(target)``.

    With ``smooth_time > 0`` the path ends at the hydro-smoothed target and
    the cost of the reversed relaxation back to the raw target is added.
    """
    tgt = _values(target, m)
    extra = 0.0
    if smooth_time > 0.0:
        extra = reversed_relaxation_cost(tgt, smooth_time, poly)
        dt = min(1e-3, 0.4 / poly.lipschitz_F, smooth_time)
        n = max(1, int(math.ceil(smooth_time / dt)))
        tgt = hydro_solve(tgt, n * (smooth_time / n), smooth_time / n, poly, save_every=n).slices[-1]
    path = interpolation_path(source, tgt, schedule, T, m, per_unit)
    return rate_I(path, poly) + extra


# ---------------------------------------------------------------------------
# Minimum action
# ---------------------------------------------------------------------------


def _mam_one(init, poly, opts):
    k1, m = init.slices.shape
    a, b = init.slices[0], init.slices[-1]
    dt = init.dt
    best = {"x": init.slices[1:-1].ravel().copy(), "f": math.inf}

    def fun(x):
        s = np.vstack([a, x.reshape(k1 - 2, m), b])
        try:
            val, grad, _ = rate_and_gradient(DensityPath(dt, s), poly)
        except NewtonError:
            return 1e10, np.zeros_like(x)
        if val < best["f"]:
            best["f"], best["x"] = val, x.copy()
        return val, grad[1:-1].ravel()

    res = minimize(fun, best["x"], jac=True, method="L-BFGS-B",
                   bounds=[(EDGE, 1.0 - EDGE)] * best["x"].size,
                   options={"maxiter": opts.get("maxiter", 2000), "ftol": opts.get("ftol", 1e-13),
                            "gtol": opts.get("gtol", 1e-9), "maxcor": 20})
    s = np.vstack([a, best["x"].reshape(k1 - 2, m), b])
    return DensityPath(dt, s), best["f"], bool(res.success)


def _initial_paths(source, target, T, m, per_unit):
    out = []
    for sched in SCHEDULES:
        out.append(interpolation_path(source, target, sched, T, m, per_unit))
    lin = out[0].slices.copy()
    lin[1:-1] = [heat_semigroup(row, 1e-3) for row in lin[1:-1]]
    out.append(DensityPath(out[0].dt, np.clip(lin, EDGE, 1.0 - EDGE)))
    return out


def mam_minimize(source, target, poly, T_grid=DEFAULT_T_GRID, *, m=32, per_unit=16, init=None,
                 **opts):
    """Minimise the discrete ``I_T`` over paths from ``source`` to ``target``.

    For each ``T`` the interior slices are optimised by L-BFGS-B with the
    exact discrete gradient, starting from the best of the linear,
    quadratic and heat-smoothed linear interpolations (or from ``init``,
    resampled in time, when given). Returns the best result over
    ``T_grid``; ``values_by_T`` keeps every ``T``.
    """
    best = None
    by_T = {}
    all_ok = True
    for T in T_grid:
        cands = _initial_paths(source, target, T, m, per_unit)
        if init is not None:
            k = cands[0].n_steps
            src_t = np.linspace(0.0, 1.0, init.n_steps + 1)
            new_t = np.linspace(0.0, 1.0, k + 1)
            sl = np.array([np.interp(new_t, src_t, init.slices[:, j]) for j in range(init.grid_size)]).T
            sl = np.array([_values(row, m) for row in sl])
            cands.append(DensityPath(T / k, np.clip(sl, EDGE, 1.0 - EDGE)))
        start = min(cands, key=lambda p: rate_I(p, poly))
        path, val, ok = _mam_one(start, poly, opts)
        by_T[float(T)] = val
        all_ok &= ok
        if best is None or val < best.value:
            best = MAMResult(path, val, float(T), ok)
    best.values_by_T = by_T
    best.converged = all_ok
    return best


# ---------------------------------------------------------------------------
# Cost matrix
# ---------------------------------------------------------------------------


def v_matrix(census, poly, *, T_grid=DEFAULT_T_GRID, m=32, per_unit=16, edges=None,
             positivity_threshold=1e-3, **opts):
    """Assemble ``v_ij`` for a census.

    Traced heteroclinic edges are certified zeros. Other entries take the
    minimum of the minimum-action value and both interpolation bounds, then
    the concatenation closure ``v_ij <= v_ik + v_kj`` is applied (entries
    lowered by it are tagged ``upper-bound``).
    """
    profiles = list(census)
    n = len(profiles)
    if n == 0:
        raise ValueError("empty census")
    if edges is None:
        edges = heteroclinic_edges(census, poly) if n > 1 else set()
    vals = np.zeros((n, n))
    prov = [["" for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if (i, j) in edges:
                vals[i, j], prov[i][j] = 0.0, "heteroclinic-zero"
                continue
            src, tgt = profiles[i], profiles[j]
            mam = mam_minimize(src, tgt, poly, T_grid, m=m, per_unit=per_unit, **opts)
            interp = min(interpolation_cost(src, tgt, poly, s, T=T, m=m, per_unit=per_unit)
                         for s in SCHEDULES for T in T_grid)
            if mam.value <= interp:
                vals[i, j], prov[i][j] = mam.value, "mam"
            else:
                vals[i, j], prov[i][j] = interp, "upper-bound"
    for k in range(n):
        for i in range(n):
            for j in range(n):
                if i != j and vals[i, k] + vals[k, j] < vals[i, j]:
                    vals[i, j] = vals[i, k] + vals[k, j]
                    if prov[i][j] != "heteroclinic-zero":
                        prov[i][j] = "upper-bound"
    for i, p in enumerate(profiles):
        if p.kind == "stable-constant":
            for j in range(n):
                if j != i and vals[i, j] <= positivity_threshold:
                    raise AssertionError(f"v[{i},{j}] = {vals[i, j]:.3g} out of a stable well")
    labels = tuple(census.labels()) if hasattr(census, "labels") else ()
    return CostMatrix(vals, prov, labels)


# ---------------------------------------------------------------------------
# Moving along a translation family
# ---------------------------------------------------------------------------


def translation_cost_check(profile, speed, poly, *, theta0=0.5, m=64, per_unit=40):
    """Rate of ``rho(t, theta) = phi(theta + speed t)`` for ``t`` in ``[0, theta0/speed]``."""
    if profile.is_constant:
        raise ValueError("translation path of a constant profile is trivial")
    if speed <= 0:
        raise ValueError("speed must be positive")
    phi = _values(profile, m)
    T = theta0 / speed
    k = _n_slices(theta0, per_unit * m / 8)
    t = np.linspace(0.0, T, k + 1)
    slices = np.array([fourier_shift(phi, speed * tk) for tk in t])
    return rate_I(DensityPath(T / k, slices), poly)
