"""Dynamical large-deviation functionals on discretised density paths.

Time is staggered. A path has slices ``rho_0..rho_K`` at ``t_k = k dt``;
the auxiliary field ``H`` lives on the ``K`` intervals, where the path is
represented by ``rho_m = (rho_k + rho_{k+1})/2`` and its drift defect by

    w = (rho_{k+1} - rho_k)/dt - (1/2) Lap rho_m.

On each interval ``H`` maximises the strictly concave

    L(G) = h sum_j [G w - B (e^G - 1) - D (e^-G - 1)] - (h/2) sum_j chi_{j+1/2} (D+ G)_j^2,

with ``B, D, chi`` evaluated at ``rho_m``, ``chi_{j+1/2}`` the average of
neighbours and ``D+`` the forward difference. Its Euler-Lagrange equation is
``-div(chi grad H) + B e^H - D e^-H = w`` and ``I_T = sum_k dt L_k(H_k)``,
which coincides with the explicit formula in ``H``. The test-function
functional ``J`` uses the same grid (summation by parts is exact), so
``J(G) <= I_T`` holds exactly, with equality when ``G`` equals ``H``.
"""

from dataclasses import dataclass
import json
import math

import numpy as np

from .linalg import forward_difference, laplacian, solve_cyclic_tridiagonal

__all__ = [
    "TestField",
    "NewtonError",
    "energy_QT",
    "energy_E",
    "J_functional",
    "solve_H",
    "rate_I",
    "rate_and_gradient",
    "pointwise_maximizer",
    "pointwise_objective",
    "rate_report",
]


class NewtonError(RuntimeError):
    """Newton iteration for H stalled; ``trace`` holds the per-iteration residual and damping."""

    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


@dataclass(frozen=True, eq=False)
class TestField:
    """Test function values on a path's grid.

    ``location`` is ``"nodes"`` (shape ``(K+1, M)``, at the slices) or
    ``"intervals"`` (shape ``(K, M)``, at interval midpoints, as ``H`` is).
    """

    __test__ = False  # not a pytest class

    dt: float
    values: np.ndarray
    location: str = "intervals"

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or not np.all(np.isfinite(v)):
            raise ValueError("test field must be a finite 2-d array")
        if self.location not in ("nodes", "intervals"):
            raise ValueError("location must be 'nodes' or 'intervals'")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def midpoints(self):
        v = self.values
        return 0.5 * (v[1:] + v[:-1]) if self.location == "nodes" else v


# ---------------------------------------------------------------------------
# Discrete pieces
# ---------------------------------------------------------------------------


def _pieces(path, poly):
    s = path.slices
    h = 1.0 / path.grid_size
    rm = 0.5 * (s[1:] + s[:-1])
    w = (s[1:] - s[:-1]) / path.dt - 0.5 * laplacian(rm, h)
    chi = rm * (1.0 - rm)
    chi_half = 0.5 * (chi + np.roll(chi, -1, axis=-1))
    return rm, w, poly.B(rm), poly.D(rm), chi_half, h


def _objective(G, w, B, D, chi_half, h):
    """Per-interval ``L(G)``, shape ``(K,)``."""
    grad = forward_difference(G, h)
    eG = np.exp(G)
    return h * np.sum(G * w - B * (eG - 1.0) - D * (1.0 / eG - 1.0) - 0.5 * chi_half * grad**2, axis=-1)


def _residual(G, w, B, D, chi_half, h):
    """``-div(chi grad G) + B e^G - D e^-G - w``."""
    flux = chi_half * forward_difference(G, h)
    div = (flux - np.roll(flux, 1, axis=-1)) / h
    return -div + B * np.exp(G) - D * np.exp(-G) - w


def _inside(path):
    s = path.slices
    return bool(np.all(s > 0.0) and np.all(s < 1.0))


# ---------------------------------------------------------------------------
# Public functionals
# ---------------------------------------------------------------------------


def energy_QT(path):
    """Trapezoidal ``int_0^T ||grad_M rho_t||_2^2 dt`` with forward differences."""
    g2 = np.mean(forward_difference(path.slices, 1.0 / path.grid_size) ** 2, axis=-1)
    if path.n_steps == 0:
        return 0.0
    return float(path.dt * (g2.sum() - 0.5 * (g2[0] + g2[-1])))


def energy_E(path):
    """Trapezoidal ``int_0^T int |grad rho|^2 / chi(rho)`` (chi at the bond average)."""
    s = path.slices
    h = 1.0 / path.grid_size
    chi = s * (1.0 - s)
    chi_half = 0.5 * (chi + np.roll(chi, -1, axis=-1))
    g2 = np.mean(forward_difference(s, h) ** 2 / chi_half, axis=-1)
    if path.n_steps == 0:
        return 0.0
    return float(path.dt * (g2.sum() - 0.5 * (g2[0] + g2[-1])))


def pointwise_objective(w, rho, G, poly):
    """``Phi(w, rho, G) = w G - B(rho)(e^G - 1) - D(rho)(e^-G - 1)``."""
    return w * G - poly.B(rho) * (np.exp(G) - 1.0) - poly.D(rho) * (np.exp(-G) - 1.0)


def pointwise_maximizer(w, rho, poly):
    """``argmax_G Phi = log[(w + sqrt(w^2 + 4BD)) / (2B)]``, evaluated without cancellation."""
    w = np.asarray(w, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0.0) or np.any(rho >= 1.0):
        raise ValueError("rho must lie in (0, 1)")
    B, D = poly.B(rho), poly.D(rho)
    root = np.sqrt(w * w + 4.0 * B * D)
    # for w < 0 use (w + root)/(2B) = 2D/(root - w)
    out = np.where(w >= 0.0, np.log((w + root) / (2.0 * B)), np.log(2.0 * D / (root - w)))
    return float(out) if out.ndim == 0 else out


def solve_H(path, poly, *, tol=1e-10, max_iter=100, max_halvings=60, start=None):
    """Newton solve for ``H`` on every interval of ``path`` (batched).

    Returns a :class:`TestField` on intervals. Raises ``ValueError`` when the
    path touches {0, 1} and :class:`NewtonError` on stagnation.
    """
    if not _inside(path):
        raise ValueError("path must lie strictly inside (0, 1)")
    if path.n_steps < 1:
        raise ValueError("path needs at least two slices")
    _, w, B, D, chi_half, h = _pieces(path, poly)
    if start is None:
        G = np.zeros_like(w)
    else:
        G = np.array(np.broadcast_to(start, w.shape), dtype=float)
    inv_h2 = 1.0 / (h * h)
    lower = -np.roll(chi_half, 1, axis=-1) * inv_h2
    upper = -chi_half * inv_h2
    diag_lap = -(lower + upper)
    obj = _objective(G, w, B, D, chi_half, h)
    # rounding level of L per slice
    slack = 1e-13 * h * np.sum(B + D + np.abs(w), axis=-1)
    trace = []
    for it in range(max_iter):
        r = _residual(G, w, B, D, chi_half, h)
        rn = np.max(np.abs(r), axis=-1)
        err = float(rn.max())
        if err < tol:
            return TestField(path.dt, G, "intervals")
        eG = np.exp(G)
        step = solve_cyclic_tridiagonal(lower, diag_lap + B * eG + D / eG, upper, -r)
        lam = np.ones(G.shape[0])
        todo = rn >= tol
        new_G = G.copy()
        new_obj = obj.copy()
        halvings = 0
        while True:
            idx = np.flatnonzero(todo)
            cand = G[idx] + lam[idx, None] * step[idx]
            args = (w[idx], B[idx], D[idx], chi_half[idx], h)
            c_obj = _objective(cand, *args)
            c_rn = np.max(np.abs(_residual(cand, *args)), axis=-1)
            # ascent on the concave objective, or (once the objective is flat
            # to rounding) a smaller residual
            ok = (c_obj > obj[idx]) | ((c_obj >= obj[idx] - slack[idx] - 1e-13 * np.abs(obj[idx]))
                                      & (c_rn < rn[idx]))
            new_G[idx[ok]] = cand[ok]
            new_obj[idx[ok]] = c_obj[ok]
            todo[idx[ok]] = False
            if not todo.any():
                break
            halvings += 1
            if halvings > max_halvings:
                break
            lam[todo] *= 0.5
        trace.append((it, err, float(lam.min())))
        if halvings > max_halvings and np.array_equal(new_G, G):
            break
        G, obj = new_G, new_obj
    r = _residual(G, w, B, D, chi_half, h)
    err = float(np.max(np.abs(r)))
    if err < tol:
        return TestField(path.dt, G, "intervals")
    raise NewtonError(f"Newton for H stalled at residual {err:.3g}", trace)


def _explicit_rate(H, B, D, chi_half, h, dt):
    grad = forward_difference(H, h)
    eH = np.exp(H)
    dens = (0.5 * chi_half * grad**2 + B * (1.0 - eH + H * eH)
            + D * (1.0 - 1.0 / eH - H / eH))
    return float(dt * h * np.sum(dens))


def rate_I(path, poly, *, H=None, **newton_opts):
    """``I_T`` from the explicit formula with ``H`` from :func:`solve_H`; ``inf`` off (0, 1)."""
    if not _inside(path):
        return math.inf
    if path.n_steps < 1:
        return 0.0
    if H is None:
        H = solve_H(path, poly, **newton_opts)
    _, _, B, D, chi_half, h = _pieces(path, poly)
    return _explicit_rate(H.values, B, D, chi_half, h, path.dt)


def J_functional(path, G, poly):
    """Discrete ``J_{T,G}``; ``G`` on nodes or on intervals (see module docstring)."""
    Gm = G.midpoints()
    if Gm.shape != (path.n_steps, path.grid_size):
        raise ValueError("test field does not match the path discretisation")
    s = path.slices
    h = 1.0 / path.grid_size
    dt = path.dt
    rm, _, B, D, chi_half, _ = _pieces(path, poly)
    if G.location == "nodes":
        Gn = G.values
        boundary = h * (np.sum(s[-1] * Gn[-1]) - np.sum(s[0] * Gn[0]))
        dGdt = (Gn[1:] - Gn[:-1]) / dt
    else:
        # interval-located G is extended as piecewise constant in time: the
        # boundary terms and d_t G collapse into the increments of rho
        boundary = h * np.sum((s[1:] - s[:-1]) * Gm)
        dGdt = np.zeros_like(Gm)
    transport = dt * h * np.sum(rm * (dGdt + 0.5 * laplacian(Gm, h)))
    mob = dt * h * np.sum(0.5 * chi_half * forward_difference(Gm, h) ** 2)
    eG = np.exp(Gm)
    react = dt * h * np.sum(B * (eG - 1.0) + D * (1.0 / eG - 1.0))
    return float(boundary - transport - mob - react)


def rate_and_gradient(path, poly, **newton_opts):
    """``(I_T, dI/d slices, H)``; the gradient is exact for the discrete ``I_T`` (envelope theorem)."""
    H = solve_H(path, poly, **newton_opts)
    Hv = H.values
    rm, w, B, D, chi_half, h = _pieces(path, poly)
    dt = path.dt
    value = _explicit_rate(Hv, B, D, chi_half, h, dt)
    eH = np.exp(Hv)
    a = forward_difference(Hv, h) ** 2
    dchi = 1.0 - 2.0 * rm
    # d L_k / d rho_m, then split equally onto the two end slices
    d_mid = -(poly.B.deriv()(rm) * (eH - 1.0) + poly.D.deriv()(rm) * (1.0 / eH - 1.0))
    d_mid -= 0.5 * dchi * 0.5 * (a + np.roll(a, 1, axis=-1))
    lap_H = laplacian(Hv, h)
    d_next = dt * h * (Hv / dt - 0.25 * lap_H + 0.5 * d_mid)
    d_prev = dt * h * (-Hv / dt - 0.25 * lap_H + 0.5 * d_mid)
    grad = np.zeros_like(path.slices)
    grad[1:] += d_next
    grad[:-1] += d_prev
    return value, grad, H


def rate_report(path, poly, **newton_opts):
    """Dict ``{T, dt, M, I_T, Q_T, max_residual}``."""
    if _inside(path):
        H = solve_H(path, poly, **newton_opts)
        _, w, B, D, chi_half, h = _pieces(path, poly)
        max_res = float(np.max(np.abs(_residual(H.values, w, B, D, chi_half, h))))
        val = rate_I(path, poly, H=H)
    else:
        max_res, val = math.nan, math.inf
    return {"T": path.horizon, "dt": path.dt, "M": path.grid_size, "I_T": val,
            "Q_T": energy_QT(path), "max_residual": max_res}


def write_rate_report(report, file):
    with open(file, "w") as fh:
        json.dump(report, fh, indent=2)
