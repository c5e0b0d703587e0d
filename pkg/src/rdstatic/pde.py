"""Hydrodynamic equation ``d_t rho = (1/2) rho'' + F(rho)`` on the unit torus.

The grid solver is IMEX: implicit periodic second difference, explicit
reaction. Because ``x -> x + dt F(x)`` is increasing when
``dt * C_F < 1`` and the implicit diffusion step is a positive,
constant-preserving map, one step obeys the discrete comparison bound

    m_k + dt F(m_k) <= rho^{k+1} <= M_k + dt F(M_k),

with ``m_k``, ``M_k`` the extremes of ``rho^k``. ``hydro_solve`` asserts it
after every step.
"""

from dataclasses import dataclass
import math

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp

from .linalg import forward_difference

__all__ = [
    "DensityField",
    "DensityPath",
    "MaxPrincipleError",
    "RelaxationError",
    "hydro_solve",
    "ode_flow",
    "relax_to_stationary",
    "heat_semigroup",
    "mild_residual",
    "l2_norm",
    "energy_profile",
    "dump_path_csv",
    "load_path_csv",
]

_RANGE_TOL = 1e-12


class MaxPrincipleError(RuntimeError):
    """A hydro step left the comparison envelope; ``dt`` is too large."""


class RelaxationError(RuntimeError):
    """The flow did not settle before the time cap."""


@dataclass(frozen=True, eq=False)
class DensityField:
    """Samples ``rho(theta_j)``, ``theta_j = j/M``, with values in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size == 0:
            raise ValueError("empty density field")
        if not np.all(np.isfinite(v)) or v.min() < -_RANGE_TOL or v.max() > 1.0 + _RANGE_TOL:
            raise ValueError("density values must lie in [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def grid_size(self):
        return self.values.size

    @property
    def theta(self):
        return np.arange(self.grid_size) / self.grid_size

    @classmethod
    def constant(cls, value, m=256):
        return cls(np.full(m, float(value)))

    @classmethod
    def from_function(cls, f, m=256):
        return cls(f(np.arange(m) / m))


@dataclass(frozen=True, eq=False)
class DensityPath:
    """``slices[k] = rho(k dt, .)`` on a common grid, ``k = 0..K``."""

    dt: float
    slices: np.ndarray

    def __post_init__(self):
        s = np.array(self.slices, dtype=float)
        if s.ndim != 2 or s.shape[0] < 1:
            raise ValueError("slices must be a (K+1, M) array")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "slices", s)

    @property
    def n_steps(self):
        return self.slices.shape[0] - 1

    @property
    def grid_size(self):
        return self.slices.shape[1]

    @property
    def horizon(self):
        return self.dt * self.n_steps

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)

    def field(self, k):
        return DensityField(self.slices[k])

    @property
    def initial(self):
        return self.field(0)

    @property
    def final(self):
        return self.field(-1)


def l2_norm(values, axis=-1):
    """``L^2(T)`` norm of grid samples (rectangle rule)."""
    v = np.asarray(values, dtype=float)
    return np.sqrt(np.mean(v * v, axis=axis))


def _as_values(x):
    return x.values if isinstance(x, DensityField) else np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# IMEX stepping
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _horner(c, x):
    acc = 0.0
    for i in range(c.shape[0] - 1, -1, -1):
        acc = acc * x + c[i]
    return acc


@njit(cache=True, nogil=True)
def _imex_run(rho, n_steps, save_every, dt, h, fcoef, tol, out, stop_tol):
    """Step in place. Returns (steps_done, status, lo_bound, hi_bound, lo, hi).

    status 0 = finished, 1 = comparison bound violated, 2 = stationary
    (step change below ``stop_tol * dt`` in L^2).
    """
    m = rho.shape[0]
    off = -0.5 * dt / (h * h)
    dg = 1.0 + dt / (h * h)
    # corner-corrected Thomas factorisation of the circulant matrix
    gamma = -dg
    alpha = off
    beta = off
    bb = np.full(m, dg)
    bb[0] = dg - gamma
    bb[m - 1] = dg - alpha * beta / gamma
    cp = np.empty(m)
    den = np.empty(m)
    den[0] = bb[0]
    cp[0] = off / den[0]
    for i in range(1, m):
        den[i] = bb[i] - off * cp[i - 1]
        cp[i] = off / den[i]
    z = np.empty(m)
    u = np.zeros(m)
    u[0] = gamma
    u[m - 1] = alpha
    z[0] = u[0] / den[0]
    for i in range(1, m):
        z[i] = (u[i] - off * z[i - 1]) / den[i]
    for i in range(m - 2, -1, -1):
        z[i] -= cp[i] * z[i + 1]
    zden = 1.0 + z[0] + beta * z[m - 1] / gamma

    rhs = np.empty(m)
    y = np.empty(m)
    n_saved = 0
    if save_every > 0:
        out[0, :] = rho
        n_saved = 1
    for k in range(n_steps):
        lo = rho[0]
        hi = rho[0]
        for i in range(m):
            v = rho[i]
            if v < lo:
                lo = v
            if v > hi:
                hi = v
            rhs[i] = v + dt * _horner(fcoef, v)
        y[0] = rhs[0] / den[0]
        for i in range(1, m):
            y[i] = (rhs[i] - off * y[i - 1]) / den[i]
        for i in range(m - 2, -1, -1):
            y[i] -= cp[i] * y[i + 1]
        fact = (y[0] + beta * y[m - 1] / gamma) / zden
        lo_b = lo + dt * _horner(fcoef, lo)
        hi_b = hi + dt * _horner(fcoef, hi)
        new_lo = math.inf
        new_hi = -math.inf
        change = 0.0
        for i in range(m):
            v = y[i] - fact * z[i]
            change += (v - rho[i]) ** 2
            rho[i] = v
            if v < new_lo:
                new_lo = v
            if v > new_hi:
                new_hi = v
        if new_lo < lo_b - tol or new_hi > hi_b + tol:
            return k + 1, 1, lo_b, hi_b, new_lo, new_hi
        if save_every > 0 and (k + 1) % save_every == 0:
            out[n_saved, :] = rho
            n_saved += 1
        if stop_tol > 0.0 and math.sqrt(change / m) < stop_tol * dt:
            return k + 1, 2, lo_b, hi_b, new_lo, new_hi
    return n_steps, 0, 0.0, 0.0, 0.0, 0.0


def _check_dt(dt, poly):
    if not dt > 0:
        raise ValueError("dt must be positive")
    if dt * 2.0 * poly.lipschitz_F > 1.0 + 1e-12:
        raise ValueError(f"dt={dt} exceeds 1/(2 C_F) = {0.5 / poly.lipschitz_F}")


def hydro_solve(gamma, T, dt, poly, *, save_every=1, tol_per_time=1e-8):
    """IMEX solve of the hydrodynamic equation up to time ``T``.

    ``rho^{k+1} = (I - (dt/2) Lap_M)^{-1} (rho^k + dt F(rho^k))`` with the
    periodic second difference ``Lap_M``. The comparison bound is checked
    after each step with tolerance ``tol_per_time * dt``; a breach raises
    :class:`MaxPrincipleError`.

    Returns a :class:`DensityPath` holding every ``save_every``-th slice
    (``T/dt`` must be a multiple of ``save_every``).
    """
    rho = _as_values(gamma).astype(float).copy()
    m = rho.size
    if m < 16:
        raise ValueError("grid size must be at least 16")
    _check_dt(dt, poly)
    n_steps = int(round(T / dt))
    if abs(n_steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError("T must be an integer multiple of dt")
    save_every = int(save_every)
    if save_every < 1 or n_steps % save_every:
        raise ValueError("save_every must divide the number of steps")
    out = np.empty((n_steps // save_every + 1, m))
    fcoef = np.ascontiguousarray(poly.F.coef, dtype=float)
    done, status, lo_b, hi_b, lo, hi = _imex_run(
        rho, n_steps, save_every, float(dt), 1.0 / m, fcoef, tol_per_time * dt, out, 0.0)
    if status == 1:
        raise MaxPrincipleError(
            f"step {done} (t={done * dt:.6g}): range [{lo:.17g}, {hi:.17g}] "
            f"outside comparison envelope [{lo_b:.17g}, {hi_b:.17g}]")
    return DensityPath(dt * save_every, out)


def ode_flow(x0, t, poly, rtol=1e-10, atol=1e-12):
    """Solution of ``x' = F(x)`` at time(s) ``t``; vectorised over ``x0``.

    Scalar ``t`` gives an array shaped like ``x0``; array ``t`` (sorted,
    nonnegative) appends a trailing time axis.
    """
    x0 = np.asarray(x0, dtype=float)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    F = poly.F
    flat = x0.ravel()
    if ts[-1] == 0.0:
        res = np.repeat(flat[:, None], ts.size, axis=1)
    else:
        sol = solve_ivp(lambda _, x: F(x), (0.0, ts[-1]), flat, method="DOP853", t_eval=ts,
                        rtol=rtol, atol=atol)
        if not sol.success:
            raise RuntimeError(sol.message)
        res = sol.y
    if np.ndim(t) == 0:
        out = res[:, -1].reshape(x0.shape)
        return float(out) if out.ndim == 0 else out
    return res.reshape(x0.shape + (ts.size,))


def relax_to_stationary(gamma, poly, tol=1e-9, *, dt=None, t_cap=400.0, census=None,
                        classify=True):
    """Run the flow until ``||rho^{k+1} - rho^k||_2 < tol * dt``.

    A start whose stationary residual is already below ``tol`` is returned
    as is (relaxation time 0).

    Returns ``(profile, relaxation_time)``. With ``classify`` the limit is
    Newton-polished and labelled by :func:`rdstatic.elliptic.identify_profile`
    (against ``census`` when given); otherwise ``profile`` is the raw
    :class:`DensityField`.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rho = _as_values(gamma).astype(float).copy()
    if dt is None:
        dt = min(1e-2, 0.4 / poly.lipschitz_F)
    _check_dt(dt, poly)
    if classify:
        from .elliptic import identify_profile, residual

        # already stationary (spectral residual): the grid flow would only
        # drift along unstable directions by the discretisation mismatch
        if residual(rho, poly) < tol:
            return identify_profile(DensityField(rho), poly, census=census), 0.0
    fcoef = np.ascontiguousarray(poly.F.coef, dtype=float)
    dummy = np.empty((1, rho.size))
    chunk = max(1, int(round(1.0 / dt)))
    t = 0.0
    while t < t_cap:
        done, status, lo_b, hi_b, lo, hi = _imex_run(
            rho, chunk, 0, float(dt), 1.0 / rho.size, fcoef, 1e-8 * dt, dummy, tol)
        t += done * dt
        if status == 1:
            raise MaxPrincipleError(f"t={t:.6g}: range [{lo}, {hi}] outside [{lo_b}, {hi_b}]")
        if status == 2:
            field = DensityField(np.clip(rho, 0.0, 1.0))
            if not classify:
                return field, t
            return identify_profile(field, poly, census=census), t
    raise RelaxationError(f"no stationary limit within t_cap={t_cap}")


# ---------------------------------------------------------------------------
# Semigroup, mild form, energy
# ---------------------------------------------------------------------------


def _heat_symbol(m, t):
    k = np.fft.rfftfreq(m, d=1.0 / m)
    return np.exp(-2.0 * np.pi**2 * np.multiply.outer(np.asarray(t, dtype=float), k**2))


def heat_semigroup(gamma, t):
    """``P_t gamma``: Fourier mode ``k`` damped by ``exp(-2 pi^2 k^2 t)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    v = _as_values(gamma)
    out = np.fft.irfft(np.fft.rfft(v) * _heat_symbol(v.size, t), n=v.size)
    return DensityField(np.clip(out, 0.0, 1.0)) if isinstance(gamma, DensityField) else out


def mild_residual(path, poly):
    """``||rho_T - P_T rho_0 - int_0^T P_{T-s} F(rho_s) ds||_2`` by the trapezoid rule."""
    s = path.slices
    m = path.grid_size
    T = path.horizon
    times = path.times
    hat_F = np.fft.rfft(poly.F(s), axis=-1)
    damp = _heat_symbol(m, T - times)
    w = np.full(times.size, path.dt)
    w[0] = w[-1] = 0.5 * path.dt
    duhamel = np.fft.irfft(np.sum(w[:, None] * damp * hat_F, axis=0), n=m)
    free = np.fft.irfft(np.fft.rfft(s[0]) * _heat_symbol(m, T), n=m)
    return float(l2_norm(s[-1] - free - duhamel))


def energy_profile(path):
    """``||rho_t||_2^2 + sum_k dt ||grad rho_k||_2^2`` along the path (forward differences)."""
    s = path.slices
    grad2 = l2_norm(forward_difference(s, 1.0 / path.grid_size)) ** 2
    acc = np.concatenate([[0.0], np.cumsum(path.dt * grad2[1:])])
    return l2_norm(s) ** 2 + acc


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def dump_path_csv(path, file):
    """Header ``t,theta_0,...,theta_{M-1}``; one row per slice."""
    m = path.grid_size
    header = "t," + ",".join(f"theta_{j}" for j in range(m))
    data = np.column_stack([path.times, path.slices])
    np.savetxt(file, data, delimiter=",", header=header, comments="", fmt="%.17g")


def load_path_csv(file):
    data = np.loadtxt(file, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return DensityPath(dt, data[:, 1:])
