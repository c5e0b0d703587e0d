"""Stationary solutions of ``(1/2) phi'' + F(phi) = 0`` on the unit torus.

Constants are the zeros of F. Non-constant solutions are periodic orbits
of the Hamiltonian system ``rho'' = -U'(rho)``, ``U = -2V``, around the
maxima of V; an orbit closes into an ``m``-periodic profile on the torus
when its period equals ``1/m``. Periods come from the time map, profiles
from shooting, and every profile is Newton-polished on a Fourier spectral
grid where the residual is measured.
"""

from dataclasses import dataclass, field as dc_field
import json
import math
from pathlib import Path

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.linalg import eigh, solve
from scipy.optimize import brentq

from .linalg import fourier_resample, fourier_shift, spectral_derivative, spectral_second_derivative_matrix
from .pde import DensityField, relax_to_stationary
from .reaction import classify_wells

__all__ = [
    "StationaryProfile",
    "Census",
    "KINDS",
    "constant_solutions",
    "time_map",
    "admissible_periods",
    "nonconstant_solutions",
    "build_census",
    "linearization",
    "linearization_spectrum",
    "heteroclinic_trace",
    "heteroclinic_edges",
    "zero_mode",
    "harmonic_period",
    "identify_profile",
    "polish",
    "residual",
    "translation_distance",
    "write_census",
]

KINDS = ("stable-constant", "unstable-constant", "nonconstant")
DEFAULT_GRID = 512
RESIDUAL_TOL = 1e-8


def residual(values, poly):
    """``||(1/2) phi'' + F(phi)||_inf`` with the spectral second derivative."""
    v = np.asarray(values, dtype=float)
    return float(np.max(np.abs(0.5 * spectral_derivative(v, 2) + poly.F(v))))


@dataclass(frozen=True, eq=False)
class StationaryProfile:
    """A stationary profile with its census label.

    ``periods`` is 0 for constants. Non-constant profiles have their global
    maximum at ``theta = 0``. ``family_id`` indexes the census (None when
    the profile was not matched against one).
    """

    field: DensityField
    kind: str
    periods: int = 0
    family_id: int = None
    residual: float = dc_field(default=math.nan, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")

    @property
    def values(self):
        return self.field.values

    @property
    def grid_size(self):
        return self.field.grid_size

    @property
    def is_constant(self):
        return self.kind != "nonconstant"

    @property
    def delta(self):
        """Largest ``d`` with ``d <= phi <= 1 - d``."""
        v = self.values
        return float(min(v.min(), 1.0 - v.max()))

    def with_family(self, family_id):
        return StationaryProfile(self.field, self.kind, self.periods, family_id, self.residual)

    def on_grid(self, m):
        if m == self.grid_size:
            return self.values
        if self.is_constant:
            return np.full(m, self.values[0])
        return fourier_resample(self.values, m)


# ---------------------------------------------------------------------------
# Newton polish on the spectral grid
# ---------------------------------------------------------------------------


def polish(values, poly, *, pin_phase=None, tol=1e-12, max_iter=30):
    """Newton iteration for ``(1/2) D2 phi + F(phi) = 0`` on the spectral grid.

    With ``pin_phase`` (a reference profile) the translation mode is removed
    by a bordered system enforcing ``<phi - ref, ref'> = 0``.
    """
    phi = np.array(values, dtype=float)
    m = phi.size
    d2 = 0.5 * spectral_second_derivative_matrix(m)
    dF = poly.F.deriv()
    border = None
    if pin_phase is not None:
        ref = np.asarray(pin_phase, dtype=float)
        border = spectral_derivative(ref)
        border /= np.linalg.norm(border)
    for _ in range(max_iter):
        g = d2 @ phi + poly.F(phi)
        if np.max(np.abs(g)) < tol:
            break
        jac = d2 + np.diag(dF(phi))
        if border is None:
            step = solve(jac, -g, assume_a="sym")
        else:
            big = np.zeros((m + 1, m + 1))
            big[:m, :m] = jac
            big[:m, m] = border
            big[m, :m] = border
            rhs = np.concatenate([-g, [-border @ (phi - ref)]])
            step = solve(big, rhs, assume_a="sym")[:m]
        phi += step
    return phi


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------


def constant_solutions(poly, m=DEFAULT_GRID):
    """One profile per zero of F; minima of V are the stable ones."""
    wells = classify_wells(poly)
    out = []
    for r, stable in zip(wells.roots, wells.attractor):
        v = np.full(m, r)
        kind = "stable-constant" if stable else "unstable-constant"
        out.append(StationaryProfile(DensityField(v), kind, 0, None, residual(v, poly)))
    return out


# ---------------------------------------------------------------------------
# Time map
# ---------------------------------------------------------------------------


def _center_and_walls(poly, j):
    wells = classify_wells(poly)
    if not 0 <= j < wells.maxima.size:
        raise ValueError(f"well index {j} out of range; V has {wells.maxima.size} interior maxima")
    return wells.minima[j], wells.maxima[j], wells.minima[j + 1]


def _orbit(poly, j, amplitude):
    """Turning points and energy of the orbit whose top is ``M_j + amplitude``."""
    lo_wall, center, hi_wall = _center_and_walls(poly, j)
    top = center + amplitude
    if not (amplitude > 0 and top < hi_wall):
        raise ValueError("amplitude outside the well")
    U = -2.0 * poly.V
    E = U(top)
    if E >= U(lo_wall):
        raise ValueError("amplitude outside the well: orbit crosses the separatrix")
    bottom = brentq(lambda p: U(p) - E, lo_wall, center, xtol=1e-15)
    return bottom, top, E


def time_map(poly, j, amplitude):
    """Period of the orbit of ``(1/2) rho'' + F(rho) = 0`` around the ``j``-th maximum of V.

    The orbit is labelled by its top turning point ``M_j + amplitude``.
    Writing ``E - U(p) = (top - p)(p - bottom) g(p)`` and
    ``p = mid + half sin(phi)`` removes both endpoint singularities, leaving
    ``T = 2 int_{-pi/2}^{pi/2} dphi / sqrt(2 g)``.
    """
    bottom, top, E = _orbit(poly, j, amplitude)
    mid, half = 0.5 * (top + bottom), 0.5 * (top - bottom)
    P = np.polynomial.Polynomial
    # work in x = p - mid so small orbits do not lose digits to cancellation
    q = (E + 2.0 * poly.V)(P([mid, 1.0]))
    g, _ = divmod(q, P([-half, 1.0]) * P([half, 1.0]))
    g = -g  # (top - p)(p - bottom) = -(x - half)(x + half)

    def integrand(phi):
        return 1.0 / math.sqrt(2.0 * g(half * math.sin(phi)))

    val, _ = quad(integrand, -0.5 * math.pi, 0.5 * math.pi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2.0 * val


def harmonic_period(poly, j):
    """Small-amplitude limit ``2 pi / sqrt(2 F'(M_j))`` of the time map."""
    _, center, _ = _center_and_walls(poly, j)
    return 2.0 * math.pi / math.sqrt(2.0 * poly.F.deriv()(center))


def _amplitude_range(poly, j):
    lo_wall, center, hi_wall = _center_and_walls(poly, j)
    U = -2.0 * poly.V
    # the largest top with an orbit below the separatrix
    E_sep = min(U(lo_wall), U(hi_wall))
    if U(hi_wall) <= U(lo_wall):
        a_max = hi_wall - center
    else:
        a_max = brentq(lambda p: U(p) - E_sep, center, hi_wall, xtol=1e-15) - center
    return a_max


def admissible_periods(poly, j, n_grid=160):
    """``[(m, amplitude), ...]``: orbits around ``M_j`` with period ``1/m``.

    The time map is sampled on a grid of amplitudes; every crossing of
    ``1/m`` is refined by Brent's method. ``m`` runs over ``m T_min < 1``.
    """
    t_min = harmonic_period(poly, j)
    a_max = _amplitude_range(poly, j)
    amps = a_max * (1.0 - np.cos(0.5 * np.pi * np.linspace(0.0, 1.0, n_grid + 2)[1:-1]))
    amps = amps[amps < a_max * (1.0 - 1e-9)]
    periods = np.array([time_map(poly, j, a) for a in amps])
    out = []
    m = 1
    while m * t_min < 1.0:
        target = 1.0 / m
        grid_a = np.concatenate([[0.0], amps])
        grid_t = np.concatenate([[t_min], periods]) - target
        for k in range(grid_a.size - 1):
            if grid_t[k] == 0.0 and k > 0:
                out.append((m, float(grid_a[k])))
            elif grid_t[k] * grid_t[k + 1] < 0.0:
                lo = grid_a[k] if k > 0 else 1e-9 * a_max
                a = brentq(lambda x: time_map(poly, j, x) - target, lo, grid_a[k + 1], xtol=1e-14)
                out.append((m, float(a)))
        m += 1
    return out


# ---------------------------------------------------------------------------
# Non-constant solutions
# ---------------------------------------------------------------------------


def _shoot(poly, top, m_grid):
    theta = np.arange(m_grid) / m_grid
    sol = solve_ivp(lambda _, y: [y[1], -2.0 * poly.F(y[0])], (0.0, 1.0), [top, 0.0],
                    method="DOP853", t_eval=theta, rtol=1e-12, atol=1e-13)
    return sol.y[0]


def _canonicalize(values):
    """Shift so the global maximum sits at ``theta = 0`` (subgrid, by Fourier interpolation)."""
    m = values.size
    j = int(np.argmax(values))
    x = j / m
    d1 = spectral_derivative(values)
    d2 = spectral_derivative(values, 2)
    # Newton on phi'(x) = 0 using trigonometric interpolation of phi' and phi''
    for _ in range(8):
        f1 = fourier_shift(d1, x)[0]
        f2 = fourier_shift(d2, x)[0]
        if f2 >= 0.0:
            break
        step = f1 / f2
        x -= step
        if abs(step) < 1e-15:
            break
    return fourier_shift(values, x)


def nonconstant_solutions(poly, m_grid=DEFAULT_GRID):
    """Canonical representatives of the non-constant branches, one per admissible orbit."""
    wells = classify_wells(poly)
    out = []
    for j in range(wells.maxima.size):
        lo_wall, center, hi_wall = wells.minima[j], wells.maxima[j], wells.minima[j + 1]
        for m, amp in admissible_periods(poly, j):
            v = _shoot(poly, center + amp, m_grid)
            v = polish(v, poly, pin_phase=v)
            v = _canonicalize(v)
            v = polish(v, poly, pin_phase=v)
            res = residual(v, poly)
            if res >= RESIDUAL_TOL:
                raise RuntimeError(f"branch m={m}: residual {res:.3g} above {RESIDUAL_TOL}")
            if not (lo_wall < v.min() < center < v.max() < hi_wall):
                raise RuntimeError(f"branch m={m} leaves its well")
            out.append(StationaryProfile(DensityField(v), "nonconstant", m, None, res))
    return out


@dataclass(frozen=True)
class Census:
    """Stationary families: constants first (increasing), then branches by period."""

    profiles: tuple
    thresholds: dict

    @property
    def size(self):
        return len(self.profiles)

    def __len__(self):
        return self.size

    def __iter__(self):
        return iter(self.profiles)

    def __getitem__(self, i):
        return self.profiles[i]

    def labels(self):
        return [_label(p) for p in self.profiles]

    def index_of(self, kind=None, value=None, periods=None):
        for i, p in enumerate(self.profiles):
            if periods is not None and p.periods != periods:
                continue
            if kind is not None and p.kind != kind:
                continue
            if value is not None and not (p.is_constant and abs(p.values[0] - value) < 1e-9):
                continue
            return i
        raise KeyError((kind, value, periods))


def _label(p):
    if p.is_constant:
        return f"{p.values[0]:.6f}"
    return f"phi_{p.periods}"


def build_census(poly, m_grid=DEFAULT_GRID):
    """All families with ids, plus the two admissibility thresholds per centre.

    ``thresholds`` records for every maximum ``M_j`` of V, with
    ``a_j = F'(M_j)/4``: the time-map count, the count of unstable Fourier
    modes ``#{k >= 1: 4 a_j - 2 pi^2 k^2 > 0}``, and the literal count
    ``#{m >= 1: m^2 < 32 pi^2 a_j}``.
    """
    consts = constant_solutions(poly, m_grid)
    branches = nonconstant_solutions(poly, m_grid)
    profiles = tuple(p.with_family(i) for i, p in enumerate(consts + branches))
    wells = classify_wells(poly)
    info = []
    for j, c in enumerate(wells.maxima):
        a_j = poly.F.deriv()(c) / 4.0
        t_min = harmonic_period(poly, j)
        info.append({
            "center": float(c),
            "a": float(a_j),
            "T_min": float(t_min),
            "time_map_count": int(sum(1 for p in branches if abs(_center_of(p, wells) - c) < 1e-12)),
            "linear_instability_count": int(math.floor(math.sqrt(max(4 * a_j, 0.0) / (2 * math.pi**2)) - 1e-15)),
            "literal_lambda_count": int(math.ceil(math.sqrt(32 * math.pi**2 * a_j)) - 1),
        })
    return Census(profiles, {"centers": info})


def _center_of(profile, wells):
    mean = 0.5 * (profile.values.min() + profile.values.max())
    return float(wells.maxima[np.argmin(np.abs(wells.maxima - mean))])


# ---------------------------------------------------------------------------
# Linearisation
# ---------------------------------------------------------------------------


def linearization(profile, poly):
    """Eigenpairs of ``(1/2) D2 + F'(phi)``, eigenvalues descending."""
    v = profile.values if isinstance(profile, StationaryProfile) else np.asarray(profile, float)
    op = 0.5 * spectral_second_derivative_matrix(v.size) + np.diag(poly.F.deriv()(v))
    w, vec = eigh(op)
    return w[::-1], vec[:, ::-1]


def linearization_spectrum(profile, poly, n_modes=None, zero_tol=1e-6):
    """Leading eigenvalues of the linearised operator at ``profile``.

    For a non-constant profile the eigenvalue closest to zero must be below
    ``zero_tol`` with eigenvector parallel to ``phi'``.
    """
    w, vec = linearization(profile, poly)
    if isinstance(profile, StationaryProfile) and not profile.is_constant:
        k = int(np.argmin(np.abs(w)))
        grad = spectral_derivative(profile.values)
        cos = abs(vec[:, k] @ grad) / np.linalg.norm(grad)
        if abs(w[k]) >= zero_tol or cos < 1.0 - zero_tol:
            raise AssertionError(f"translation mode missing: eigenvalue {w[k]:.3g}, |cos| {cos:.9f}")
    return w if n_modes is None else w[:n_modes]


def zero_mode(profile, poly):
    """``(eigenvalue, |cos angle with phi'|)`` for the eigenvalue closest to zero."""
    w, vec = linearization(profile, poly)
    k = int(np.argmin(np.abs(w)))
    grad = spectral_derivative(profile.values)
    return float(w[k]), float(abs(vec[:, k] @ grad) / np.linalg.norm(grad))


# ---------------------------------------------------------------------------
# Identification and heteroclinics
# ---------------------------------------------------------------------------


def translation_distance(u, v):
    """``min_s ||u - v(. + s)||_2`` over grid shifts ``s``."""
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    # circular cross-correlation by FFT
    corr = np.fft.irfft(np.fft.rfft(u) * np.conj(np.fft.rfft(v)), n=u.size)
    d2 = np.mean(u * u) + np.mean(v * v) - 2.0 * corr / u.size
    return float(np.sqrt(max(d2.min(), 0.0)))


def identify_profile(field, poly, census=None, flat_tol=1e-6):
    """Polish a near-stationary field and label it (matched to ``census`` when given)."""
    v = field.values if isinstance(field, DensityField) else np.asarray(field, float)
    if v.max() - v.min() < flat_tol:
        wells = classify_wells(poly)
        k = int(np.argmin(np.abs(wells.roots - v.mean())))
        v = np.full(v.size, wells.roots[k])
        kind = "stable-constant" if wells.attractor[k] else "unstable-constant"
        prof = StationaryProfile(DensityField(v), kind, 0, None, residual(v, poly))
    else:
        v = polish(v, poly, pin_phase=v)
        v = _canonicalize(v)
        v = polish(v, poly, pin_phase=v)
        if v.max() - v.min() < flat_tol:
            return identify_profile(np.full(v.size, v.mean()), poly, census, flat_tol)
        spec = np.abs(np.fft.rfft(v - v.mean()))
        periods = int(np.argmax(spec[1:]) + 1)
        prof = StationaryProfile(DensityField(np.clip(v, 0.0, 1.0)), "nonconstant", periods, None,
                                 residual(v, poly))
    if census is None:
        return prof
    dists = [translation_distance(prof.values, c.on_grid(prof.grid_size)) for c in census]
    i = int(np.argmin(dists))
    if dists[i] > 1e-4:
        raise RuntimeError(f"limit profile not in census (closest family {i}, distance {dists[i]:.3g})")
    return census[i].with_family(i)


def heteroclinic_trace(profile, poly, sign=+1, eps=1e-3, census=None, *, dt=None, t_cap=400.0):
    """Follow the unstable direction out of ``profile`` and return the limit.

    The start is ``phi + sign * eps * e`` with ``e`` the principal
    eigenfunction (sup-normalised, positive mean); the flow is run by
    :func:`rdstatic.pde.relax_to_stationary`.
    """
    w, vec = linearization(profile, poly)
    if w[0] <= 0.0:
        raise ValueError("profile is not unstable: top eigenvalue is not positive")
    e = vec[:, 0]
    e = e / np.max(np.abs(e))
    if e.sum() < 0:
        e = -e
    start = np.clip(profile.values + sign * eps * e, 0.0, 1.0)
    limit, _ = relax_to_stationary(DensityField(start), poly, dt=dt, t_cap=t_cap, census=census)
    return limit


def heteroclinic_edges(census, poly, eps=1e-3):
    """Set of ``(i, j)`` with a traced connection from family ``i`` to family ``j``."""
    edges = set()
    for i, p in enumerate(census):
        if linearization(p, poly)[0][0] <= 0.0:
            continue
        for sign in (+1, -1):
            lim = heteroclinic_trace(p, poly, sign, eps, census)
            if lim.family_id != i:
                edges.add((i, lim.family_id))
    return edges


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


def write_census(census, poly, out_dir):
    """Write ``census.json`` and one ``family_<i>.csv`` per profile; returns the JSON path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, p in enumerate(census):
        csv = out / f"family_{i}.csv"
        np.savetxt(csv, np.column_stack([p.field.theta, p.values]), delimiter=",",
                   header="theta,phi", comments="", fmt="%.17g")
        rows.append({
            "family_id": i,
            "kind": p.kind,
            "periods": p.periods,
            "top_eigenvalue": float(linearization(p, poly)[0][0]),
            "profile_csv_path": csv.name,
        })
    path = out / "census.json"
    path.write_text(json.dumps(rows, indent=2))
    return path
