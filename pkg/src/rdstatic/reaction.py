"""Macroscopic reaction terms derived from a flip rate.

``B(rho) = E[(1 - eta(0)) c]`` and ``D(rho) = E[eta(0) c]`` under the
Bernoulli(rho) product measure are polynomials; they are computed here by
summing the rate table over all local patterns, once in exact rational
arithmetic and once in floating point. ``F = B - D`` drives the
hydrodynamic equation and ``V' = -F`` is its potential.
"""

from dataclasses import dataclass
from fractions import Fraction
from math import comb, pi, sqrt

import numpy as np
from numpy.polynomial import Polynomial

from .model import CylinderRate, build_rate_table

__all__ = [
    "ReactionPolynomials",
    "WellStructure",
    "DegenerateRootError",
    "bd_exact",
    "bd_polynomials",
    "classify_wells",
    "concavity_check",
    "concavity_criterion",
    "ChafeeInfante",
    "chafee_infante_params",
    "chafee_infante_F",
]


class DegenerateRootError(ValueError):
    """F has a multiple root in [0, 1]; the well classification is refused."""


# ---------------------------------------------------------------------------
# Exact polynomial helpers (ascending coefficient lists of Fractions)
# ---------------------------------------------------------------------------


def _trim(p):
    p = list(p)
    while len(p) > 1 and p[-1] == 0:
        p.pop()
    return p


def _add(p, q):
    n = max(len(p), len(q))
    return _trim([(p[i] if i < len(p) else 0) + (q[i] if i < len(q) else 0) for i in range(n)])


def _scale(p, s):
    return _trim([s * c for c in p])


def _mul(p, q):
    out = [Fraction(0)] * (len(p) + len(q) - 1)
    for i, a in enumerate(p):
        if a == 0:
            continue
        for j, b in enumerate(q):
            out[i + j] += a * b
    return _trim(out)


def _deriv(p):
    return _trim([i * p[i] for i in range(1, len(p))] or [Fraction(0)])


def _eval(p, x):
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _divmod(p, q):
    p = [Fraction(c) for c in _trim(p)]
    q = _trim(q)
    if len(q) == 1 and q[0] == 0:
        raise ZeroDivisionError("polynomial division by zero")
    quo = [Fraction(0)] * max(len(p) - len(q) + 1, 1)
    while len(p) >= len(q) and not (len(p) == 1 and p[0] == 0):
        k = len(p) - len(q)
        c = p[-1] / q[-1]
        quo[k] = c
        for i, b in enumerate(q):
            p[i + k] -= c * b
        p = _trim(p[:-1] or [Fraction(0)])
        if len(p) < len(q):
            break
    return _trim(quo), _trim(p)


def _degree(p):
    p = _trim(p)
    return -1 if (len(p) == 1 and p[0] == 0) else len(p) - 1


def _gcd(p, q):
    while _degree(q) >= 0:
        _, r = _divmod(p, q)
        p, q = q, r
    return _scale(p, 1 / p[-1])


def _binomial_power(sign, k):
    """Coefficients of ``(1 - x)^k`` (sign=-1) or ``x^k`` (sign=+1)."""
    if sign > 0:
        return [Fraction(0)] * k + [Fraction(1)]
    return [Fraction((-1) ** j * comb(k, j)) for j in range(k + 1)]


def _sturm(p):
    seq = [p, _deriv(p)]
    while _degree(seq[-1]) > 0:
        _, r = _divmod(seq[-2], seq[-1])
        if _degree(r) < 0:
            break
        seq.append(_scale(r, -1))
    return seq


def _sign_changes(seq, x):
    vals = [_eval(s, x) for s in seq]
    vals = [v for v in vals if v != 0]
    return sum(1 for a, b in zip(vals, vals[1:]) if (a > 0) != (b > 0))


def _real_roots_exact(p, lo=Fraction(0), hi=Fraction(1), tol=1e-12):
    """Distinct roots of a squarefree polynomial in ``[lo, hi]``, refined by bisection to ``tol``."""
    seq = _sturm(p)
    roots = []
    for end in (lo, hi):
        if _eval(p, end) == 0:
            roots.append(end)

    def count(a, b):
        return _sign_changes(seq, a) - _sign_changes(seq, b)

    def split(a, b):
        mid = (a + b) / 2
        step = (b - a) / 1024
        while _eval(p, mid) == 0 and step > 0:
            mid += step
            step /= 2
        return mid

    def refine(a, b):
        fa = _eval(p, a)
        while b - a > tol:
            mid = (a + b) / 2
            fm = _eval(p, mid)
            if fm == 0:
                return mid
            if (fm > 0) == (fa > 0):
                a, fa = mid, fm
            else:
                b = mid
        return (a + b) / 2

    stack = [(lo, hi)]
    while stack:
        a, b = stack.pop()
        n = count(a, b) - (1 if _eval(p, b) == 0 else 0)
        if n == 0:
            continue
        if n == 1 and _eval(p, a) != 0 and (_eval(p, a) > 0) != (_eval(p, b) > 0):
            roots.append(refine(a, b))
            continue
        mid = split(a, b)
        stack.append((a, mid))
        stack.append((mid, b))
    return sorted(roots)


# ---------------------------------------------------------------------------
# B, D, F, V
# ---------------------------------------------------------------------------


def bd_exact(table):
    """Exact ascending coefficients of ``B`` and ``D`` from a rate table.

    ``table`` has length ``2^(2r+1)`` and is indexed as in
    :class:`~rdstatic.model.CylinderRate`; entries may be ints, Fractions or
    floats (floats are converted exactly).
    """
    table = [Fraction(c) for c in table]
    w = (len(table)).bit_length() - 1
    if 2**w != len(table) or w % 2 != 1:
        raise ValueError("table length must be 2^(2r+1)")
    r = (w - 1) // 2
    B = [Fraction(0)]
    D = [Fraction(0)]
    for idx, c in enumerate(table):
        bits = [(idx >> (w - 1 - j)) & 1 for j in range(w)]
        ones = sum(bits)
        weight = _mul(_binomial_power(+1, ones), _binomial_power(-1, w - ones))
        if bits[r] == 0:
            B = _add(B, _scale(weight, c))
        else:
            D = _add(D, _scale(weight, c))
    return B, D


def _to_poly(p):
    return Polynomial([float(c) for c in p])


def _max_abs_on_unit(poly):
    crit = [x.real for x in poly.deriv().roots() if abs(x.imag) < 1e-12 and 0.0 <= x.real <= 1.0]
    pts = np.array([0.0, 1.0] + crit)
    return float(np.max(np.abs(poly(pts))))


def _min_on_unit(poly):
    crit = [x.real for x in poly.deriv().roots() if abs(x.imag) < 1e-12 and 0.0 <= x.real <= 1.0]
    pts = np.array([0.0, 1.0] + crit)
    return float(np.min(poly(pts)))


@dataclass(frozen=True)
class ReactionPolynomials:
    """B, D, F = B - D and V (V' = -F, V(1/2) = 0) as polynomials in rho.

    ``B_exact`` and ``D_exact`` hold the same coefficients as Fractions.
    ``B_hat``, ``D_hat`` are the cofactors in ``B = (1 - rho) B_hat`` and
    ``D = rho D_hat``.
    """

    B: Polynomial
    D: Polynomial
    F: Polynomial
    V: Polynomial
    B_hat: Polynomial
    D_hat: Polynomial
    lipschitz_F: float
    B_exact: tuple
    D_exact: tuple

    @property
    def F_exact(self):
        return tuple(_add(list(self.B_exact), _scale(list(self.D_exact), -1)))

    def chi(self, rho):
        return rho * (1.0 - rho)

    def sup_F(self):
        return _max_abs_on_unit(self.F)

    def to_dict(self):
        return {name: getattr(self, name).coef.tolist() for name in ("B", "D", "F", "V")} | {
            "lipschitz_F": self.lipschitz_F}

    @classmethod
    def from_exact(cls, B, D):
        B, D = _trim(B), _trim(D)
        Bh, rb = _divmod(B, [Fraction(1), Fraction(-1)])
        Dh, rd = _divmod(D, [Fraction(0), Fraction(1)])
        if _degree(rb) >= 0 or _degree(rd) >= 0:
            raise ValueError("B must vanish at 1 and D at 0")
        Fp = _to_poly(_add(B, _scale(D, -1)))
        V = -Fp.integ()
        V = V - V(0.5)
        b_hat, d_hat = _to_poly(Bh), _to_poly(Dh)
        if _min_on_unit(b_hat) <= 0.0 or _min_on_unit(d_hat) <= 0.0:
            raise ValueError("B_hat and D_hat must be strictly positive on [0, 1]")
        if not (Fp(0.0) > 0.0 > Fp(1.0)):
            raise ValueError("need F(0) > 0 > F(1)")
        return cls(_to_poly(B), _to_poly(D), Fp, V, b_hat, d_hat,
                   _max_abs_on_unit(Fp.deriv()), tuple(B), tuple(D))


def _exact_table(params):
    p = [c if isinstance(c, (int, Fraction)) else Fraction(float(c)) for c in params]
    if len(p) != 3:
        return p
    a0, a1, a2 = p
    table = []
    for idx in range(8):
        left, mid, right = (idx >> 2) & 1, (idx >> 1) & 1, idx & 1
        table.append(a2 if left != right else (a1 if mid == left else a0))
    return table


def bd_polynomials(rates):
    """Exact pattern enumeration of ``B`` and ``D`` for a strictly positive rate."""
    if isinstance(rates, CylinderRate):
        table = rates.table
    else:
        # keep rational input exact: the CylinderRate table is float
        table = _exact_table(rates)
        build_rate_table(rates)  # validation only
    B, D = bd_exact(table)
    return ReactionPolynomials.from_exact(B, D)


# ---------------------------------------------------------------------------
# Wells
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WellStructure:
    """Roots of F in [0, 1] and their classification.

    ``minima`` are the minima of V (stable zeros of F, attractors of
    ``x' = F(x)``); ``maxima`` are the maxima of V.
    """

    roots: np.ndarray
    attractor: np.ndarray
    minima: np.ndarray
    maxima: np.ndarray

    @property
    def n_minima(self):
        return int(self.minima.size)

    def nearest_root(self, x):
        return float(self.roots[np.argmin(np.abs(self.roots - x))])


def _polish(poly, x, lo, hi):
    dp = poly.deriv()
    for _ in range(4):
        d = dp(x)
        if d == 0.0:
            break
        y = x - poly(x) / d
        if not lo <= y <= hi:
            break
        x = y
    return x


def classify_wells(poly, tol=1e-12):
    """Locate and classify the zeros of F in [0, 1].

    Zeros are isolated by a Sturm sequence in exact arithmetic, bisected to
    ``tol`` and polished by two float Newton steps. A multiple zero raises
    :class:`DegenerateRootError`.
    """
    F = list(poly.F_exact)
    if _degree(F) < 1:
        raise ValueError("F must have degree at least 1")
    g = _gcd(F, _deriv(F))
    if _degree(g) >= 1:
        if _degree(g) >= 2:
            g = _divmod(g, _gcd(g, _deriv(g)))[0]
        bad = _real_roots_exact(g)
        if bad:
            raise DegenerateRootError(f"F has a multiple root near {float(bad[0]):.12g}")
    exact = _real_roots_exact(F, tol=tol)
    roots = np.array([_polish(poly.F, float(x), float(x) - tol, float(x) + tol) for x in exact])
    slope = poly.F.deriv()(roots)
    attractor = slope < 0
    minima, maxima = roots[attractor], roots[~attractor]
    order = np.sort(np.concatenate([minima, maxima]))
    kinds = np.isin(order, minima)
    if not (kinds[0] and kinds[-1] and np.all(kinds[:-1] != kinds[1:])):
        raise ValueError("minima and maxima of V do not interlace")
    return WellStructure(roots, attractor, minima, maxima)


# ---------------------------------------------------------------------------
# Concavity
# ---------------------------------------------------------------------------


def _concave_on_unit(p, atol):
    d2 = p.deriv(2)
    crit = [x.real for x in d2.deriv().roots() if abs(x.imag) < 1e-12 and 0.0 <= x.real <= 1.0]
    pts = np.array([0.0, 1.0] + crit)
    return bool(np.all(d2(pts) <= atol))


def concavity_check(poly, atol=1e-12):
    """``(B concave, D concave)`` on [0, 1], from B'' and D'' at the endpoints and critical points."""
    return _concave_on_unit(poly.B, atol), _concave_on_unit(poly.D, atol)


def concavity_criterion(a0, a1, a2):
    """Closed-form radius-1 test ``3 a1 + a0 <= 4 a2 <= 4 a0``.

    ``B''`` is affine in ``rho`` for the radius-1 family, so this is exact,
    and ``D(rho) = B(1 - rho)`` gives the same answer for D.
    """
    return 3 * a1 + a0 <= 4 * a2 <= 4 * a0


# ---------------------------------------------------------------------------
# Chafee-Infante scaling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChafeeInfante:
    """Radius-1 rates realising ``F = (b_ - a_)(2 rho - 1) - b_ (2 rho - 1)^3``.

    ``a = (b_ - a_)/2`` and ``b = b_/2`` are the potential parameters in
    ``V = b u^4/4 - a u^2/2``, ``u = 2 rho - 1``; ``lam = 32 pi^2 a``.
    """

    frak_a: float
    frak_b: float
    rates: tuple
    a: float
    b: float
    lam: float

    @property
    def rho_minus(self):
        return 0.5 * (1.0 - sqrt(self.a / self.b))

    @property
    def rho_plus(self):
        return 0.5 * (1.0 + sqrt(self.a / self.b))


def chafee_infante_F(frak_a, frak_b):
    """Exact ascending coefficients of ``(b_ - a_)(2 rho - 1) - b_ (2 rho - 1)^3``."""
    fa, fb = Fraction(frak_a), Fraction(frak_b)
    u = [Fraction(-1), Fraction(2)]
    return _add(_scale(u, fb - fa), _scale(_mul(_mul(u, u), u), -fb))


def chafee_infante_params(frak_a, frak_b, a2=None):
    """Map ``0 < a_ < b_`` to the rates ``a1 = a_``, ``a2 >= a_ + 2 b_``, ``a0 = 2 a2 + 4 b_ - a_``.

    Arithmetic follows the input type, so Fraction inputs give an exact
    triple. The induced F is checked coefficientwise against the cubic.
    """
    if not 0 < frak_a < frak_b:
        raise ValueError("need 0 < a_ < b_")
    lower = frak_a + 2 * frak_b
    if a2 is None:
        a2 = lower
    elif a2 < lower:
        raise ValueError(f"a2 must be at least a_ + 2 b_ = {lower}")
    a1 = frak_a
    a0 = 2 * a2 + 4 * frak_b - frak_a
    B, D = bd_exact(_triple_table(a0, a1, a2))
    got = _add(B, _scale(D, -1))
    want = chafee_infante_F(frak_a, frak_b)
    diff = _add(got, _scale(want, -1))
    scale = max(abs(c) for c in want)
    if max(abs(c) for c in diff) > 1e-12 * scale:
        raise AssertionError("rate mapping does not reproduce the cubic F")
    a = (frak_b - frak_a) / 2
    b = frak_b / 2
    return ChafeeInfante(frak_a, frak_b, (a0, a1, a2), a, b, 32 * pi**2 * float(a))


def _triple_table(a0, a1, a2):
    table = []
    for idx in range(8):
        left, mid, right = (idx >> 2) & 1, (idx >> 1) & 1, idx & 1
        table.append(a2 if left != right else (a1 if mid == left else a0))
    return table
