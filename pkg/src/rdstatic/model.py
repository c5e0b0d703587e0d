"""Microscopic model: configurations, flip rates, exact event-driven simulation
of ``N^2 L_K + L_G``, empirical measures and the Fourier metric on measures.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from numba import njit

__all__ = [
    "LatticeConfig",
    "as_config",
    "CylinderRate",
    "MeasureCoords",
    "build_rate_table",
    "kmc_run",
    "kmc_final_states",
    "empirical_measure",
    "empirical_coords",
    "density_coords",
    "measure_distance",
    "coords_distance",
    "distance_tail_bound",
    "generator_matrix",
    "config_index",
    "dump_snapshots",
    "load_snapshots",
    "replica_rng",
]

DEFAULT_TRUNCATION = 20


@dataclass(frozen=True, eq=False)
class LatticeConfig:
    """Occupancy ``eta(x)`` in {0, 1} for ``x`` in ``Z/NZ``."""

    occupancy: np.ndarray

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupancy, dtype=np.uint8)
        if occ.ndim != 1 or occ.size == 0:
            raise ValueError("occupancy must be a non-empty 1-d sequence")
        if np.any(occ > 1):
            raise ValueError("occupancy entries must be 0 or 1")
        occ.setflags(write=False)
        object.__setattr__(self, "occupancy", occ)

    @property
    def n_sites(self):
        return self.occupancy.size

    @classmethod
    def from_string(cls, s):
        return cls(np.frombuffer(s.strip().encode(), dtype=np.uint8) - ord("0"))

    def to_string(self):
        return (self.occupancy + ord("0")).tobytes().decode()

    def __eq__(self, other):
        if not isinstance(other, LatticeConfig):
            return NotImplemented
        return np.array_equal(self.occupancy, other.occupancy)

    def __hash__(self):
        return hash(self.occupancy.tobytes())

    def __repr__(self):
        return f"LatticeConfig({self.to_string()!r})"


def as_config(x):
    return x if isinstance(x, LatticeConfig) else LatticeConfig(x)


@dataclass(frozen=True, eq=False)
class CylinderRate:
    """Translation-covariant flip rate ``c(tau_x eta)`` with window radius ``r``.

    ``table[i]`` is the rate for the local pattern ``(eta(-r), ..., eta(r))``
    whose binary digits, most significant first, spell ``i``.
    """

    radius: int
    table: np.ndarray

    def __post_init__(self):
        tab = np.array(self.table, dtype=float).ravel()
        if self.radius < 0:
            raise ValueError("radius must be nonnegative")
        if tab.size != 2 ** (2 * self.radius + 1):
            raise ValueError(f"table needs {2 ** (2 * self.radius + 1)} entries, got {tab.size}")
        if not np.all(np.isfinite(tab)) or np.any(tab <= 0.0):
            raise ValueError("flip rates must be strictly positive and finite")
        tab.setflags(write=False)
        object.__setattr__(self, "table", tab)

    @property
    def window(self):
        return 2 * self.radius + 1

    def pattern_index(self, pattern):
        idx = 0
        for bit in pattern:
            idx = 2 * idx + int(bit)
        return idx

    def rate(self, pattern):
        """Rate for a local pattern ``(eta(-r), ..., eta(r))``."""
        if len(pattern) != self.window:
            raise ValueError("pattern length must be 2r+1")
        return float(self.table[self.pattern_index(pattern)])

    def patterns(self):
        """All local patterns in table order, as an int array of shape (2^(2r+1), 2r+1)."""
        w = self.window
        idx = np.arange(2**w)
        return (idx[:, None] >> np.arange(w - 1, -1, -1)[None, :]) & 1

    def is_flip_symmetric(self):
        """True when ``c(eta) = c(1 - eta)``."""
        return bool(np.array_equal(self.table, self.table[::-1]))

    def rate_at(self, occupancy, x):
        n = len(occupancy)
        pat = [occupancy[(x + j) % n] for j in range(-self.radius, self.radius + 1)]
        return self.rate(pat)


@dataclass(frozen=True)
class MeasureCoords:
    """Truncated coordinates ``<rho, e_k>``, ``|k| <= K``, stored in order ``k = -K..K``."""

    truncation: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (2 * self.truncation + 1,):
            raise ValueError("coeffs must have length 2K+1")
        object.__setattr__(self, "coeffs", c)

    def __getitem__(self, k):
        if abs(k) > self.truncation:
            raise IndexError(k)
        return float(self.coeffs[k + self.truncation])


def build_rate_table(params):
    """Build a :class:`CylinderRate`.

    ``params`` is either a triple ``(a0, a1, a2)`` giving the radius-1 rate

        c = a2 [eta(-1) != eta(1)] + a1 [eta(-1) = eta(1) = eta(0)]
            + a0 [eta(-1) = eta(1) != eta(0)],

    or an explicit table of length ``2^(2r+1)``.
    """
    p = np.asarray(params, dtype=float).ravel()
    if p.size == 3:
        a0, a1, a2 = p
        table = np.empty(8)
        for idx in range(8):
            left, mid, right = (idx >> 2) & 1, (idx >> 1) & 1, idx & 1
            if left != right:
                table[idx] = a2
            elif mid == left:
                table[idx] = a1
            else:
                table[idx] = a0
        return CylinderRate(1, table)
    r2 = math.log2(p.size)
    if not r2.is_integer() or int(r2) % 2 != 1:
        raise ValueError("explicit table length must be 2^(2r+1)")
    return CylinderRate((int(r2) - 1) // 2, p)


# ---------------------------------------------------------------------------
# Event-driven simulation
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def _pattern(eta, x, n, r):
    idx = 0
    for j in range(-r, r + 1):
        idx = 2 * idx + eta[(x + j) % n]
    return idx


@njit(cache=True, nogil=True)
def _init_state(eta, n, r, n_cls):
    """Class membership of every site and the active-bond set, from scratch."""
    cls = np.empty(n, np.int64)
    members = np.empty((n_cls, n), np.int64)
    cnt = np.zeros(n_cls, np.int64)
    where = np.empty(n, np.int64)
    for x in range(n):
        c = _pattern(eta, x, n, r)
        cls[x] = c
        where[x] = cnt[c]
        members[c, cnt[c]] = x
        cnt[c] += 1
    act = np.empty(n, np.int64)
    apos = np.full(n, -1, np.int64)
    n_act = 0
    for x in range(n):
        if eta[x] != eta[(x + 1) % n]:
            apos[x] = n_act
            act[n_act] = x
            n_act += 1
    return cls, members, cnt, where, act, apos, n_act


@njit(cache=True, nogil=True, inline="always")
def _set_bond(x, active, act, apos, n_act):
    if active and apos[x] < 0:
        apos[x] = n_act
        act[n_act] = x
        return n_act + 1
    if not active and apos[x] >= 0:
        i = apos[x]
        last = act[n_act - 1]
        act[i] = last
        apos[last] = i
        apos[x] = -1
        return n_act - 1
    return n_act


@njit(cache=True, nogil=True)
def _advance(eta, cls, members, cnt, where, act, apos, n_act, n, r, table, exch, glauber,
             t, horizon, obs_times, obs_idx, snaps, u, pos, check, counters):
    """Advance until the horizon or until the uniform buffer runs dry.

    Returns (t, pos, obs_idx, n_act, status); status 0 = horizon reached,
    1 = buffer exhausted, 2 = incremental bookkeeping disagrees with a rebuild.
    """
    n_obs = obs_times.shape[0]
    nu = u.shape[0]
    n_cls = table.shape[0]
    while True:
        if pos + 2 > nu:
            return t, pos, obs_idx, n_act, 1
        total_exch = exch * n_act
        total_flip = 0.0
        if glauber:
            for c in range(n_cls):
                total_flip += cnt[c] * table[c]
        total = total_exch + total_flip
        if total > 0.0:
            t_next = t - math.log(1.0 - u[pos]) / total
        else:
            t_next = math.inf
        pos += 1
        while obs_idx < n_obs and obs_times[obs_idx] < t_next:
            for x in range(n):
                snaps[obs_idx, x] = eta[x]
            obs_idx += 1
        if t_next > horizon:
            return horizon, pos, obs_idx, n_act, 0
        target = u[pos] * total
        pos += 1
        if target < total_exch or total_flip == 0.0:
            i = int(target / exch)
            if i >= n_act:
                i = n_act - 1
            x = act[i]
            y = (x + 1) % n
            tmp = eta[x]
            eta[x] = eta[y]
            eta[y] = tmp
            for z in range(x - 1 + n, x + 2 + n):
                b = z % n
                n_act = _set_bond(b, eta[b] != eta[(b + 1) % n], act, apos, n_act)
            lo = x - r
            hi = x + 2 + r
        else:
            target -= total_exch
            c = 0
            while c < n_cls - 1:
                w = cnt[c] * table[c]
                if target < w:
                    break
                target -= w
                c += 1
            while cnt[c] == 0:
                c -= 1
            i = int(target / table[c])
            if i >= cnt[c]:
                i = cnt[c] - 1
            x = members[c, i]
            eta[x] = 1 - eta[x]
            for z in range(x - 1 + n, x + 1 + n):
                b = z % n
                n_act = _set_bond(b, eta[b] != eta[(b + 1) % n], act, apos, n_act)
            lo = x - r
            hi = x + r + 1
        # re-file the sites whose neighbourhood changed; kept inline because a
        # helper call here costs several times the body
        for z in range(lo + n, hi + n):
            s = z % n
            c_new = _pattern(eta, s, n, r)
            c_old = cls[s]
            if c_new != c_old:
                i = where[s]
                last = members[c_old, cnt[c_old] - 1]
                members[c_old, i] = last
                where[last] = i
                cnt[c_old] -= 1
                members[c_new, cnt[c_new]] = s
                where[s] = cnt[c_new]
                cnt[c_new] += 1
                cls[s] = c_new
        if counters[0] == 0:
            counters[1] = t_next
        counters[0] += 1
        t = t_next
        if check:
            cls2, _, cnt2, _, _, apos2, n_act2 = _init_state(eta, n, r, n_cls)
            if n_act2 != n_act:
                return t, pos, obs_idx, n_act, 2
            for x in range(n):
                if cls2[x] != cls[x] or (apos2[x] < 0) != (apos[x] < 0):
                    return t, pos, obs_idx, n_act, 2
                if members[cls[x], where[x]] != x:
                    return t, pos, obs_idx, n_act, 2
            for c in range(n_cls):
                if cnt2[c] != cnt[c]:
                    return t, pos, obs_idx, n_act, 2
            for i in range(n_act):
                if apos[act[i]] != i:
                    return t, pos, obs_idx, n_act, 2


def replica_rng(seed, replica=0):
    """Counter-based generator keyed by ``(seed, replica)``."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replica) & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _simulate(occ, rates, horizon, rng, obs, glauber, check, buffer_size):
    n = occ.size
    r = rates.radius
    if n <= 2 * r:
        raise ValueError("lattice must be larger than twice the rate-window radius")
    eta = occ.astype(np.int64)
    exch = 0.5 * n * n
    table = np.ascontiguousarray(rates.table)
    cls, members, cnt, where, act, apos, n_act = _init_state(eta, n, r, table.size)
    snaps = np.zeros((obs.size, n), dtype=np.uint8)
    counters = np.zeros(2)
    t, obs_idx = 0.0, 0
    while True:
        u = rng.random(buffer_size)
        t, _, obs_idx, n_act, status = _advance(
            eta, cls, members, cnt, where, act, apos, n_act, n, r, table, exch, glauber,
            t, horizon, obs, obs_idx, snaps, u, 0, check, counters)
        if status == 0:
            break
        if status == 2:
            raise AssertionError(f"incremental rates diverged from a rebuild at t={t}")
    stats = {"n_events": int(counters[0]),
             "first_event_time": float(counters[1]) if counters[0] > 0 else math.inf}
    return snaps, stats


def _check_times(horizon, observe_at):
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    obs = np.array([horizon] if observe_at is None else observe_at, dtype=float).ravel()
    if obs.size and (np.any(np.diff(obs) < 0) or obs[0] < 0 or obs[-1] > horizon):
        raise ValueError("observe_at must be sorted within [0, horizon]")
    return obs


def kmc_run(init, rates, horizon, seed, observe_at=None, *, replica=0, glauber=True,
            check_rates=False, return_stats=False, buffer_size=1 << 16):
    """Simulate the exchange-plus-flip chain exactly and return snapshots.

    Each bond ``(x, x+1)`` exchanges at rate ``N^2/2`` and each site flips at
    rate ``c(tau_x eta)``. Only bonds joining unequal sites are scheduled;
    flip sites are grouped by local pattern so that selection is
    rejection-free and costs O(r) per event.

    Parameters
    ----------
    init : LatticeConfig or array_like of 0/1
    rates : CylinderRate
    horizon : float
    seed : int
        Together with ``replica`` keys the Philox stream.
    observe_at : sequence of float, optional
        Sorted snapshot times in ``[0, horizon]``; defaults to ``[horizon]``.
    glauber : bool
        ``False`` switches the flip part off (test harness for the
        exchange-only dynamics).
    check_rates : bool
        Rebuild the class membership and active-bond set after every event
        and compare them with the incrementally maintained ones.
    return_stats : bool
        Also return a dict with ``n_events`` and ``first_event_time``.
    """
    init = as_config(init)
    obs = _check_times(horizon, observe_at)
    snaps, stats = _simulate(init.occupancy, rates, float(horizon), replica_rng(seed, replica),
                             obs, bool(glauber), bool(check_rates), int(buffer_size))
    out = [LatticeConfig(s) for s in snaps]
    return (out, stats) if return_stats else out


def kmc_final_states(init, rates, horizon, seed, n_runs, *, first_replica=0, buffer_size=256):
    """Final configurations of ``n_runs`` independent replicas as integer codes (see :func:`config_index`)."""
    init = as_config(init)
    obs = _check_times(horizon, None)
    codes = np.empty(n_runs, dtype=np.int64)
    weights = 1 << np.arange(init.n_sites, dtype=np.int64)
    for i in range(n_runs):
        snaps, _ = _simulate(init.occupancy, rates, float(horizon),
                             replica_rng(seed, first_replica + i), obs, True, False, buffer_size)
        codes[i] = int(snaps[-1].astype(np.int64) @ weights)
    return codes


# ---------------------------------------------------------------------------
# Dense generator (independent oracle for small N)
# ---------------------------------------------------------------------------


def config_index(occupancy):
    """Integer code ``sum_x eta(x) 2^x``."""
    return int(sum(int(b) << x for x, b in enumerate(occupancy)))


def generator_matrix(n_sites, rates, glauber=True):
    """Dense ``2^N x 2^N`` generator of ``N^2 L_K + L_G``, states coded by :func:`config_index`."""
    if n_sites > 14:
        raise ValueError("dense generator limited to N <= 14")
    size = 2**n_sites
    q = np.zeros((size, size))
    for s in range(size):
        eta = [(s >> x) & 1 for x in range(n_sites)]
        for x in range(n_sites):
            y = (x + 1) % n_sites
            swapped = list(eta)
            swapped[x], swapped[y] = eta[y], eta[x]
            q[s, config_index(swapped)] += 0.5 * n_sites**2
            if glauber:
                flipped = list(eta)
                flipped[x] = 1 - eta[x]
                q[s, config_index(flipped)] += rates.rate_at(eta, x)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


# ---------------------------------------------------------------------------
# Empirical measure and metric
# ---------------------------------------------------------------------------


def _basis(theta, truncation):
    k = np.arange(-truncation, truncation + 1)
    arg = 2.0 * np.pi * np.abs(k)[:, None] * theta[None, :]
    e = np.where((k > 0)[:, None], np.sqrt(2.0) * np.cos(arg), np.sqrt(2.0) * np.sin(arg))
    e[truncation] = 1.0
    return e


def empirical_coords(occupancies, truncation=DEFAULT_TRUNCATION):
    """Coordinates ``(1/N) sum_x eta(x) e_k(x/N)`` for a batch of configurations, shape (..., 2K+1)."""
    occ = np.asarray(occupancies, dtype=float)
    n = occ.shape[-1]
    basis = _basis(np.arange(n) / n, truncation)
    return occ @ basis.T / n


def empirical_measure(config, truncation=DEFAULT_TRUNCATION):
    if truncation < 0:
        raise ValueError("truncation must be nonnegative")
    return MeasureCoords(truncation, empirical_coords(config.occupancy, truncation))


def density_coords(values, truncation=DEFAULT_TRUNCATION):
    """Coordinates of ``rho(theta) d theta`` from samples on ``theta_j = j/M`` (rectangle rule)."""
    v = np.asarray(values, dtype=float)
    m = v.shape[-1]
    basis = _basis(np.arange(m) / m, truncation)
    return MeasureCoords(truncation, basis @ v / m) if v.ndim == 1 else v @ basis.T / m


def distance_tail_bound(truncation):
    """Bound ``2 (2 sqrt 2) 2^-K`` on the omitted ``|k| > K`` terms of the metric."""
    return 2.0 * 2.0 * np.sqrt(2.0) * 2.0 ** (-truncation)


def measure_distance(m1, m2):
    """Truncated metric ``sum_{|k|<=K} 2^-|k| |<m1,e_k> - <m2,e_k>|`` and its tail bound."""
    if m1.truncation != m2.truncation:
        raise ValueError("coordinates must share the truncation order")
    k = np.arange(-m1.truncation, m1.truncation + 1)
    d = float(np.sum(2.0 ** (-np.abs(k)) * np.abs(m1.coeffs - m2.coeffs)))
    return d, distance_tail_bound(m1.truncation)


def coords_distance(c1, c2):
    """Vectorised metric on raw coordinate arrays (last axis ``2K+1``)."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    kmax = (c1.shape[-1] - 1) // 2
    w = 2.0 ** (-np.abs(np.arange(-kmax, kmax + 1)))
    return np.sum(w * np.abs(c1 - c2), axis=-1)


# ---------------------------------------------------------------------------
# Snapshot dump
# ---------------------------------------------------------------------------


def dump_snapshots(path, times, snapshots):
    """Write ``t=<time> <0/1 string>`` lines."""
    with open(path, "w") as fh:
        for t, cfg in zip(times, snapshots):
            fh.write(f"t={float(t)!r} {cfg.to_string()}\n")


def load_snapshots(path):
    times, configs = [], []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            head, bits = line.split()
            if not head.startswith("t="):
                raise ValueError(f"bad snapshot line: {line!r}")
            times.append(float(head[2:]))
            configs.append(LatticeConfig.from_string(bits))
    return times, configs
