"""Experiment configuration and orchestration.

An experiment is a pure function of its :class:`ExperimentConfig`: the same
config (including seeds) reproduces the same numbers and CSV bytes. Reports
carry a hash of the canonical config and the versions of the numeric stack.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import copy
import csv
import hashlib
import json
import math
from pathlib import Path

import jsonschema
import numba
import numpy as np
import scipy

from . import __version__
from .elliptic import build_census, heteroclinic_edges, write_census
from .fwgraph import W_eval, tree_weights
from .model import build_rate_table, coords_distance, density_coords, empirical_coords, kmc_run
from .pde import DensityField, hydro_solve
from .quasipotential import mam_minimize, v_matrix
from .reaction import bd_polynomials, chafee_infante_params

__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "load_config",
    "config_hash",
    "model_from_config",
    "initial_rng",
    "family_coords",
    "experiment_hydrodynamics",
    "experiment_hydrostatics",
    "experiment_census",
    "experiment_quasipotential",
    "EXPERIMENTS",
    "write_report",
]

SCHEMA_VERSION = 1

_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_intlist = {"type": "array", "items": _posint, "minItems": 1}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "rdstatic experiment config",
    "type": "object",
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "model": {
            "type": "object",
            "properties": {
                "frak_a": _pos,
                "frak_b": _pos,
                "a2": _pos,
                "table": {"type": "array", "items": _pos, "minItems": 2},
            },
            "additionalProperties": False,
        },
        "N": _intlist,
        "M": {"type": "integer", "minimum": 16},
        "dt": _pos,
        "horizon": {"type": "number", "minimum": 0},
        "burn_in": {"type": "number", "minimum": 0},
        "n_samples": _posint,
        "thinning": _pos,
        "replicas": _posint,
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "truncation": {"type": "integer", "minimum": 0},
        "delta": {"type": "array", "items": _pos, "minItems": 1},
        "profile": {
            "type": "object",
            "properties": {
                "mean": {"type": "number", "minimum": 0, "maximum": 1},
                "amplitude": {"type": "number", "minimum": 0, "maximum": 0.5},
                "mode": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "a_values": {"type": "array", "items": _pos, "minItems": 1},
        "T_grid": {"type": "array", "items": _pos, "minItems": 1},
        "qp_grid": {"type": "integer", "minimum": 8},
        "slices_per_unit_time": _posint,
        "targets": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0,
                                               "exclusiveMaximum": 1}},
        "threads": _posint,
        "out": {"type": "string"},
    },
    "additionalProperties": False,
}

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "model": {"frak_a": 1.0, "frak_b": 2.0},
    "N": [64, 128, 256, 512],
    "M": 256,
    "dt": 1e-4,
    "horizon": 0.1,
    "burn_in": 3.0,
    "n_samples": 50,
    "thinning": 0.05,
    "replicas": 20,
    "seed": 20240601,
    "truncation": 20,
    "delta": [0.05],
    "profile": {"mean": 0.5, "amplitude": 0.3, "mode": 1},
    "a_values": [0.5, 5.5],
    "T_grid": [1.0, 2.0, 4.0, 8.0, 16.0],
    "qp_grid": 32,
    "slices_per_unit_time": 16,
    "targets": [0.1, 0.3, 0.5, 0.7, 0.9],
    "threads": 1,
    "out": "out",
}


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "model":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters; unspecified keys take :data:`DEFAULTS`."""

    data: dict = field(default_factory=dict)

    def __post_init__(self):
        merged = _merge(DEFAULTS, self.data)
        jsonschema.validate(merged, SCHEMA)
        m = merged["model"]
        if "table" in m and ({"frak_a", "frak_b", "a2"} & m.keys()):
            raise ValueError("model takes either a rate table or (frak_a, frak_b[, a2])")
        if "table" not in m and not {"frak_a", "frak_b"} <= m.keys():
            raise ValueError("model needs frak_a and frak_b")
        if "table" not in m and not m["frak_a"] < m["frak_b"]:
            raise ValueError("need frak_a < frak_b")
        object.__setattr__(self, "data", merged)

    def __getitem__(self, key):
        return self.data[key]

    def replace(self, **kw):
        return ExperimentConfig(_merge(self.data, kw))

    @property
    def hash(self):
        return config_hash(self.data)


def config_hash(data):
    blob = json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config(path=None, **overrides):
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
    return ExperimentConfig(_merge(data, overrides))


def _versions():
    return {"rdstatic": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__}


def _header(cfg, name):
    return {"experiment": name, "config_hash": cfg.hash, "versions": _versions(), "config": cfg.data}


def model_from_config(cfg):
    """``(CylinderRate, ReactionPolynomials)`` for the configured model."""
    m = cfg["model"]
    if "table" in m:
        rates = build_rate_table(m["table"])
    else:
        ci = chafee_infante_params(m["frak_a"], m["frak_b"], m.get("a2"))
        rates = build_rate_table(ci.rates)
    return rates, bd_polynomials(rates)


def initial_rng(seed, replica):
    """Stream for initial configurations, disjoint from the dynamics stream of :func:`replica_rng`."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, (int(replica) | (1 << 63)) & 0xFFFFFFFFFFFFFFFF],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _profile_fn(cfg):
    p = cfg["profile"]
    mean, amp, mode = p["mean"], p["amplitude"], p["mode"]
    if not (0.0 <= mean - amp and mean + amp <= 1.0):
        raise ValueError("initial profile leaves [0, 1]")
    return lambda th: mean + amp * np.sin(2.0 * np.pi * mode * th)


def write_report(report, out_dir, name, rows=None, columns=None):
    """Write ``<name>.json`` and, with rows, ``<name>.csv`` (fixed column order)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / f"{name}.json").write_text(json.dumps(report, indent=2, default=float))
    if rows is not None:
        with open(out / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(columns)
            for r in rows:
                w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return out / f"{name}.json"


# ---------------------------------------------------------------------------
# Hydrodynamic limit
# ---------------------------------------------------------------------------


def experiment_hydrodynamics(cfg, out_dir=None):
    """Distance between ``pi^N_t`` and the PDE solution, per ``N`` and replica."""
    rates, poly = model_from_config(cfg)
    gamma_fn = _profile_fn(cfg)
    K = cfg["truncation"]
    t = cfg["horizon"]
    M, dt = cfg["M"], cfg["dt"]
    steps = max(1, int(round(t / dt)))
    if t > 0:
        pde = hydro_solve(DensityField.from_function(gamma_fn, M), steps * (t / steps), t / steps, poly,
                          save_every=steps)
        target = density_coords(pde.slices[-1], K)
    else:
        target = density_coords(gamma_fn(np.arange(M) / M), K)
    start = density_coords(gamma_fn(np.arange(M) / M), K)
    rows = []
    summary = {}
    for N in cfg["N"]:
        x = np.arange(N) / N
        dens = gamma_fn(x)

        def one(r, N=N, dens=dens):
            occ = (initial_rng(cfg["seed"], r).random(N) < dens).astype(np.uint8)
            snaps = kmc_run(occ, rates, t, cfg["seed"] + N, replica=r)
            c0 = empirical_coords(occ, K)
            ct = empirical_coords(snaps[-1].occupancy, K)
            return float(coords_distance(c0, start.coeffs)), float(coords_distance(ct, target.coeffs))

        res = _map(one, range(cfg["replicas"]), cfg["threads"])
        d0 = np.array([a for a, _ in res])
        dt_ = np.array([b for _, b in res])
        for r, (a, b) in enumerate(res):
            rows.append((N, r, a, b))
        summary[str(N)] = {"median_d_t": float(np.median(dt_)), "median_d_0": float(np.median(d0)),
                           "mean_d_t": float(dt_.mean()), "std_d_t": float(dt_.std(ddof=1)) if dt_.size > 1 else 0.0}
    Ns = [str(n) for n in cfg["N"]]
    dec = [summary[b]["median_d_t"] < summary[a]["median_d_t"] for a, b in zip(Ns, Ns[1:])]
    report = _header(cfg, "hydrodynamics") | {"by_N": summary, "median_decreases": dec}
    if out_dir is not None:
        write_report(report, out_dir, "hydrodynamics", rows, ["N", "replica", "d_initial", "d_final"])
    return report


# ---------------------------------------------------------------------------
# Hydrostatics
# ---------------------------------------------------------------------------


def family_coords(profile, K):
    """Coordinates of every grid translate of a census profile, shape ``(n_translates, 2K+1)``."""
    v = profile.values
    if profile.is_constant:
        return density_coords(np.full(8, v[0]), K).coeffs[None, :]
    shifts = np.array([np.roll(v, j) for j in range(v.size)])
    return density_coords(shifts, K)


def hydrostatics_samples(rates, N, seed, replica, burn_in, n_samples, thinning, K):
    """Empirical coordinates of ``n_samples`` thinned snapshots after burn-in.

    The initial configuration is Bernoulli(1/2), a flip-symmetric law.
    """
    occ = (initial_rng(seed, replica).random(N) < 0.5).astype(np.uint8)
    times = burn_in + thinning * np.arange(n_samples)
    snaps = kmc_run(occ, rates, float(times[-1]), seed, observe_at=times, replica=replica)
    return empirical_coords(np.array([s.occupancy for s in snaps]), K)


def classify_samples(coords, fam_coords):
    """Distance of every sample to every family, shape ``(n_samples, n_families)``."""
    out = np.empty((coords.shape[0], len(fam_coords)))
    for i, fc in enumerate(fam_coords):
        out[:, i] = np.min(coords_distance(coords[:, None, :], fc[None, :, :]), axis=1)
    return out


def experiment_hydrostatics(cfg, out_dir=None):
    """Concentration of long-run samples near the stationary families."""
    rates, poly = model_from_config(cfg)
    census = build_census(poly)
    K = cfg["truncation"]
    fam = [family_coords(p, K) for p in census]
    stable = [i for i, p in enumerate(census) if p.kind == "stable-constant"]
    unstable_const = [i for i, p in enumerate(census) if p.kind == "unstable-constant"]
    symmetric = rates.is_flip_symmetric()
    rows = []
    by_N = {}
    for N in cfg["N"]:
        def one(r, N=N):
            c = hydrostatics_samples(rates, N, cfg["seed"] + N, r, cfg["burn_in"], cfg["n_samples"],
                                     cfg["thinning"], K)
            return classify_samples(c, fam)

        dist = np.vstack(_map(one, range(cfg["replicas"]), cfg["threads"]))
        nearest = np.argmin(dist, axis=1)
        entry = {"n_samples": int(dist.shape[0])}
        for delta in cfg["delta"]:
            entry[f"frac_within_{delta}_all"] = float(np.mean(dist.min(axis=1) < delta))
            entry[f"frac_within_{delta}_stable"] = float(np.mean(dist[:, stable].min(axis=1) < delta))
        if len(stable) == 2:
            in_stable = np.isin(nearest, stable)
            upper = stable[int(np.argmax([census[i].values[0] for i in stable]))]
            entry["split_upper_well"] = float(np.mean(nearest[in_stable] == upper)) if in_stable.any() else math.nan
        entry["frac_nearest_unstable_constant"] = float(np.mean(np.isin(nearest, unstable_const)))
        entry["mean_distance_to_stable"] = float(np.mean(dist[:, stable].min(axis=1)))
        by_N[str(N)] = entry
        for k in range(dist.shape[0]):
            rows.append((N, k // cfg["n_samples"], k % cfg["n_samples"], int(nearest[k]), *dist[k]))
    report = _header(cfg, "hydrostatics") | {
        "families": census.labels(), "flip_symmetric": symmetric, "by_N": by_N}
    if out_dir is not None:
        cols = ["N", "replica", "sample", "nearest"] + [f"d_{i}" for i in range(len(fam))]
        write_report(report, out_dir, "hydrostatics", rows, cols)
    return report


# ---------------------------------------------------------------------------
# Census sweep
# ---------------------------------------------------------------------------


def experiment_census(cfg, out_dir=None):
    """Family count versus ``a = (frak_b - frak_a)/2`` at fixed ``frak_a``."""
    fa = cfg["model"].get("frak_a", 1.0)
    rows = []
    entries = []
    for a in cfg["a_values"]:
        ci = chafee_infante_params(fa, fa + 2.0 * a)
        poly = bd_polynomials(build_rate_table(ci.rates))
        census = build_census(poly)
        th = census.thresholds["centers"][0] if census.thresholds["centers"] else {}
        entries.append({"a": a, "rates": list(map(float, ci.rates)), "families": len(census),
                        "labels": census.labels(), "thresholds": census.thresholds})
        rows.append((a, len(census), th.get("time_map_count", 0), th.get("linear_instability_count", 0),
                     th.get("literal_lambda_count", 0)))
        if out_dir is not None:
            write_census(census, poly, Path(out_dir) / f"census_a{a:g}")
    counts = [e["families"] for e in entries]
    order = np.argsort(cfg["a_values"])
    monotone = all(counts[order[i]] <= counts[order[i + 1]] for i in range(len(order) - 1))
    report = _header(cfg, "census") | {"sweep": entries, "count_nondecreasing_in_a": monotone}
    if out_dir is not None:
        write_report(report, out_dir, "census", rows,
                     ["a", "families", "time_map_count", "linear_instability_count", "literal_lambda_count"])
    return report


# ---------------------------------------------------------------------------
# Quasi-potential and W
# ---------------------------------------------------------------------------


def experiment_quasipotential(cfg, out_dir=None):
    """Census, cost matrix, tree weights and ``W`` along constant-density targets."""
    _, poly = model_from_config(cfg)
    census = build_census(poly)
    T_grid = tuple(cfg["T_grid"])
    m, per_unit = cfg["qp_grid"], cfg["slices_per_unit_time"]
    edges = heteroclinic_edges(census, poly)
    cm = v_matrix(census, poly, T_grid=T_grid, m=m, per_unit=per_unit, edges=edges)
    tw = tree_weights(cm)
    n = len(census)
    W_at_families = [min(tw.normalized[j] + cm.values[j, i] for j in range(n)) for i in range(n)]
    rows = []
    for rho in cfg["targets"]:
        target = np.full(m, rho)
        V = [mam_minimize(p, target, poly, T_grid, m=m, per_unit=per_unit).value for p in census]
        rows.append((rho, *V, W_eval(V, tw)))
    report = _header(cfg, "quasipotential") | {
        "families": census.labels(),
        "heteroclinic_edges": sorted([list(e) for e in edges]),
        "cost_matrix": cm.to_dict(),
        "tree_weights": tw.w.tolist(),
        "normalized": tw.normalized.tolist(),
        "argmin": list(tw.argmin),
        "argmin_stable": all(census[i].kind == "stable-constant" for i in tw.argmin),
        "W_at_families": W_at_families,
        "W_matches_normalized": bool(np.allclose(W_at_families, tw.normalized, atol=1e-12)),
        "triangle_inequality": tw.check_triangle(cm),
        "note": "v entries other than heteroclinic-zero are numerical upper estimates; "
                "a larger T_grid can only lower them",
    }
    if out_dir is not None:
        write_report(report, out_dir, "quasipotential", rows,
                     ["rho"] + [f"V_{i}" for i in range(n)] + ["W"])
    return report


EXPERIMENTS = {
    "hydrodynamics": experiment_hydrodynamics,
    "hydrostatics": experiment_hydrostatics,
    "census": experiment_census,
    "quasipotential": experiment_quasipotential,
}
