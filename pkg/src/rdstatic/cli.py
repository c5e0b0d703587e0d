"""Command line entry point: ``rdstatic <subcommand> [--config PATH] [--seed S] [--out DIR] [--threads N]``."""

import argparse
from pathlib import Path
import sys

import numpy as np

from .driver import EXPERIMENTS, _profile_fn, initial_rng, load_config, model_from_config
from .elliptic import build_census, heteroclinic_edges, write_census
from .fwgraph import tree_report
from .ldp import rate_report, write_rate_report
from .model import dump_snapshots, kmc_run
from .pde import DensityField, dump_path_csv, hydro_solve, load_path_csv
from .quasipotential import CostMatrix, v_matrix


def _cfg(args):
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.threads is not None:
        over["threads"] = args.threads
    if args.out is not None:
        over["out"] = args.out
    return load_config(args.config, **over)


def _out(cfg):
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    cfg = _cfg(args)
    rates, _ = model_from_config(cfg)
    N = args.N or cfg["N"][0]
    dens = _profile_fn(cfg)(np.arange(N) / N)
    occ = (initial_rng(cfg["seed"], 0).random(N) < dens).astype(np.uint8)
    horizon = cfg["horizon"]
    times = np.linspace(0.0, horizon, cfg["n_samples"] + 1)[1:] if horizon > 0 else np.array([0.0])
    snaps = kmc_run(occ, rates, horizon, cfg["seed"], observe_at=times)
    path = _out(cfg) / "snapshots.txt"
    dump_snapshots(path, times, snaps)
    return path


def _hydro_path(cfg, save_rows=100):
    _, poly = model_from_config(cfg)
    T, dt = cfg["horizon"], cfg["dt"]
    n = max(1, int(round(T / dt)))
    gamma = DensityField.from_function(_profile_fn(cfg), cfg["M"])
    return hydro_solve(gamma, n * (T / n), T / n, poly, save_every=max(1, n // save_rows)), poly


def cmd_hydro(args):
    cfg = _cfg(args)
    path, _ = _hydro_path(cfg)
    out = _out(cfg) / "path.csv"
    dump_path_csv(path, out)
    return out


def cmd_census(args):
    cfg = _cfg(args)
    _, poly = model_from_config(cfg)
    return write_census(build_census(poly), poly, _out(cfg))


def cmd_rate_eval(args):
    cfg = _cfg(args)
    if args.path:
        _, poly = model_from_config(cfg)
        path = load_path_csv(args.path)
    else:
        path, poly = _hydro_path(cfg)
    out = _out(cfg) / "rate.json"
    write_rate_report(rate_report(path, poly), out)
    return out


def cmd_qp(args):
    cfg = _cfg(args)
    _, poly = model_from_config(cfg)
    census = build_census(poly)
    cm = v_matrix(census, poly, T_grid=tuple(cfg["T_grid"]), m=cfg["qp_grid"],
                  per_unit=cfg["slices_per_unit_time"], edges=heteroclinic_edges(census, poly))
    out = _out(cfg) / "cost_matrix.json"
    cm.to_json(out)
    return out


def cmd_fw(args):
    cfg = _cfg(args)
    if not args.cost:
        raise SystemExit("fw needs --cost <cost_matrix.json> (as written by the qp subcommand)")
    cm = CostMatrix.from_json(args.cost)
    out = _out(cfg) / "trees.json"
    tree_report(cm, out)
    return out


def cmd_experiment(args):
    cfg = _cfg(args)
    report = EXPERIMENTS[args.name](cfg, _out(cfg))
    return Path(cfg["out"]) / f"{report['experiment']}.json"


def build_parser():
    p = argparse.ArgumentParser(prog="rdstatic", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON config (see rdstatic.driver.SCHEMA)")
    common.add_argument("--seed", type=int, help="u64 seed, overrides the config")
    common.add_argument("--out", help="output directory, overrides the config")
    common.add_argument("--threads", type=int, help="replica worker threads")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("simulate", parents=[common], help="KMC run, writes snapshots.txt")
    s.add_argument("--N", type=int, help="lattice size (default: first entry of config N)")
    s.set_defaults(func=cmd_simulate)
    sub.add_parser("hydro", parents=[common], help="PDE solve, writes path.csv").set_defaults(func=cmd_hydro)
    sub.add_parser("census", parents=[common], help="stationary families, writes census.json").set_defaults(
        func=cmd_census)
    s = sub.add_parser("rate-eval", parents=[common], help="rate functional of a path, writes rate.json")
    s.add_argument("--path", type=Path, help="path CSV (default: the hydrodynamic path of the config)")
    s.set_defaults(func=cmd_rate_eval)
    sub.add_parser("qp", parents=[common], help="cost matrix, writes cost_matrix.json").set_defaults(func=cmd_qp)
    s = sub.add_parser("fw", parents=[common], help="minimal in-trees, writes trees.json")
    s.add_argument("--cost", type=Path, help="cost matrix JSON")
    s.set_defaults(func=cmd_fw)
    s = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    s.add_argument("name", choices=sorted(EXPERIMENTS))
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.seed is not None and not 0 <= args.seed < 2**64:
        raise SystemExit("--seed must be a u64")
    out = args.func(args)
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
