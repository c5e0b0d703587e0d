import json
import subprocess
import sys

import jsonschema
import numpy as np
import pytest

from rdstatic.cli import main
from rdstatic.driver import (
    EXPERIMENTS,
    ExperimentConfig,
    config_hash,
    experiment_census,
    experiment_hydrodynamics,
    experiment_hydrostatics,
    experiment_quasipotential,
    initial_rng,
    load_config,
    model_from_config,
)
from rdstatic.model import load_snapshots

SMALL = {"N": [32, 64], "replicas": 3, "horizon": 0.05, "M": 64, "dt": 1e-3, "truncation": 8}


def test_defaults_and_validation():
    cfg = ExperimentConfig()
    assert cfg["model"] == {"frak_a": 1.0, "frak_b": 2.0}
    assert cfg["N"] == [64, 128, 256, 512]
    for bad in ({"N": []}, {"dt": -1.0}, {"seed": -1}, {"unknown": 1}, {"seed": 2**64},
                {"profile": {"amplitude": 0.9}}, {"schema_version": 2}):
        with pytest.raises(jsonschema.ValidationError):
            ExperimentConfig(bad)
    with pytest.raises(ValueError):
        ExperimentConfig({"model": {"frak_a": 2.0, "frak_b": 1.0}})
    with pytest.raises(ValueError):
        ExperimentConfig({"model": {"frak_a": 1.0, "frak_b": 2.0, "table": [1, 2]}})
    with pytest.raises(ValueError):
        ExperimentConfig({"model": {"frak_a": 1.0}})


def test_hash_and_replace(tmp_path):
    a = ExperimentConfig({"seed": 1})
    assert a.hash == ExperimentConfig({"seed": 1}).hash == config_hash(a.data)
    assert a.hash != ExperimentConfig({"seed": 2}).hash
    b = a.replace(profile={"mean": 0.4})
    assert b["profile"] == {"mean": 0.4, "amplitude": 0.3, "mode": 1} and b["seed"] == 1
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"seed": 7, "N": [16]}))
    c = load_config(f, threads=2)
    assert (c["seed"], c["N"], c["threads"]) == (7, [16], 2)


def test_model_from_config():
    rates, poly = model_from_config(ExperimentConfig())
    assert rates.table.tolist() == [1, 5, 17, 5, 5, 17, 5, 1]
    assert poly.lipschitz_F == pytest.approx(10.0)
    rates, _ = model_from_config(ExperimentConfig({"model": {"table": [1, 2]}}))
    assert rates.radius == 0


def test_initial_rng_streams():
    a = initial_rng(5, 0).random(4)
    assert np.array_equal(a, initial_rng(5, 0).random(4))
    assert not np.array_equal(a, initial_rng(5, 1).random(4))
    assert not np.array_equal(a, initial_rng(6, 0).random(4))


def test_hydrodynamics_reproducible(tmp_path):
    cfg = ExperimentConfig(SMALL)
    r1 = experiment_hydrodynamics(cfg, tmp_path / "a")
    r2 = experiment_hydrodynamics(cfg.replace(threads=3), tmp_path / "b")
    assert r1["by_N"] == r2["by_N"]
    assert (tmp_path / "a" / "hydrodynamics.csv").read_bytes() == (tmp_path / "b" / "hydrodynamics.csv").read_bytes()
    head = (tmp_path / "a" / "hydrodynamics.csv").read_text().splitlines()[0]
    assert head == "N,replica,d_initial,d_final"
    rep = json.loads((tmp_path / "a" / "hydrodynamics.json").read_text())
    assert rep["config_hash"] == cfg.hash and "numpy" in rep["versions"]
    assert len(rep["median_decreases"]) == 1


def test_hydrostatics_small(tmp_path):
    cfg = ExperimentConfig({"N": [32], "replicas": 2, "burn_in": 0.5, "n_samples": 5, "thinning": 0.05,
                            "truncation": 8})
    rep = experiment_hydrostatics(cfg, tmp_path)
    e = rep["by_N"]["32"]
    assert e["n_samples"] == 10 and rep["flip_symmetric"]
    assert 0 <= e["frac_within_0.05_stable"] <= e["frac_within_0.05_all"] <= 1
    assert set(e) >= {"split_upper_well", "frac_nearest_unstable_constant", "mean_distance_to_stable"}
    lines = (tmp_path / "hydrostatics.csv").read_text().splitlines()
    assert lines[0] == "N,replica,sample,nearest,d_0,d_1,d_2" and len(lines) == 11


def test_census_experiment(tmp_path):
    rep = experiment_census(ExperimentConfig(), tmp_path)
    assert [e["families"] for e in rep["sweep"]] == [3, 4]
    assert rep["count_nondecreasing_in_a"]
    assert (tmp_path / "census_a5.5" / "census.json").exists()


def test_quasipotential_experiment(tmp_path):
    cfg = ExperimentConfig({"T_grid": [2.0, 8.0], "qp_grid": 16, "targets": [0.5]})
    rep = experiment_quasipotential(cfg, tmp_path)
    assert rep["heteroclinic_edges"] == [[1, 0], [1, 2]]
    assert rep["argmin_stable"] and rep["triangle_inequality"] and rep["W_matches_normalized"]
    row = (tmp_path / "quasipotential.csv").read_text().splitlines()[1].split(",")
    # V_1(1/2) = 0 and W(1/2) = normalized w of the middle family
    assert float(row[2]) < 1e-12
    assert float(row[-1]) == pytest.approx(rep["normalized"][1], abs=1e-9)


def test_experiments_registry():
    assert set(EXPERIMENTS) == {"hydrodynamics", "hydrostatics", "census", "quasipotential"}


def test_cli_subcommands(tmp_path, capsys):
    cfgf = tmp_path / "cfg.json"
    cfgf.write_text(json.dumps({"horizon": 0.02, "n_samples": 4, "M": 32, "dt": 1e-3,
                                "T_grid": [2.0], "qp_grid": 16}))
    common = ["--config", str(cfgf), "--out", str(tmp_path), "--seed", "3"]
    assert main(["simulate", "--N", "16", *common]) == 0
    times, snaps = load_snapshots(tmp_path / "snapshots.txt")
    assert len(snaps) == 4 and snaps[0].occupancy.size == 16
    assert main(["hydro", *common]) == 0
    assert (tmp_path / "path.csv").exists()
    assert main(["rate-eval", "--path", str(tmp_path / "path.csv"), *common]) == 0
    assert json.loads((tmp_path / "rate.json").read_text())["I_T"] < 1e-5
    assert main(["census", *common]) == 0
    assert len(json.loads((tmp_path / "census.json").read_text())) == 3
    assert main(["qp", *common]) == 0
    assert main(["fw", "--cost", str(tmp_path / "cost_matrix.json"), *common]) == 0
    trees = json.loads((tmp_path / "trees.json").read_text())
    assert [t["root"] for t in trees] == [0, 1, 2]
    assert main(["experiment", "census", *common]) == 0
    assert str(tmp_path) in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["fw", *common])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "rdstatic", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout
