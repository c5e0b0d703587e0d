import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from rdstatic.model import (
    LatticeConfig,
    MeasureCoords,
    build_rate_table,
    config_index,
    coords_distance,
    density_coords,
    distance_tail_bound,
    dump_snapshots,
    empirical_coords,
    empirical_measure,
    generator_matrix,
    kmc_final_states,
    kmc_run,
    load_snapshots,
    measure_distance,
)


def test_rate_table_values():
    r = build_rate_table((17, 1, 5))
    assert r.rate((0, 0, 0)) == 1
    assert r.rate((0, 1, 0)) == 17
    assert r.rate((0, 0, 1)) == 5 and r.rate((0, 1, 1)) == 5
    assert r.table.min() == 1.0
    assert list(r.table) == [1, 5, 17, 5, 5, 17, 5, 1]
    assert r.is_flip_symmetric()


def test_rate_table_constant_and_explicit():
    assert np.all(build_rate_table([1.0] * 8).table == 1.0)
    r = build_rate_table(np.arange(1, 33))
    assert r.radius == 2
    with pytest.raises(ValueError):
        build_rate_table([1.0] * 6)
    with pytest.raises(ValueError):
        build_rate_table([1, 0, 1])


def test_lattice_config_validation():
    c = LatticeConfig.from_string("0110")
    assert c.to_string() == "0110" and c.n_sites == 4
    with pytest.raises(ValueError):
        LatticeConfig([0, 2, 1])
    with pytest.raises(ValueError):
        LatticeConfig([])


def test_zero_horizon_returns_init():
    occ = np.array([0, 1, 1, 0, 1, 0, 0, 0], dtype=np.uint8)
    (snap,) = kmc_run(occ, build_rate_table((17, 1, 5)), 0.0, seed=3)
    assert np.array_equal(snap.occupancy, occ)


def test_determinism():
    rates = build_rate_table((17, 1, 5))
    occ = (np.random.default_rng(0).random(64) < 0.5).astype(np.uint8)
    a = kmc_run(occ, rates, 0.5, seed=11, observe_at=[0.1, 0.3, 0.5], replica=2)
    b = kmc_run(occ, rates, 0.5, seed=11, observe_at=[0.1, 0.3, 0.5], replica=2)
    c = kmc_run(occ, rates, 0.5, seed=11, observe_at=[0.1, 0.3, 0.5], replica=3)
    assert all(np.array_equal(x.occupancy, y.occupancy) for x, y in zip(a, b))
    assert not all(np.array_equal(x.occupancy, y.occupancy) for x, y in zip(a, c))


def test_rate_bookkeeping_rebuild():
    rates = build_rate_table((17, 1, 5))
    occ = (np.random.default_rng(1).random(32) < 0.5).astype(np.uint8)
    _, stats = kmc_run(occ, rates, 0.2, seed=5, check_rates=True, return_stats=True)
    assert stats["n_events"] > 1000


def test_exchange_only_conserves_particles():
    rates = build_rate_table((17, 1, 5))
    occ = (np.random.default_rng(2).random(50) < 0.3).astype(np.uint8)
    snaps = kmc_run(occ, rates, 0.2, seed=9, observe_at=np.linspace(0.02, 0.2, 10), glauber=False)
    assert all(s.occupancy.sum() == occ.sum() for s in snaps)
    flipped = kmc_run(occ, rates, 0.2, seed=9)
    assert flipped[-1].occupancy.sum() != occ.sum()


def test_first_event_time_from_empty():
    # all exchanges are no-ops; each of the N sites flips at rate a1 = 1
    N = 20
    rates = build_rate_table((17, 1, 5))
    times = np.array([
        kmc_run(np.zeros(N, np.uint8), rates, 1.0, seed=123, replica=r, return_stats=True,
                buffer_size=64)[1]["first_event_time"]
        for r in range(10_000)
    ])
    se = times.std(ddof=1) / np.sqrt(times.size)
    assert abs(times.mean() - 1.0 / N) < 3 * se


def test_small_system_law_matches_generator():
    N, horizon, runs = 4, 0.2, 20_000
    rates = build_rate_table((17, 1, 5))
    init = np.array([1, 0, 0, 0], dtype=np.uint8)
    exact = expm(horizon * generator_matrix(N, rates))[config_index(init)]
    codes = kmc_final_states(init, rates, horizon, seed=77, n_runs=runs)
    freq = np.bincount(codes, minlength=2**N) / runs
    sigma = np.sqrt(exact * (1 - exact) / runs)
    assert np.all(np.abs(freq - exact) <= 3 * sigma + 1e-12)


def test_generator_rows_sum_to_zero():
    q = generator_matrix(5, build_rate_table((17, 1, 5)))
    assert np.allclose(q.sum(axis=1), 0.0)


def test_empirical_measure_examples():
    full = empirical_measure(LatticeConfig(np.ones(16, np.uint8)), 5)
    assert full[0] == pytest.approx(1.0)
    assert np.allclose(full.coeffs[np.arange(11) != 5], 0.0, atol=1e-14)
    empty = empirical_measure(LatticeConfig(np.zeros(16, np.uint8)), 5)
    assert np.all(empty.coeffs == 0.0)
    one = empirical_measure(LatticeConfig([1, 0, 0, 0]), 1)
    assert one[0] == pytest.approx(0.25)
    assert one[1] == pytest.approx(np.sqrt(2) / 4)
    assert one[-1] == pytest.approx(0.0, abs=1e-15)


def test_distance_examples():
    m = 256
    theta = np.arange(m) / m
    eps = 0.1
    a = density_coords(np.ones(m), 20)
    b = density_coords(1 + eps * np.sqrt(2) * np.cos(2 * np.pi * theta), 20)
    d, tail = measure_distance(a, b)
    assert d == pytest.approx(eps / 2, rel=1e-12)
    assert tail == distance_tail_bound(20)
    assert measure_distance(a, a)[0] == 0.0


def test_distance_l2_bound():
    rng = np.random.default_rng(4)
    m = 128
    for _ in range(20):
        g1, g2 = rng.random(m), rng.random(m)
        d, tail = measure_distance(density_coords(g1), density_coords(g2))
        assert d <= 3 * np.sqrt(np.mean((g1 - g2) ** 2)) + tail


coords = st.lists(st.floats(-1, 1), min_size=7, max_size=7).map(np.array)


@settings(max_examples=200, deadline=None)
@given(coords, coords, coords)
def test_distance_is_metric(x, y, z):
    assert coords_distance(x, x) == 0.0
    assert coords_distance(x, y) == coords_distance(y, x)
    assert coords_distance(x, z) <= coords_distance(x, y) + coords_distance(y, z) + 1e-12


def test_measure_coords_shape_check():
    with pytest.raises(ValueError):
        MeasureCoords(2, np.zeros(4))
    with pytest.raises(ValueError):
        measure_distance(MeasureCoords(1, np.zeros(3)), MeasureCoords(2, np.zeros(5)))


def test_empirical_coords_batch_matches_single():
    rng = np.random.default_rng(5)
    occ = (rng.random((3, 40)) < 0.5).astype(np.uint8)
    batch = empirical_coords(occ, 4)
    for row, c in zip(occ, batch):
        assert np.allclose(empirical_measure(LatticeConfig(row), 4).coeffs, c)


def test_snapshot_roundtrip(tmp_path):
    rates = build_rate_table((17, 1, 5))
    occ = np.array([0, 1] * 8, dtype=np.uint8)
    t = [0.05, 0.1]
    snaps = kmc_run(occ, rates, 0.1, seed=1, observe_at=t)
    f = tmp_path / "snap.txt"
    dump_snapshots(f, t, snaps)
    assert f.read_text().splitlines()[0].startswith("t=0.05 ")
    times, back = load_snapshots(f)
    assert list(times) == t
    assert all(np.array_equal(a.occupancy, b.occupancy) for a, b in zip(snaps, back))
