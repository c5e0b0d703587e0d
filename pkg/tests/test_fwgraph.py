import json

import numpy as np
import pytest

from rdstatic.fwgraph import (
    W_eval,
    brute_force_arborescence,
    enumerate_trees,
    invariant_sandwich,
    min_arborescence,
    stationary_from_Q,
    tree_polynomial_Q,
    tree_report,
    tree_weights,
    weight_interval,
)
from rdstatic.quasipotential import CostMatrix


def _random_w(rng, n, integer=False):
    W = rng.integers(0, 3, (n, n)).astype(float) if integer else rng.random((n, n))
    np.fill_diagonal(W, 0.0)
    return W


def _stationary(P):
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    return np.linalg.lstsq(A, np.r_[np.zeros(n), 1.0], rcond=None)[0]


def test_two_families():
    v = np.array([[0.0, 0.3], [0.7, 0.0]])
    tw = tree_weights(v)
    assert tw.w.tolist() == [0.7, 0.3]
    assert tw.trees == ((-1, 0), (1, -1))
    assert tw.argmin == (1,)


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_tree_counts(n):
    # Cayley: n^(n-2) rooted trees into a fixed root
    assert len(enumerate_trees(n, 0)) == (n ** (n - 2) if n > 1 else 1)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_contraction_matches_enumeration(n):
    rng = np.random.default_rng(n)
    for trial in range(150):
        W = _random_w(rng, n, integer=trial % 2 == 0)
        for r in range(n):
            assert min_arborescence(W, r) == brute_force_arborescence(W, r)


def test_chafee_infante_matrix(vmat12):
    tw = tree_weights(vmat12)
    v = vmat12.values
    # root +: the minus well pays its exit, one half is free
    assert tw.w[2] == pytest.approx(v[0, 1])
    assert tw.w[0] == pytest.approx(v[2, 1])
    assert tw.argmin == (0, 2)
    assert tw.w[1] > max(tw.w[0], tw.w[2])
    assert tw.check_triangle(vmat12)


def test_lexicographic_tie_break():
    v = np.zeros((3, 3))
    assert min_arborescence(v, 2) == (0.0, [1, 2, -1])
    with pytest.raises(ValueError):
        min_arborescence(v, 3)


def test_triangle_random():
    rng = np.random.default_rng(9)
    for _ in range(100):
        W = _random_w(rng, int(rng.integers(2, 7)))
        assert tree_weights(W).check_triangle(W)


def test_W_eval(vmat12):
    tw = tree_weights(vmat12)
    n = tw.w.size
    for i in range(n):
        costs = np.full(n, 5.0)
        costs[i] = 0.0
        # at a base point of family i, V_i = 0 and the other V_j are costly
        assert W_eval(costs, tw) == pytest.approx(min(tw.normalized[i], 5.0 + np.delete(tw.normalized, i).min()))
    i0 = int(np.argmin(tw.normalized))
    costs = np.full(n, 1.0)
    costs[i0] = 0.0
    assert W_eval(costs, tw) == 0.0
    rng = np.random.default_rng(0)
    for _ in range(20):
        c = rng.random(n)
        assert np.all(W_eval(c, tw) <= tw.normalized + c)
    with pytest.raises(ValueError):
        W_eval([0.0], tw)


def test_W_identity_with_exact_costs(vmat12):
    # V_i(base point of j) = v_ij makes W(base j) = normalized w_j, via the triangle inequality
    tw = tree_weights(vmat12)
    v = vmat12.values
    for j in range(v.shape[0]):
        assert W_eval(v[:, j], tw) == pytest.approx(tw.normalized[j], abs=1e-12)


def test_tree_polynomial_small():
    p = np.array([[0.0, 0.2], [0.5, 0.0]])
    assert tree_polynomial_Q(p, 0) == pytest.approx(0.5)
    assert tree_polynomial_Q(p, 1) == pytest.approx(0.2)
    assert tree_polynomial_Q(p, 0, "enumeration") == pytest.approx(0.5)
    with pytest.raises(ValueError):
        tree_polynomial_Q(p, 0, "magic")


@pytest.mark.parametrize("n", [3, 4, 6])
def test_tree_polynomial_methods_agree(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        p = rng.random((n, n))
        for i in range(n):
            a = tree_polynomial_Q(p, i)
            b = tree_polynomial_Q(p, i, "enumeration")
            assert a == pytest.approx(b, rel=1e-10)


def test_tree_polynomial_unreachable():
    p = np.array([[0.0, 0.3, 0.0], [0.4, 0.0, 0.0], [0.1, 0.2, 0.0]])
    # nothing ever jumps into 2
    assert tree_polynomial_Q(p, 2) == pytest.approx(0.0, abs=1e-15)
    assert tree_polynomial_Q(p, 2, "enumeration") == 0.0


def test_stationary_from_Q_matches_linear_solve():
    rng = np.random.default_rng(3)
    P = rng.random((5, 5))
    np.fill_diagonal(P, 0.0)
    P /= P.sum(axis=1, keepdims=True) * 1.5
    np.fill_diagonal(P, 1 - P.sum(axis=1))
    assert np.allclose(stationary_from_Q(P), _stationary(P), atol=1e-12)


def test_sandwich_collapses_at_a_equal_one():
    rng = np.random.default_rng(4)
    p = rng.random((4, 4))
    lo, hi = invariant_sandwich(p, p, 1.0)
    q = stationary_from_Q(p)
    assert np.allclose(lo, q) and np.allclose(hi, q)
    with pytest.raises(ValueError):
        invariant_sandwich(p, p, 0.5)


def test_sandwich_two_states():
    p12, p21 = 0.3, 0.1
    p = np.array([[0.0, p12], [p21, 0.0]])
    nu1 = p21 / (p12 + p21)
    for a in (1.01, 1.5, 3.0):
        lo, hi = invariant_sandwich(p, p, a)
        assert lo[0] <= nu1 <= hi[0]


def test_weight_interval(vmat12):
    lo, hi = weight_interval(vmat12)
    assert np.all(lo <= hi + 1e-15)
    assert np.allclose(hi, tree_weights(vmat12).w)
    prov = [["", "upper-bound"], ["mam", ""]]
    cm = CostMatrix(np.array([[0.0, 2.0], [1.0, 0.0]]), prov)
    lo, hi = weight_interval(cm)
    assert lo.tolist() == [1.0, 0.0] and hi.tolist() == [1.0, 2.0]
    lo, hi = weight_interval(np.array([[0.0, 2.0], [1.0, 0.0]]))
    assert np.array_equal(lo, hi)


def test_tree_report(tmp_path, vmat12):
    f = tmp_path / "trees.json"
    rows = tree_report(vmat12, f)
    back = json.loads(f.read_text())
    assert len(back) == 3 and [r["root"] for r in back] == [0, 1, 2]
    for r in rows:
        assert set(r) == {"root", "weight", "edges", "weight_interval"}
        assert len(r["edges"]) == 2
        assert sum(e[2] for e in r["edges"]) == pytest.approx(r["weight"])
