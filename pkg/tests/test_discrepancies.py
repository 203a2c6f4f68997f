import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import power_iteration_ratio, w1_linprog
from transfer_moduli.discrepancies import (a_discrepancy, covariance_ratio, euclidean_metric,
                                           smallest_transfer_constant, transfer_exponent_check,
                                           verify_modulus_bounds, wasserstein1_discrete, y_discrepancy,
                                           y_discrepancy_prime)
from transfer_moduli.instances import (FiniteInstance, LinearInstance, random_finite_instance,
                                       random_linear_instance, random_spd, toy_t1)


def same_sides(inst):
    return FiniteInstance(inst.p_weights, inst.p_weights, inst.p_eta, inst.p_eta, inst.hypotheses)


def test_y_discrepancy_examples():
    assert y_discrepancy(toy_t1()) == pytest.approx(0.40, abs=1e-12)
    assert y_discrepancy(same_sides(toy_t1())) == 0.0
    single = FiniteInstance([1.0], [1.0], [0.9], [0.7], [[1]])
    assert y_discrepancy(single) == pytest.approx(0.2, abs=1e-12)


def test_y_discrepancy_prime_examples():
    assert y_discrepancy_prime(toy_t1()) == pytest.approx(0.40, abs=1e-12)
    assert y_discrepancy_prime(same_sides(toy_t1())) == 0.0
    # Q shifts every risk by the same amount: identical excess profile
    shifted = FiniteInstance([0.5, 0.5], [0.5, 0.5], [1.0, 0.9], [0.8, 0.9], [[1, 1], [1, -1]])
    assert y_discrepancy_prime(shifted) == pytest.approx(0.0, abs=1e-12)


def test_a_discrepancy_examples():
    assert a_discrepancy(toy_t1()) == 0.0
    inst = FiniteInstance([1.0, 0.0], [0.0, 1.0], [0.5, 0.5], [0.5, 0.5], [[1, 1], [1, -1]])
    assert a_discrepancy(inst) == 1.0
    assert a_discrepancy(FiniteInstance([1.0], [1.0], [0.2], [0.1], [[1]])) == 0.0


def test_transfer_exponent_examples():
    t1 = toy_t1()
    assert transfer_exponent_check(t1, 1, 1.0).ok
    res = transfer_exponent_check(t1, 1, 0.5)
    assert not res.ok and t1.name(res.worst_index) == "h_c"
    assert res.worst_gap == pytest.approx(0.90 - 0.65, abs=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert transfer_exponent_check(random_finite_instance(rng), 2, 1e6).ok


def test_smallest_transfer_constant_is_tight():
    t1 = toy_t1()
    c = smallest_transfer_constant(t1, 1)
    assert c == pytest.approx(1.0, abs=1e-12)
    assert transfer_exponent_check(t1, 1, c).ok
    assert not transfer_exponent_check(t1, 1, c * 0.99).ok


def test_w1_examples():
    assert wasserstein1_discrete([0.5, 0.5], [0.9, 0.1], [[0, 1], [1, 0]]) == pytest.approx(0.4, abs=1e-12)
    assert wasserstein1_discrete([0.3, 0.7], [0.3, 0.7], [[0, 1], [1, 0]]) == 0.0
    line = euclidean_metric(np.array([[0.0], [1.0], [2.0]]))
    assert wasserstein1_discrete([1, 0, 0], [0, 0, 1], line) == pytest.approx(2.0, abs=1e-12)


def test_w1_errors():
    with pytest.raises(ValueError):
        wasserstein1_discrete([0.5, 0.5], [0.6, 0.6], [[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        wasserstein1_discrete([0.5, 0.5], [0.5, 0.5], [[0, -1], [1, 0]])


@given(st.integers(0, 10**6), st.integers(1, 6))
def test_w1_matches_linprog_and_is_a_metric(seed, m):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((m, 2))
    cost = euclidean_metric(pts)
    p, q, r = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
    w_pq = wasserstein1_discrete(p, q, cost)
    assert w_pq == pytest.approx(w1_linprog(p, q, cost), abs=1e-9)
    assert abs(w_pq - wasserstein1_discrete(q, p, cost)) <= 1e-9
    assert wasserstein1_discrete(p, p, cost) <= 1e-12
    assert w_pq <= wasserstein1_discrete(p, r, cost) + wasserstein1_discrete(r, q, cost) + 1e-9


def test_covariance_ratio_examples():
    assert covariance_ratio(np.diag([1, 0.25]), np.diag([0.25, 1])) == pytest.approx(4.0, rel=1e-12)
    s = random_spd(np.random.default_rng(1), 3)
    assert covariance_ratio(s, s) == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ValueError):
        covariance_ratio(np.diag([1.0, -1.0]), np.eye(2))


@pytest.mark.parametrize("seed", range(5))
def test_covariance_ratio_power_iteration(seed):
    rng = np.random.default_rng(seed)
    a, b = random_spd(rng, 5), random_spd(rng, 5)
    assert covariance_ratio(a, b) == pytest.approx(power_iteration_ratio(a, b), rel=1e-8)
    assert covariance_ratio(a, b) * covariance_ratio(b, a) >= 1 - 1e-12


def test_t1_bound_report_value():
    rep = verify_modulus_bounds(toy_t1(), [0.3], measures=("y_disc",))
    row = rep.rows[0]
    assert row.delta == pytest.approx(0.40, abs=1e-12)
    assert row.bound == pytest.approx(1.1, abs=1e-12)
    assert rep.ok


@given(st.integers(0, 10**6))
def test_finite_bounds_hold(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng)
    rep = verify_modulus_bounds(inst, np.linspace(0, 1, 20))
    assert rep.ok, rep.violations()[:3]
    same = verify_modulus_bounds(same_sides(inst), np.linspace(0, 1, 5))
    assert same.ok and all(r.delta <= r.eps + 1e-12 for r in same.rows)


@given(st.integers(0, 10**6))
def test_prime_bound_not_looser_when_best_risks_match(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng, covariate_shift=True)
    if abs(inst.risks_p.min() - inst.risks_q.min()) > 1e-12:
        return
    assert y_discrepancy_prime(inst) <= 2 * y_discrepancy(inst) + 1e-12


@given(st.integers(0, 10**6), st.integers(1, 6), st.booleans())
def test_linear_covariance_bound(seed, d, shared):
    rng = np.random.default_rng(seed)
    inst = random_linear_instance(rng, d, shared=shared)
    rep = verify_modulus_bounds(inst, np.linspace(0.001, 1, 20))
    assert rep.ok
    if shared:
        for r in rep.rows:
            assert abs(r.slack) <= 1e-8 * max(1.0, r.bound)


def test_w1_bound_on_atom_instance():
    pts = np.array([[0.5, 0.0], [0.0, 0.5], [-0.4, 0.3]])
    w = np.array([0.3, -0.2])
    cls = np.array([w, [0.2, 0.1], [-0.3, 0.3], [0.0, 0.0]])
    inst = LinearInstance.from_atoms(pts, [0.5, 0.3, 0.2], [0.2, 0.3, 0.5], w, w, w1_class=cls)
    rep = verify_modulus_bounds(inst, np.linspace(0.0, 0.2, 20))
    assert rep.ok
    assert {r.measure for r in rep.rows} == {"covariance", "w1"}
