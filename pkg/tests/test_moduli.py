import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import RationalInstance, boundary_max_quadratic, t1_rational
from transfer_moduli.instances import FiniteInstance, LinearInstance, random_finite_instance, random_spd, toy_t1
from transfer_moduli.moduli import (constraint_set, pivotal_sharp, pivotal_value, pivotal_value_by_sets,
                                    strong_modulus, strong_modulus_detail, weak_modulus, weak_modulus_curve,
                                    weak_modulus_linear)

TOL = 1e-12


def grid_instance(seed, grid=10):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng, grid=grid)
    rat = RationalInstance([Fraction(round(x * grid), grid) for x in inst.p_weights],
                           [Fraction(round(x * grid), grid) for x in inst.q_weights],
                           [Fraction(round(x * grid), grid) for x in inst.p_eta],
                           [Fraction(round(x * grid), grid) for x in inst.q_eta],
                           inst.hypotheses.tolist())
    return inst, rat


def test_t1_constraint_sets():
    t1 = toy_t1()
    assert constraint_set(t1, "P", 0.3).tolist() == [0]
    assert constraint_set(t1, "P", math.inf).tolist() == [0, 1, 2]
    assert constraint_set(t1, "Q", 0.2).tolist() == [1]


def test_t1_moduli_against_rational_oracle():
    t1, rat = toy_t1(), t1_rational()
    for eps in ("0.3", "0.45", "0.6"):
        assert abs(weak_modulus(t1, float(eps)) - float(rat.weak(Fraction(eps)))) <= TOL
    assert weak_modulus(t1, 0.3) == pytest.approx(0.40, abs=TOL)
    assert weak_modulus(t1, 0.45) == pytest.approx(0.40, abs=TOL)
    assert weak_modulus(t1, 0.6) == pytest.approx(0.90, abs=TOL)
    assert strong_modulus(t1, 0.2, 0.01) == 0.0
    assert strong_modulus(t1, 0.5, 0.1) == pytest.approx(0.40, abs=TOL)
    assert float(rat.strong(Fraction("0.5"), Fraction("0.1"))) == 0.4
    assert pivotal_value(t1) == pytest.approx(0.40, abs=TOL)
    assert pivotal_sharp(t1) == pytest.approx(0.40, abs=TOL)
    assert pivotal_value_by_sets(t1) == pytest.approx(0.40, abs=TOL)


def test_t1_curve():
    bps = weak_modulus_curve(toy_t1()).breakpoints
    assert len(bps) == 3
    assert np.allclose(bps, [(0, 0.4), (0.4, 0.4), (0.5, 0.9)], atol=TOL)


def test_single_hypothesis_curve():
    inst = FiniteInstance([1.0], [1.0], [0.3], [0.7], [[1]])
    assert weak_modulus_curve(inst).breakpoints == ((0.0, 0.0),)


def test_two_minimizer_pivots():
    # h0 and h1 tie under P; under Q their excesses are 0 and 0.25
    inst = FiniteInstance([0.5, 0.5], [0.5, 0.5], [0.5, 1.0], [0.25, 1.0], [[1, 1], [-1, 1]])
    assert np.allclose(inst.excess_p[:2], 0)
    assert pivotal_value(inst) == 0.0
    assert pivotal_sharp(inst) == pytest.approx(0.25, abs=TOL)


def test_strong_empty_flag_reads_zero():
    res = strong_modulus_detail(toy_t1(), 0.2, 0.0)
    assert res.members.tolist() == [1] and not res.empty


def test_eps_must_be_nonnegative():
    with pytest.raises(ValueError):
        weak_modulus(toy_t1(), -0.1)


@given(st.integers(0, 10**6))
def test_matches_rational_oracle(seed):
    inst, rat = grid_instance(seed)
    levels = sorted(set(float(x) for x in rat.excess("P")) | set(float(x) for x in rat.excess("Q")))
    grid = [Fraction(x).limit_denominator(10**4) for x in levels] + [Fraction(1, 7), Fraction(2)]
    for e in grid:
        assert abs(weak_modulus(inst, float(e)) - float(rat.weak(e))) <= TOL
        for e2 in grid[:4]:
            assert abs(strong_modulus(inst, float(e), float(e2)) - float(rat.strong(e, e2))) <= TOL
    assert abs(pivotal_value(inst) - float(rat.pivot())) <= TOL
    assert abs(pivotal_sharp(inst) - float(rat.pivot_sharp())) <= TOL


@given(st.integers(0, 10**6))
def test_moduli_properties(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng)
    eps = np.sort(rng.random(8))
    curve = weak_modulus_curve(inst)
    piv = pivotal_value(inst)
    assert abs(piv - pivotal_value_by_sets(inst)) <= TOL
    for i, e1 in enumerate(eps):
        assert curve(e1) == weak_modulus(inst, e1)
        if i:
            assert weak_modulus(inst, eps[i - 1]) <= weak_modulus(inst, e1) + TOL
        assert piv <= weak_modulus(inst, e1) + TOL
        for j, e2 in enumerate(eps):
            s = strong_modulus(inst, e1, e2)
            assert s <= min(e1, weak_modulus(inst, e2)) + TOL
            if i:
                assert strong_modulus(inst, eps[i - 1], e2) <= s + TOL
            if j:
                assert strong_modulus(inst, e1, eps[j - 1]) <= s + TOL
            if e1 > piv + TOL:
                both = np.intersect1d(constraint_set(inst, "Q", e1), constraint_set(inst, "P", e2))
                assert abs(s - float(inst.excess_q[both].max())) <= TOL
    big = float(inst.excess_q.max()) + 1
    for e2 in eps:
        assert abs(strong_modulus(inst, big, e2) - weak_modulus(inst, e2)) <= TOL


@given(st.integers(0, 10**6))
def test_p_equals_q_modulus_below_eps(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng)
    same = FiniteInstance(inst.p_weights, inst.p_weights, inst.p_eta, inst.p_eta, inst.hypotheses)
    for e in rng.random(5):
        assert weak_modulus(same, e) <= e + TOL
    assert pivotal_value(same) == 0.0 and pivotal_sharp(same) == 0.0


def test_linear_diagonal_example():
    inst = LinearInstance(np.diag([1.0, 0.25]) * 0.4, np.diag([0.25, 1.0]) * 0.4, [0.1, 0.2], [0.1, 0.2])
    assert weak_modulus_linear(inst, 1.0) == pytest.approx(4.0, rel=1e-12)
    same = LinearInstance(np.diag([0.3, 0.2]), np.diag([0.3, 0.2]), [1, 2], [1, 2])
    assert weak_modulus_linear(same, 0.37) == pytest.approx(0.37, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_linear_modulus_boundary_oracle(seed):
    rng = np.random.default_rng(seed)
    sp, sq = random_spd(rng, 2, 0.2), random_spd(rng, 2, 0.2)
    sp *= 0.4 / np.trace(sp)
    sq *= 0.4 / np.trace(sq)
    wp, wq = rng.standard_normal(2), rng.standard_normal(2)
    inst = LinearInstance(sp, sq, wp, wq)
    eps = float(rng.uniform(0.01, 2.0))
    ref = boundary_max_quadratic(wp, sp, eps, sq, -sq @ wq, float(wq @ sq @ wq))
    assert weak_modulus_linear(inst, eps) == pytest.approx(ref, rel=1e-4)
    assert weak_modulus_linear(inst, eps) >= ref - 1e-12
