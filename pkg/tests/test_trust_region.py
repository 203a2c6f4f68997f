import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import trs_reference
from transfer_moduli.instances import random_spd
from transfer_moduli.trust_region import inv_sqrt_spd, maximize_quadratic_on_ball, solve_trs, sqrt_spd


def test_interior_solution():
    A = np.diag([1.0, 2.0])
    g = np.array([-0.1, 0.2])
    res = solve_trs(A, g, 1.0)
    assert np.allclose(res.x, [0.1, -0.1]) and not res.boundary


def test_boundary_solution():
    res = solve_trs(np.eye(2), np.array([-2.0, 0.0]), 1.0)
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-10) and res.boundary


def test_hard_case():
    # g orthogonal to the most negative eigenvector
    res = solve_trs(np.diag([-1.0, 1.0]), np.array([0.0, 0.1]), 1.0)
    assert res.hard_case
    assert abs(res.x @ res.x - 1.0) <= 1e-9
    assert res.value == pytest.approx(trs_reference(np.diag([-1.0, 1.0]), np.array([0.0, 0.1]), 1.0), abs=1e-7)


@given(st.integers(0, 10**6), st.integers(1, 4), st.floats(0.01, 4.0))
def test_matches_multistart_reference(seed, d, r2):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((d, d))
    A = (B + B.T) / 2
    g = rng.standard_normal(d)
    res = solve_trs(A, g, r2)
    assert res.x @ res.x <= r2 * (1 + 1e-9)
    assert res.value <= trs_reference(A, g, r2, starts=16) + 1e-7


def test_maximize_matches_negated():
    rng = np.random.default_rng(3)
    B = random_spd(rng, 3)
    h = rng.standard_normal(3)
    res = maximize_quadratic_on_ball(B, h, 0.5)
    assert res.value == pytest.approx(-trs_reference(-B, -h, 0.5), abs=1e-7)


def test_matrix_roots():
    rng = np.random.default_rng(0)
    S = random_spd(rng, 4)
    assert np.allclose(sqrt_spd(S) @ sqrt_spd(S), S, atol=1e-12)
    R = inv_sqrt_spd(S)
    assert np.allclose(R @ S @ R, np.eye(4), atol=1e-10)
