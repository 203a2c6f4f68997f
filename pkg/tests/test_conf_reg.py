import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import grid_verdict, projected_gradient_ls
from transfer_moduli.conf_reg import (Ellipsoid, ellipsoid_contains, ellipsoid_intersect, empirical_risk,
                                      min_empirical_risk_detail, min_empirical_risk_over_ellipsoid, ols_fit,
                                      population_ellipsoid, regression_confidence_set, regression_strong_contract,
                                      sandwich_check)
from transfer_moduli.instances import LabeledSample, random_linear_instance, random_spd, sample


def random_ellipse(rng, d=2):
    return Ellipsoid(rng.uniform(-1, 1, d), random_spd(rng, d, 1.0, cond=8.0), float(rng.uniform(0.1, 1.0)))


def regression_sample(rng, n=40, d=3):
    X = rng.uniform(-1, 1, (n, d)) / math.sqrt(d)
    y = X @ rng.standard_normal(d) + 0.3 * rng.standard_normal(n)
    return LabeledSample("P", X, y)


def test_ols_closed_form_1d():
    fit = ols_fit(LabeledSample("P", np.array([[1.0], [2.0]]), np.array([2.0, 4.2])))
    assert fit.w_hat[0] == pytest.approx(2.08, abs=1e-12)
    assert fit.sigma_hat[0, 0] == pytest.approx(2.5, abs=1e-12)
    assert not fit.singular


def test_ols_noiseless_and_singular():
    rng = np.random.default_rng(0)
    inst = random_linear_instance(rng, 3, noise_scale=0.0)
    s = sample(inst, "P", 50, seed=1)
    assert np.allclose(ols_fit(s).w_hat, inst.w_star_p, atol=1e-10)
    flat = LabeledSample("P", np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]), np.ones(3))
    assert ols_fit(flat).singular
    with pytest.raises(ValueError):
        regression_confidence_set(flat, 1.0, 0.0, 0.05)


def test_sandwich_examples():
    s = random_spd(np.random.default_rng(2), 3)
    assert sandwich_check(s, s)
    assert not sandwich_check(s, 2 * s)
    assert not sandwich_check(s, 0.4 * s)


def test_sandwich_frequency_large_n():
    inst = random_linear_instance(np.random.default_rng(3), 3, max_eig=0.2)
    ok = [sandwich_check(inst.sigma_p, ols_fit(sample(inst, "P", 2000, seed=s)).sigma_hat) for s in range(200)]
    assert np.mean(ok) >= 0.95


def test_confidence_set_radius_scales_inverse_n():
    rng = np.random.default_rng(4)
    inst = random_linear_instance(rng, 3, max_eig=0.2)
    a = regression_confidence_set(sample(inst, "P", 500, seed=0), 1.0, 0.0, 0.05)
    b = regression_confidence_set(sample(inst, "P", 1000, seed=0), 1.0, 0.0, 0.05)
    assert a.radius / b.radius == pytest.approx(2.0, rel=1e-12)
    assert a.contains_point(a.center)
    assert a.C == 26.0 and a.tau == pytest.approx(0.1)
    assert a.eps == pytest.approx(26 * a.radius / 6, rel=1e-12)


def test_intersect_examples():
    I = np.eye(2)
    far = ellipsoid_intersect(Ellipsoid([0, 0], I, 1.0), Ellipsoid([3, 0], I, 1.0))
    assert not far.feasible and far.min_value == pytest.approx(4.0, abs=1e-9)
    near = ellipsoid_intersect(Ellipsoid([0, 0], I, 1.0), Ellipsoid([1, 0], I, 1.0))
    assert near.feasible
    assert near.witness @ near.witness <= 1 + 1e-9
    assert (near.witness - [1, 0]) @ (near.witness - [1, 0]) <= 1 + 1e-9


@pytest.mark.parametrize("seed", range(40))
def test_intersect_grid_oracle_symmetry_and_witness(seed):
    rng = np.random.default_rng(seed)
    while True:
        e1, e2 = random_ellipse(rng), random_ellipse(rng)
        ref = grid_verdict(e1.center, e1.shape, e1.radius, e2.center, e2.shape, e2.radius)
        if ref is not None:
            break
    res = ellipsoid_intersect(e1, e2)
    assert res.feasible == ref
    assert ellipsoid_intersect(e2, e1).feasible == res.feasible
    if res.feasible:
        assert e1.quad(res.witness) <= e1.radius + 1e-9
        assert e2.quad(res.witness) <= e2.radius + 1e-9


def test_min_risk_examples():
    # |w - (2, 0)|^2 from two noiseless points on the axes
    s = LabeledSample("P", np.array([[1.0, 0.0], [0.0, 1.0]]) * math.sqrt(2), np.array([2.0, 0.0]) * math.sqrt(2))
    e = Ellipsoid([0.0, 0.0], np.eye(2), 1.0)
    w = min_empirical_risk_over_ellipsoid(s, e)
    assert np.allclose(w, [1.0, 0.0], atol=1e-9)
    assert empirical_risk(s, w) == pytest.approx(1.0, abs=1e-9)
    inside = Ellipsoid([2.0, 0.0], np.eye(2), 1.0)
    assert np.allclose(min_empirical_risk_over_ellipsoid(s, inside), [2.0, 0.0], atol=1e-9)


@pytest.mark.parametrize("seed", range(15))
def test_min_risk_projected_gradient_oracle(seed):
    rng = np.random.default_rng(seed)
    s = regression_sample(rng)
    e = Ellipsoid(rng.uniform(-1, 1, 3), random_spd(rng, 3, 1.0, cond=8.0), float(rng.uniform(0.05, 1.0)))
    det = min_empirical_risk_detail(s, e)
    ref = projected_gradient_ls(s.points, s.labels, e.center, e.shape, e.radius)
    assert abs(det.value - ref) <= 1e-6
    assert det.kkt_residual <= 1e-8
    assert e.quad(det.w) <= e.radius + 1e-9


def test_containment_examples():
    I = np.eye(2)
    assert ellipsoid_contains(Ellipsoid([0, 0], I, 0.5), Ellipsoid([0, 0], I, 1.0)).contained
    assert not ellipsoid_contains(Ellipsoid([0, 0], I, 1.0), Ellipsoid([0, 0], I, 0.5)).contained
    assert not ellipsoid_contains(Ellipsoid([0.8, 0], I, 0.1), Ellipsoid([0, 0], I, 1.0)).contained
    assert ellipsoid_contains(Ellipsoid([0.5, 0], I, 0.2), Ellipsoid([0, 0], I, 1.0)).contained


@given(st.integers(0, 10**6))
def test_containment_agrees_with_boundary_sampling(seed):
    rng = np.random.default_rng(seed)
    inner, outer = random_ellipse(rng), random_ellipse(rng)
    th = np.linspace(0, 2 * np.pi, 20000, endpoint=False)
    ev, V = np.linalg.eigh(inner.shape)
    R = V @ np.diag(ev ** -0.5) @ V.T
    pts = inner.center + (np.column_stack([np.cos(th), np.sin(th)]) * math.sqrt(inner.radius)) @ R.T
    v = pts - outer.center
    worst = np.max(np.einsum("ij,jk,ik->i", v, outer.shape, v)) / outer.radius
    if abs(worst - 1) < 1e-3:
        return
    assert ellipsoid_contains(inner, outer).contained == (worst < 1)


def test_regression_contract_frequency():
    inst = random_linear_instance(np.random.default_rng(7), 3, max_eig=0.2)
    tau, T = 0.05, 100
    fails = 0
    for s in range(T):
        e = regression_confidence_set(sample(inst, "P", 400, seed=s), inst.noise_scale, 0.0, tau)
        fails += not regression_strong_contract(inst, "P", e).ok
    assert fails / T <= 2 * tau + 3 * math.sqrt(2 * tau / T)


def test_population_ellipsoid_and_json_roundtrip():
    inst = random_linear_instance(np.random.default_rng(8), 2, max_eig=0.2)
    e = population_ellipsoid(inst, "Q", 0.3)
    assert np.array_equal(e.center, inst.w_star_q)
    back = Ellipsoid.from_dict(e.to_dict())
    assert np.array_equal(back.shape, e.shape) and back.radius == e.radius
    with pytest.raises(ValueError):
        Ellipsoid([0, 0], np.diag([1.0, -1.0]), 1.0)
