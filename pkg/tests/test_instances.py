import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from transfer_moduli.instances import (FiniteInstance, InstanceError, LinearInstance, excess_risk,
                                       instance_to_dict, load_instance, random_finite_instance,
                                       random_linear_instance, random_spd, risk_finite, risk_linear, sample,
                                       toy_t1)


def test_t1_risks_hand_sum():
    t1 = toy_t1()
    assert risk_finite(t1, "P", 0) == pytest.approx(0.05, abs=1e-12)
    assert risk_finite(t1, "Q", 2) == pytest.approx(0.95, abs=1e-12)
    assert np.allclose(t1.risks_p, [0.05, 0.45, 0.55], atol=1e-12)
    assert np.allclose(t1.risks_q, [0.45, 0.05, 0.95], atol=1e-12)


def test_t1_excess_risks():
    t1 = toy_t1()
    assert excess_risk(t1, "P", 1) == pytest.approx(0.40, abs=1e-12)
    assert excess_risk(t1, "Q", 1) == 0.0
    assert excess_risk(t1, "P", 1, subset=[1]) == 0.0
    with pytest.raises(ValueError):
        excess_risk(t1, "P", 1, subset=[])
    with pytest.raises(IndexError):
        risk_finite(t1, "P", 3)


def test_noiseless_perfect_predictor():
    inst = FiniteInstance([0.3, 0.7], [0.5, 0.5], [1, 1], [1, 1], [[1, 1], [-1, 1]])
    assert risk_finite(inst, "P", 0) == 0.0
    assert risk_finite(inst, "Q", 0) == 0.0


@pytest.mark.parametrize("bad, path", [
    (dict(p_weights=[0.6, 0.6]), "p_weights"),
    (dict(p_eta=[1.2, 0.5]), "p_eta"),
    (dict(hypotheses=[[1, 0]]), "hypotheses"),
])
def test_finite_invariants_rejected(bad, path):
    kw = dict(p_weights=[0.5, 0.5], q_weights=[0.5, 0.5], p_eta=[1, 0.9], q_eta=[1, 0.1],
              hypotheses=[[1, 1]])
    kw.update(bad)
    with pytest.raises(InstanceError) as e:
        FiniteInstance(**kw)
    assert path in e.value.path


def test_sample_empty_and_deterministic():
    t1 = toy_t1()
    assert sample(t1, "P", 0, seed=3).n == 0
    a, b = sample(t1, "P", 50, seed=3), sample(t1, "P", 50, seed=3)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.labels, b.labels)


def test_sample_empirical_risk_binomial():
    t1 = toy_t1()
    n = 10**6
    s = sample(t1, "P", n, seed=1)
    pred = t1.hypotheses[0][s.points]
    emp = float(np.mean(pred != s.labels))
    sd = np.sqrt(0.05 * 0.95 / n)
    assert abs(emp - 0.05) <= 3 * sd


def test_linear_noiseless_labels():
    rng = np.random.default_rng(0)
    inst = random_linear_instance(rng, 3, noise_scale=0.0)
    s = sample(inst, "Q", 200, seed=0)
    assert np.allclose(s.labels, s.points @ inst.w_star_q, atol=0, rtol=0)
    assert np.all(np.linalg.norm(s.points, axis=1) <= 1 + 1e-12)


def test_risk_linear_examples():
    inst = LinearInstance(np.eye(2) * 0.1, np.eye(2) * 0.1, [0.0, 0.0], [0.0, 0.0])
    assert risk_linear(inst, "P", [0.0, 0.0]) == 0.0
    ident = LinearInstance.from_atoms([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]],
                                      [0.25] * 4, [0.25] * 4, [0, 0], [0, 0])
    assert risk_linear(ident, "P", [np.sqrt(2.0), 0.0]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        risk_linear(inst, "P", [1.0, 2.0, 3.0])


def test_risk_linear_monte_carlo():
    rng = np.random.default_rng(5)
    inst = random_linear_instance(rng, 3, max_eig=0.2)
    w = inst.w_star_p + rng.standard_normal(3)
    s = sample(inst, "P", 10**6, seed=2)
    diff = (s.labels - s.points @ w) ** 2 - (s.labels - s.points @ inst.w_star_p) ** 2
    sd = diff.std() / np.sqrt(diff.size)
    assert abs(diff.mean() - risk_linear(inst, "P", w)) <= 3 * sd


def test_gaussian_sampler_second_moment():
    rng = np.random.default_rng(1)
    inst = random_linear_instance(rng, 3, max_eig=0.2)
    s = sample(inst, "P", 400_000, seed=9)
    emp = s.points.T @ s.points / s.n
    assert np.max(np.abs(emp - inst.sigma_p)) < 5e-3


@given(st.integers(0, 10**6))
def test_risks_invariant_under_atom_permutation(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng)
    perm = rng.permutation(inst.m)
    other = FiniteInstance(inst.p_weights[perm], inst.q_weights[perm], inst.p_eta[perm], inst.q_eta[perm],
                           inst.hypotheses[:, perm])
    assert np.allclose(inst.risks_p, other.risks_p, atol=1e-10)
    assert np.allclose(inst.risks_q, other.risks_q, atol=1e-10)


@given(st.integers(0, 10**6))
def test_linear_risk_invariant_under_rotation(seed):
    rng = np.random.default_rng(seed)
    d = 3
    sig = random_spd(rng, d, 0.1)
    w, ws = rng.standard_normal(d), rng.standard_normal(d)
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = (w - ws) @ sig @ (w - ws)
    b = (q @ w - q @ ws) @ (q @ sig @ q.T) @ (q @ w - q @ ws)
    assert abs(a - b) <= 1e-10


@given(st.integers(0, 10**6))
def test_subset_excess_dominates(seed):
    rng = np.random.default_rng(seed)
    inst = random_finite_instance(rng)
    best = int(np.argmin(inst.risks_p))
    sub = sorted(set(rng.choice(inst.k, size=rng.integers(1, inst.k + 1)).tolist()) | {best})
    for h in range(inst.k):
        assert excess_risk(inst, "P", h, sub) >= excess_risk(inst, "P", h) - 1e-15
        assert excess_risk(inst, "P", h, range(inst.k)) == excess_risk(inst, "P", h)


def test_json_roundtrip_and_error_paths(tmp_path):
    t1 = toy_t1()
    f = tmp_path / "t1.json"
    f.write_text(json.dumps(instance_to_dict(t1)))
    back = load_instance(f)
    assert np.array_equal(back.risks_q, t1.risks_q)
    spec = instance_to_dict(t1)
    spec["q_weights"] = [0.5, 0.6]
    with pytest.raises(InstanceError) as e:
        load_instance(spec)
    assert e.value.path == "$.q_weights"
    spec = instance_to_dict(t1)
    spec["typo"] = 1
    with pytest.raises(InstanceError) as e:
        load_instance(spec)
    assert e.value.path == "$.typo"
