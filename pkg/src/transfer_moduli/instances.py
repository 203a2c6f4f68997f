"""Source/target instance families, exact population risks and seeded sampling.

Two families are supported:

* :class:`FiniteInstance` -- binary classification on a finite set of atoms
  with a finite hypothesis table, 0-1 loss.  Every population quantity is an
  exact finite sum.
* :class:`LinearInstance` -- linear regression with squared loss, where the
  excess risk of ``w`` is ``(w - w*)^T Sigma (w - w*)``.

Sides are named ``"P"`` (source) and ``"Q"`` (target); lower case is accepted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .seeding import derive_seed

# Absolute slack used for every closed comparison on exact risks.  Risks are
# sums of at most a few thousand float64 products, so rounding stays far below.
TOL = 1e-12

SIDES = ("P", "Q")


class InstanceError(ValueError):
    """An instance spec violates an invariant; ``path`` locates the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


def normalize_side(side: str) -> str:
    s = str(side).upper()
    if s not in SIDES:
        raise ValueError(f"side must be 'P' or 'Q', got {side!r}")
    return s


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _check_prob_vector(path: str, v: np.ndarray, m: int | None = None) -> None:
    if v.ndim != 1 or v.size == 0:
        raise InstanceError(path, "must be a non-empty 1-D array")
    if m is not None and v.size != m:
        raise InstanceError(path, f"has length {v.size}, expected {m}")
    if not np.all(np.isfinite(v)):
        raise InstanceError(path, "contains non-finite values")
    if np.any(v < 0):
        raise InstanceError(f"{path}[{int(np.argmin(v))}]", "negative weight")
    s = math.fsum(v.tolist())
    if abs(s - 1.0) > 1e-12:
        raise InstanceError(path, f"sums to {s!r}, must be 1 within 1e-12")


# ---------------------------------------------------------------------------
# finite classification
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FiniteInstance:
    """Discrete source/target pair with a finite hypothesis table.

    ``hypotheses[j, i]`` is the label (+1/-1) hypothesis ``j`` assigns to atom
    ``i``; ``p_eta[i]`` is P(Y=+1 | atom i) under the source, and likewise for
    the target.
    """

    p_weights: np.ndarray
    q_weights: np.ndarray
    p_eta: np.ndarray
    q_eta: np.ndarray
    hypotheses: np.ndarray
    names: tuple[str, ...] | None = None
    atoms: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        pw = np.asarray(self.p_weights, dtype=np.float64)
        qw = np.asarray(self.q_weights, dtype=np.float64)
        pe = np.asarray(self.p_eta, dtype=np.float64)
        qe = np.asarray(self.q_eta, dtype=np.float64)
        hyp = np.asarray(self.hypotheses)
        if hyp.ndim == 1:
            hyp = hyp[None, :]
        if hyp.ndim != 2 or hyp.shape[0] < 1 or hyp.shape[1] < 1:
            raise InstanceError("hypotheses", "must be a non-empty k x m table")
        m = hyp.shape[1]
        _check_prob_vector("p_weights", pw, m)
        _check_prob_vector("q_weights", qw, m)
        for name, eta in (("p_eta", pe), ("q_eta", qe)):
            if eta.shape != (m,):
                raise InstanceError(name, f"has shape {eta.shape}, expected ({m},)")
            bad = np.flatnonzero(~((eta >= 0) & (eta <= 1)))
            if bad.size:
                raise InstanceError(f"{name}[{bad[0]}]", "must lie in [0, 1]")
        bad = np.argwhere((hyp != 1) & (hyp != -1))
        if bad.size:
            j, i = bad[0]
            raise InstanceError(f"hypotheses[{j}][{i}]", "entries must be exactly +1 or -1")
        if self.names is not None and len(self.names) != hyp.shape[0]:
            raise InstanceError("names", f"has {len(self.names)} entries for {hyp.shape[0]} hypotheses")
        if self.atoms is not None and len(self.atoms) != m:
            raise InstanceError("atoms", f"has {len(self.atoms)} entries for {m} atoms")
        object.__setattr__(self, "p_weights", _frozen(pw))
        object.__setattr__(self, "q_weights", _frozen(qw))
        object.__setattr__(self, "p_eta", _frozen(pe))
        object.__setattr__(self, "q_eta", _frozen(qe))
        object.__setattr__(self, "hypotheses", _frozen(hyp.astype(np.int8)))
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(n) for n in self.names))
        if self.atoms is not None:
            object.__setattr__(self, "atoms", tuple(str(a) for a in self.atoms))

    @property
    def k(self) -> int:
        return self.hypotheses.shape[0]

    @property
    def m(self) -> int:
        return self.hypotheses.shape[1]

    def name(self, j: int) -> str:
        return self.names[j] if self.names is not None else f"h{j}"

    def weights(self, side: str) -> np.ndarray:
        return self.p_weights if normalize_side(side) == "P" else self.q_weights

    def eta(self, side: str) -> np.ndarray:
        return self.p_eta if normalize_side(side) == "P" else self.q_eta

    def _risks(self, side: str) -> np.ndarray:
        w = self.weights(side).astype(np.longdouble)
        eta = self.eta(side).astype(np.longdouble)
        # predicting -1 errs with probability eta, predicting +1 with 1 - eta
        loss = np.where(self.hypotheses == 1, 1 - eta, eta)
        return np.asarray((loss * w).sum(axis=1), dtype=np.float64)

    @cached_property
    def risks_p(self) -> np.ndarray:
        return _frozen(self._risks("P"))

    @cached_property
    def risks_q(self) -> np.ndarray:
        return _frozen(self._risks("Q"))

    def risks(self, side: str) -> np.ndarray:
        return self.risks_p if normalize_side(side) == "P" else self.risks_q

    @cached_property
    def excess_p(self) -> np.ndarray:
        return _frozen(self.risks_p - self.risks_p.min())

    @cached_property
    def excess_q(self) -> np.ndarray:
        return _frozen(self.risks_q - self.risks_q.min())

    def excess(self, side: str) -> np.ndarray:
        return self.excess_p if normalize_side(side) == "P" else self.excess_q

    @cached_property
    def _disagree(self) -> np.ndarray:
        # (k, k, m) boolean is fine at the sizes this package targets
        h = self.hypotheses
        return h[:, None, :] != h[None, :, :]

    def disagreement(self, side: str) -> np.ndarray:
        """k x k matrix of marginal mass where two hypotheses disagree."""
        return self.disagreement_under(self.weights(side))

    def disagreement_under(self, atom_weights: np.ndarray) -> np.ndarray:
        """Pairwise disagreement mass under arbitrary atom weights (e.g. empirical)."""
        if self.k > 2048:
            raise ValueError("pairwise disagreement is only materialized for k <= 2048")
        return self._disagree @ np.asarray(atom_weights, dtype=np.float64)

    def swap_sides(self) -> "FiniteInstance":
        return FiniteInstance(self.q_weights, self.p_weights, self.q_eta, self.p_eta,
                              self.hypotheses, self.names, self.atoms)


def risk_finite(inst: FiniteInstance, side: str, h_index: int) -> float:
    if not 0 <= int(h_index) < inst.k:
        raise IndexError(f"hypothesis index {h_index} out of range for k={inst.k}")
    return float(inst.risks(side)[int(h_index)])


def excess_risk(inst: FiniteInstance, side: str, h_index: int,
                subset: Sequence[int] | np.ndarray | None = None) -> float:
    """R(h) minus the minimum risk over ``subset`` (whole class by default)."""
    r = inst.risks(side)
    if not 0 <= int(h_index) < inst.k:
        raise IndexError(f"hypothesis index {h_index} out of range for k={inst.k}")
    if subset is None:
        ref = r.min()
    else:
        idx = np.asarray(subset, dtype=int)
        if idx.size == 0:
            raise ValueError("reference subset must be non-empty")
        ref = r[idx].min()
    return float(r[int(h_index)] - ref)


def toy_t1() -> FiniteInstance:
    """Two atoms, three hypotheses; the smallest strict strong/weak gap."""
    return FiniteInstance(
        p_weights=[0.5, 0.5],
        q_weights=[0.5, 0.5],
        p_eta=[1.0, 0.9],
        q_eta=[1.0, 0.1],
        hypotheses=[[1, 1], [1, -1], [-1, 1]],
        names=("h_a", "h_b", "h_c"),
        atoms=("x0", "x1"),
    )


# ---------------------------------------------------------------------------
# linear regression
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianCovariates:
    """Zero-mean Gaussian, rejected outside the unit ball.

    The Gaussian covariance is recalibrated so that the *truncated* law has
    the instance's second moment.  When the tail mass beyond the unit ball is
    below ``1e-13`` the recalibration is the identity.
    """

    kind: str = "gaussian"


@dataclass(frozen=True, eq=False)
class AtomCovariates:
    """Finitely many covariate points with separate source/target weights."""

    points: np.ndarray
    p_weights: np.ndarray
    q_weights: np.ndarray
    kind: str = "atoms"

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise InstanceError("covariate_model.points", "must be a non-empty n_atoms x d array")
        norms = np.linalg.norm(pts, axis=1)
        bad = np.flatnonzero(norms > 1 + 1e-12)
        if bad.size:
            raise InstanceError(f"covariate_model.points[{bad[0]}]", "norm exceeds 1")
        pw = np.asarray(self.p_weights, dtype=np.float64)
        qw = np.asarray(self.q_weights, dtype=np.float64)
        _check_prob_vector("covariate_model.p_weights", pw, pts.shape[0])
        _check_prob_vector("covariate_model.q_weights", qw, pts.shape[0])
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "p_weights", _frozen(pw))
        object.__setattr__(self, "q_weights", _frozen(qw))

    def weights(self, side: str) -> np.ndarray:
        return self.p_weights if normalize_side(side) == "P" else self.q_weights

    def second_moment(self, side: str) -> np.ndarray:
        w = self.weights(side)
        return (self.points * w[:, None]).T @ self.points


CovariateModel = GaussianCovariates | AtomCovariates


def _check_spd(path: str, a: np.ndarray, d: int) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (d, d):
        raise InstanceError(path, f"has shape {a.shape}, expected ({d}, {d})")
    if not np.all(np.isfinite(a)):
        raise InstanceError(path, "contains non-finite values")
    if np.max(np.abs(a - a.T)) > 1e-10:
        raise InstanceError(path, "is not symmetric within 1e-10")
    a = 0.5 * (a + a.T)
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise InstanceError(path, "is not positive definite")
    return a


_TAIL_NEGLIGIBLE = 1e-13
_CALIBRATION_DRAWS = 200_000


def _calibrate_truncated_gaussian(sigma: np.ndarray) -> np.ndarray:
    """Covariance G with E[XX^T | |X|<=1] = sigma for X ~ N(0, G).

    Ball truncation is rotation invariant, so G shares eigenvectors with sigma
    and only its eigenvalues are solved for, by a fixed-point iteration on
    common random numbers.
    """
    from scipy.stats import chi2

    lam, v = np.linalg.eigh(sigma)
    d = lam.size
    if chi2.sf(1.0 / lam[-1], d) <= _TAIL_NEGLIGIBLE:
        return sigma.copy()
    if lam.sum() >= 0.5:
        raise InstanceError("sigma", "trace must be < 0.5 for the truncated Gaussian sampler")
    xi2 = np.random.default_rng(derive_seed(0, "gauss-calibration", d)).standard_normal(
        (_CALIBRATION_DRAWS, d)) ** 2
    g = lam.copy()
    for _ in range(200):
        inside = (xi2 @ g) <= 1.0
        m = g * xi2[inside].mean(axis=0)
        g_new = g * lam / m
        if np.max(np.abs(g_new / g - 1)) < 1e-12:
            g = g_new
            break
        g = g_new
    return (v * g) @ v.T


@dataclass(frozen=True, eq=False)
class LinearInstance:
    """Linear-regression source/target pair under squared loss.

    ``sigma_p``/``sigma_q`` are the covariate second moments E[XX^T];
    ``noise_scale`` is the standard deviation of the Gaussian label noise
    (a sub-Gaussian parameter).  ``w1_class`` optionally lists a finite set of
    weight vectors used to audit the Wasserstein-1 modulus bound.
    """

    sigma_p: np.ndarray
    sigma_q: np.ndarray
    w_star_p: np.ndarray
    w_star_q: np.ndarray
    noise_scale: float = 1.0
    covariate_model: CovariateModel = field(default_factory=GaussianCovariates)
    w1_class: np.ndarray | None = None

    def __post_init__(self) -> None:
        wp = np.asarray(self.w_star_p, dtype=np.float64).ravel()
        wq = np.asarray(self.w_star_q, dtype=np.float64).ravel()
        d = wp.size
        if d < 1:
            raise InstanceError("w_star_p", "must be non-empty")
        if wq.size != d:
            raise InstanceError("w_star_q", f"has length {wq.size}, expected {d}")
        sp = _check_spd("sigma_p", self.sigma_p, d)
        sq = _check_spd("sigma_q", self.sigma_q, d)
        if not (np.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise InstanceError("noise_scale", "must be finite and >= 0")
        cm = self.covariate_model
        if isinstance(cm, AtomCovariates):
            if cm.points.shape[1] != d:
                raise InstanceError("covariate_model.points", f"dimension {cm.points.shape[1]} != {d}")
            for side, s in (("P", sp), ("Q", sq)):
                if np.max(np.abs(cm.second_moment(side) - s)) > 1e-10:
                    raise InstanceError(f"sigma_{side.lower()}",
                                        "does not match the atom second moment within 1e-10")
        elif isinstance(cm, GaussianCovariates):
            for side, s in (("p", sp), ("q", sq)):
                if np.trace(s) >= 1:
                    raise InstanceError(f"sigma_{side}", "trace must be < 1 when covariates lie in the unit ball")
        else:
            raise InstanceError("covariate_model", f"unknown model {cm!r}")
        if self.w1_class is not None:
            wc = np.asarray(self.w1_class, dtype=np.float64)
            if wc.ndim != 2 or wc.shape[1] != d or wc.shape[0] < 1:
                raise InstanceError("w1_class", f"must be a non-empty list of {d}-vectors")
            object.__setattr__(self, "w1_class", _frozen(wc))
        object.__setattr__(self, "w_star_p", _frozen(wp))
        object.__setattr__(self, "w_star_q", _frozen(wq))
        object.__setattr__(self, "sigma_p", _frozen(sp))
        object.__setattr__(self, "sigma_q", _frozen(sq))
        object.__setattr__(self, "noise_scale", float(self.noise_scale))

    @property
    def dim(self) -> int:
        return self.w_star_p.size

    def sigma(self, side: str) -> np.ndarray:
        return self.sigma_p if normalize_side(side) == "P" else self.sigma_q

    def w_star(self, side: str) -> np.ndarray:
        return self.w_star_p if normalize_side(side) == "P" else self.w_star_q

    @cached_property
    def _gauss_factor_p(self) -> np.ndarray:
        return np.linalg.cholesky(_calibrate_truncated_gaussian(self.sigma_p))

    @cached_property
    def _gauss_factor_q(self) -> np.ndarray:
        return np.linalg.cholesky(_calibrate_truncated_gaussian(self.sigma_q))

    def gaussian_factor(self, side: str) -> np.ndarray:
        return self._gauss_factor_p if normalize_side(side) == "P" else self._gauss_factor_q

    @classmethod
    def from_atoms(cls, points, p_weights, q_weights, w_star_p, w_star_q,
                   noise_scale: float = 1.0, w1_class=None) -> "LinearInstance":
        cm = AtomCovariates(points, p_weights, q_weights)
        return cls(cm.second_moment("P"), cm.second_moment("Q"), w_star_p, w_star_q,
                   noise_scale, cm, w1_class)


def risk_linear(inst: LinearInstance, side: str, w) -> float:
    """Exact excess squared-loss risk (w - w*)^T Sigma (w - w*)."""
    w = np.asarray(w, dtype=np.float64).ravel()
    if w.size != inst.dim:
        raise ValueError(f"weight vector has dimension {w.size}, instance has {inst.dim}")
    v = w - inst.w_star(side)
    return float(v @ inst.sigma(side) @ v)


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """n draws from one side: atom indices (finite) or covariate rows (linear)."""

    side: str
    points: np.ndarray
    labels: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels must have equal length")
        object.__setattr__(self, "side", normalize_side(self.side))

    @property
    def n(self) -> int:
        return len(self.labels)

    def cell_counts(self, m: int) -> np.ndarray:
        """m x 2 counts of (atom, label) with column 0 for -1 and 1 for +1."""
        cells = np.asarray(self.points, dtype=np.int64) * 2 + (np.asarray(self.labels) > 0)
        return np.bincount(cells, minlength=2 * m).reshape(m, 2)


def _as_rng(seed) -> tuple[np.random.Generator, int | None]:
    if isinstance(seed, np.random.Generator):
        return seed, None
    return None, int(seed)


def sample(inst: FiniteInstance | LinearInstance, side: str, n: int, seed) -> LabeledSample:
    """n i.i.d. draws from one side, deterministic given ``seed``.

    ``seed`` is an integer (the stream is derived from it and the side, so P
    and Q draws with the same seed are independent) or a numpy Generator.
    """
    side = normalize_side(side)
    n = int(n)
    if n < 0:
        raise ValueError("n must be >= 0")
    rng, s = _as_rng(seed)
    if rng is None:
        rng = np.random.default_rng(derive_seed(s, "sample", side))
    if isinstance(inst, FiniteInstance):
        w = inst.weights(side)
        eta = inst.eta(side)
        if n == 0:
            return LabeledSample(side, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int8), s)
        pts = rng.choice(inst.m, size=n, p=w)
        labels = np.where(rng.random(n) < eta[pts], 1, -1).astype(np.int8)
        return LabeledSample(side, pts, labels, s)
    if isinstance(inst, LinearInstance):
        d = inst.dim
        x = _draw_covariates(inst, side, n, rng)
        y = x @ inst.w_star(side)
        if inst.noise_scale > 0:
            y = y + inst.noise_scale * rng.standard_normal(n)
        return LabeledSample(side, x.reshape(n, d), y, s)
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def _draw_covariates(inst: LinearInstance, side: str, n: int, rng: np.random.Generator) -> np.ndarray:
    d = inst.dim
    cm = inst.covariate_model
    if n == 0:
        return np.zeros((0, d))
    if isinstance(cm, AtomCovariates):
        idx = rng.choice(cm.points.shape[0], size=n, p=cm.weights(side))
        return cm.points[idx]
    factor = inst.gaussian_factor(side)
    out = np.empty((n, d))
    filled = 0
    while filled < n:
        need = n - filled
        z = rng.standard_normal((need + need // 8 + 16, d)) @ factor.T
        z = z[np.einsum("ij,ij->i", z, z) <= 1.0][:need]
        out[filled:filled + len(z)] = z
        filled += len(z)
    return out


# ---------------------------------------------------------------------------
# random generators used by sweeps and tests
# ---------------------------------------------------------------------------


def random_finite_instance(rng: np.random.Generator, m_max: int = 6, k_max: int = 12,
                           *, m: int | None = None, k: int | None = None,
                           grid: int | None = None, covariate_shift: bool = False) -> FiniteInstance:
    """Random instance; ``grid`` rounds weights/etas to multiples of 1/grid to force ties."""
    m = int(m if m is not None else rng.integers(1, m_max + 1))
    k = int(k if k is not None else rng.integers(1, min(k_max, 2 ** m) + 1))

    def weights():
        if grid:
            c = rng.multinomial(grid, np.full(m, 1.0 / m))
            return c / grid
        return rng.dirichlet(np.ones(m))

    def etas():
        if grid:
            return rng.integers(0, grid + 1, size=m) / grid
        return rng.random(m)

    pw, qw = weights(), weights()
    pe = etas()
    qe = pe.copy() if covariate_shift else etas()
    codes = rng.choice(2 ** m, size=k, replace=False) if 2 ** m >= k else rng.integers(0, 2 ** m, k)
    bits = (codes[:, None] >> np.arange(m)[None, :]) & 1
    hyp = np.where(bits == 1, 1, -1)
    return FiniteInstance(pw / pw.sum() if not grid else pw, qw / qw.sum() if not grid else qw, pe, qe, hyp)


def random_spd(rng: np.random.Generator, d: int, scale: float = 1.0, cond: float = 10.0) -> np.ndarray:
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = scale * np.exp(rng.uniform(-np.log(cond) / 2, np.log(cond) / 2, size=d))
    return (q * eig) @ q.T


def random_linear_instance(rng: np.random.Generator, d: int, *, shared: bool = False,
                           max_eig: float = 0.01, noise_scale: float = 1.0) -> LinearInstance:
    """Gaussian-covariate instance whose truncation beyond the unit ball is negligible."""
    def spd():
        s = random_spd(rng, d, 1.0, cond=20.0)
        return s * (max_eig / np.linalg.eigvalsh(s)[-1])

    wp = rng.standard_normal(d)
    wq = wp.copy() if shared else wp + 0.5 * rng.standard_normal(d)
    return LinearInstance(spd(), spd(), wp, wq, noise_scale)


# ---------------------------------------------------------------------------
# JSON instance specs
# ---------------------------------------------------------------------------

_FINITE_KEYS = {"kind", "atoms", "p_weights", "q_weights", "p_eta", "q_eta", "hypotheses", "names"}
_LINEAR_KEYS = {"kind", "dim", "sigma_p", "sigma_q", "w_star_p", "w_star_q", "noise_scale",
                "covariate_model", "w1_class"}


def _req(spec: dict, key: str, path: str):
    if key not in spec:
        raise InstanceError(f"{path}.{key}", "missing required field")
    return spec[key]


def _array(value, path: str, ndim: int) -> np.ndarray:
    try:
        a = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError):
        raise InstanceError(path, "must be numeric") from None
    if a.ndim != ndim:
        raise InstanceError(path, f"must be a {ndim}-D array")
    return a


def instance_from_dict(spec: dict[str, Any], path: str = "$") -> FiniteInstance | LinearInstance:
    """Build and validate an instance; errors carry a JSON path to the first violation."""
    if not isinstance(spec, dict):
        raise InstanceError(path, "instance spec must be a JSON object")
    kind = _req(spec, "kind", path)
    try:
        if kind == "finite":
            unknown = set(spec) - _FINITE_KEYS
            if unknown:
                raise InstanceError(f"{path}.{sorted(unknown)[0]}", "unknown field")
            return FiniteInstance(
                p_weights=_array(_req(spec, "p_weights", path), f"{path}.p_weights", 1),
                q_weights=_array(_req(spec, "q_weights", path), f"{path}.q_weights", 1),
                p_eta=_array(_req(spec, "p_eta", path), f"{path}.p_eta", 1),
                q_eta=_array(_req(spec, "q_eta", path), f"{path}.q_eta", 1),
                hypotheses=_array(_req(spec, "hypotheses", path), f"{path}.hypotheses", 2),
                names=tuple(spec["names"]) if spec.get("names") is not None else None,
                atoms=tuple(spec["atoms"]) if spec.get("atoms") is not None else None,
            )
        if kind == "linear":
            unknown = set(spec) - _LINEAR_KEYS
            if unknown:
                raise InstanceError(f"{path}.{sorted(unknown)[0]}", "unknown field")
            cm_spec = spec.get("covariate_model", {"kind": "gaussian"})
            wp = _array(_req(spec, "w_star_p", path), f"{path}.w_star_p", 1)
            wq = _array(_req(spec, "w_star_q", path), f"{path}.w_star_q", 1)
            if "dim" in spec and int(spec["dim"]) != wp.size:
                raise InstanceError(f"{path}.dim", f"is {spec['dim']} but w_star_p has length {wp.size}")
            noise = float(spec.get("noise_scale", 1.0))
            w1 = spec.get("w1_class")
            w1 = None if w1 is None else _array(w1, f"{path}.w1_class", 2)
            ckind = cm_spec.get("kind") if isinstance(cm_spec, dict) else None
            if ckind == "atoms":
                cm = AtomCovariates(
                    _array(_req(cm_spec, "points", f"{path}.covariate_model"), f"{path}.covariate_model.points", 2),
                    _array(_req(cm_spec, "p_weights", f"{path}.covariate_model"), f"{path}.covariate_model.p_weights", 1),
                    _array(_req(cm_spec, "q_weights", f"{path}.covariate_model"), f"{path}.covariate_model.q_weights", 1),
                )
                sp = spec.get("sigma_p", cm.second_moment("P"))
                sq = spec.get("sigma_q", cm.second_moment("Q"))
            elif ckind == "gaussian":
                cm = GaussianCovariates()
                sp = _req(spec, "sigma_p", path)
                sq = _req(spec, "sigma_q", path)
            else:
                raise InstanceError(f"{path}.covariate_model.kind", f"unknown covariate model {ckind!r}")
            return LinearInstance(_array(sp, f"{path}.sigma_p", 2), _array(sq, f"{path}.sigma_q", 2),
                                  wp, wq, noise, cm, w1)
    except InstanceError as e:
        if e.path.startswith(path):
            raise
        raise InstanceError(f"{path}.{e.path}", e.message) from None
    raise InstanceError(f"{path}.kind", f"must be 'finite' or 'linear', got {kind!r}")


def instance_to_dict(inst: FiniteInstance | LinearInstance) -> dict[str, Any]:
    if isinstance(inst, FiniteInstance):
        out: dict[str, Any] = {"kind": "finite"}
        if inst.atoms is not None:
            out["atoms"] = list(inst.atoms)
        out.update(p_weights=inst.p_weights.tolist(), q_weights=inst.q_weights.tolist(),
                   p_eta=inst.p_eta.tolist(), q_eta=inst.q_eta.tolist(),
                   hypotheses=inst.hypotheses.astype(int).tolist())
        if inst.names is not None:
            out["names"] = list(inst.names)
        return out
    out = {"kind": "linear", "dim": inst.dim, "sigma_p": inst.sigma_p.tolist(),
           "sigma_q": inst.sigma_q.tolist(), "w_star_p": inst.w_star_p.tolist(),
           "w_star_q": inst.w_star_q.tolist(), "noise_scale": inst.noise_scale}
    cm = inst.covariate_model
    if isinstance(cm, AtomCovariates):
        out["covariate_model"] = {"kind": "atoms", "points": cm.points.tolist(),
                                  "p_weights": cm.p_weights.tolist(), "q_weights": cm.q_weights.tolist()}
    else:
        out["covariate_model"] = {"kind": "gaussian"}
    if inst.w1_class is not None:
        out["w1_class"] = inst.w1_class.tolist()
    return out


def load_instance(source: str | Path | dict) -> FiniteInstance | LinearInstance:
    """Load an instance from a JSON file, a dict, or the literal name ``"T1"``."""
    if isinstance(source, dict):
        return instance_from_dict(source)
    if str(source) == "T1":
        return toy_t1()
    try:
        spec = json.loads(Path(source).read_text())
    except json.JSONDecodeError as e:
        raise InstanceError("$", f"invalid JSON: {e}") from None
    return instance_from_dict(spec)
