"""ERM, the two set-intersection transfer algorithms and per-trial bookkeeping.

``algorithm_weak`` returns a member of the intersection of the target and
source confidence sets when it is non-empty and the target ERM otherwise.
``algorithm_strong`` intersects a wide target set with the source set and, on
failure, falls back to the source-ERM inside a narrower target set.

The runners draw samples, build the sets, run an algorithm and record the
exact excess target risk next to the bound it is supposed to satisfy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from .conf_class import (ComplexityParams, EmpiricalView, FiniteConfidenceSet, localized_strong_set,
                         strong_confidence_set_rootn, weak_confidence_set)
from .conf_reg import (Ellipsoid, ellipsoid_contains, ellipsoid_intersect, min_empirical_risk_over_ellipsoid,
                       ols_fit, regression_confidence_set)
from .instances import TOL, FiniteInstance, LabeledSample, LinearInstance, sample
from .moduli import pivotal_value, strong_modulus, weak_modulus, weak_modulus_linear
from .seeding import derive_seed
from .trust_region import inv_sqrt_spd, solve_trs


@dataclass(frozen=True)
class TransferParams:
    """Knobs of the transfer runners.

    ``q_strong`` picks the target strong-set family for the strong algorithm
    (``rootn`` or ``localized``); ``c_flat`` is the rootn constant of the
    narrow target set (the wide one uses its ratio times that).
    ``regression_c0`` and ``c_mu`` parametrize regression ellipsoids.
    """

    classification: ComplexityParams = field(default_factory=ComplexityParams)
    q_strong: str = "rootn"
    c_flat: float | None = None
    loc_multiplier: float = 1.0
    eps_tilde_trials: int = 200
    regression_c0: float = 4.0
    c_mu: float = 0.0

    def __post_init__(self) -> None:
        if self.q_strong not in ("rootn", "localized"):
            raise ValueError("q_strong must be 'rootn' or 'localized'")
        if self.eps_tilde_trials < 100:
            raise ValueError("eps_tilde_trials must be >= 100")


@dataclass
class TrialReport:
    trial: int
    seed: int
    algo: str
    n_p: int
    n_q: int
    case: str
    chosen: str
    excess_q: float
    eps_q: float
    eps_p: float
    delta_eps_p: float
    bound: float
    bound_ok: bool
    weak_bound: float
    strong_bound: float = math.nan
    eps_tilde: float = math.nan
    intersect: bool = False
    target_only_excess: float = math.nan
    source_only_excess: float = math.nan
    wall_time: float = 0.0

    def as_row(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


# ---------------------------------------------------------------------------
# ERM and the algorithms
# ---------------------------------------------------------------------------


def erm(smp: LabeledSample, subset, inst: FiniteInstance | None = None):
    """Exact empirical risk minimizer over a subset (lowest index on ties).

    Finite case: ``subset`` is an index array and ``inst`` the class.
    Regression case: ``subset`` is an Ellipsoid (or None for all of R^d).
    """
    if isinstance(subset, Ellipsoid):
        return min_empirical_risk_over_ellipsoid(smp, subset)
    if inst is None:
        if subset is not None:
            raise TypeError("finite ERM needs the instance")
        return ols_fit(smp).w_hat
    idx = np.arange(inst.k) if subset is None else np.asarray(subset, dtype=np.int64)
    if idx.size == 0:
        raise ValueError("empty subset")
    if smp.n == 0:
        return int(np.min(idx))
    return EmpiricalView(inst, smp).erm(idx)


def algorithm_weak(set_q, set_p, h_q):
    """Intersection member if any, else ``h_q``.

    Finite sets: the lowest common index.  Ellipsoids: the feasibility
    witness.  ``None`` for either set stands for the whole class.
    """
    if set_q is None and set_p is None:
        raise ValueError("at least one confidence set is required")
    if isinstance(set_q, Ellipsoid) or isinstance(set_p, Ellipsoid):
        if set_q is None:
            return set_p.center.copy()
        if set_p is None:
            return set_q.center.copy()
        res = ellipsoid_intersect(set_p, set_q)
        return res.witness if res.feasible else h_q
    members_q = _members(set_q)
    members_p = _members(set_p)
    if members_q is None:
        return int(members_p[0])
    if members_p is None:
        return int(members_q[0])
    common = np.intersect1d(members_q, members_p)
    return int(common[0]) if common.size else h_q


def _members(s) -> np.ndarray | None:
    if s is None:
        return None
    if isinstance(s, FiniteConfidenceSet):
        return s.member_indices
    return np.sort(np.asarray(s, dtype=np.int64))


class NestingError(ValueError):
    """The narrow target set is not inside the wide one."""


def algorithm_strong(set_q_sharp, set_q_flat, set_p, sample_p: LabeledSample,
                     inst: FiniteInstance | None = None):
    """Wide-target/source intersection member, else source ERM over the narrow target set."""
    if isinstance(set_q_sharp, Ellipsoid):
        if not ellipsoid_contains(set_q_flat, set_q_sharp).contained:
            raise NestingError("flat target ellipsoid is not inside the sharp one")
        if set_p is None:
            return set_q_sharp.center.copy(), True
        res = ellipsoid_intersect(set_p, set_q_sharp)
        if res.feasible:
            return res.witness, True
        if sample_p.n == 0:
            return set_q_flat.center.copy(), False
        return min_empirical_risk_over_ellipsoid(sample_p, set_q_flat), False
    sharp = _members(set_q_sharp)
    flat = _members(set_q_flat)
    if not np.all(np.isin(flat, sharp)):
        raise NestingError("flat target set is not a subset of the sharp one")
    members_p = _members(set_p)
    common = sharp if members_p is None else np.intersect1d(sharp, members_p)
    if common.size:
        return int(common[0]), True
    return erm(sample_p, flat, inst), False


# ---------------------------------------------------------------------------
# eps-tilde
# ---------------------------------------------------------------------------


def _loss_matrix(inst: FiniteInstance) -> np.ndarray:
    """(2m, k) table: mistakes of each hypothesis per (atom, label) cell."""
    h = inst.hypotheses
    neg = (h == 1).T.astype(np.int64)   # label -1 cell, hypothesis says +1
    pos = (h == -1).T.astype(np.int64)  # label +1 cell, hypothesis says -1
    out = np.empty((2 * inst.m, inst.k), dtype=np.int64)
    out[0::2] = neg
    out[1::2] = pos
    return out


def _cell_probs(inst: FiniteInstance, side: str) -> np.ndarray:
    w, eta = inst.weights(side), inst.eta(side)
    p = np.empty(2 * inst.m)
    p[0::2] = w * (1 - eta)
    p[1::2] = w * eta
    p = np.clip(p, 0, None)
    return p / p.sum()


def estimate_eps_tilde(inst: FiniteInstance | LinearInstance, subset, n_p: int, tau: float,
                       trials: int = 200, seed: int = 0) -> float:
    """Empirical (1 - tau)-quantile of the excess P-risk of ERM over ``subset``.

    Finite case: ERM depends on the sample only through the (atom, label)
    counts, so each trial draws one multinomial count vector.  Regression
    case: ``subset`` is an Ellipsoid; each trial fits constrained least
    squares and measures the excess over the best P-risk inside it.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials for a stable quantile")
    if isinstance(inst, FiniteInstance):
        idx = np.unique(np.asarray(subset, dtype=np.int64))
        if idx.size == 0:
            raise ValueError("empty subset")
        return _eps_tilde_finite(inst, tuple(idx.tolist()), int(n_p), float(tau), int(trials), int(seed))
    if not isinstance(subset, Ellipsoid):
        raise TypeError("regression eps-tilde needs an Ellipsoid subset")
    rng = np.random.default_rng(derive_seed(seed, "eps_tilde", n_p))
    R = inv_sqrt_spd(subset.shape)
    sp, wp = inst.sigma_p, inst.w_star_p
    best = solve_trs(R @ sp @ R, R @ sp @ (subset.center - wp), subset.radius).value \
        + float((subset.center - wp) @ sp @ (subset.center - wp))
    vals = np.empty(trials)
    for t in range(trials):
        smp = sample(inst, "P", n_p, rng)
        w = subset.center if n_p == 0 else min_empirical_risk_over_ellipsoid(smp, subset)
        vals[t] = float((w - wp) @ sp @ (w - wp)) - best
    return float(max(0.0, np.quantile(vals, 1 - tau, method="inverted_cdf")))


@lru_cache(maxsize=4096)
def _eps_tilde_finite(inst: FiniteInstance, subset: tuple[int, ...], n_p: int, tau: float,
                      trials: int, seed: int) -> float:
    idx = np.asarray(subset, dtype=np.int64)
    if idx.size == 1:
        return 0.0
    rng = np.random.default_rng(derive_seed(seed, "eps_tilde", n_p, *subset))
    counts = rng.multinomial(n_p, _cell_probs(inst, "P"), size=trials)
    errs = counts @ _loss_matrix(inst)[:, idx]
    chosen = idx[np.argmin(errs, axis=1)]
    r = inst.risks_p
    excess = r[chosen] - r[idx].min()
    return float(np.quantile(excess, 1 - tau, method="inverted_cdf"))


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------


def _sides(seed: int) -> tuple[int, int]:
    return derive_seed(seed, "P"), derive_seed(seed, "Q")


def _w_label(w: np.ndarray) -> str:
    return "[" + " ".join(f"{x:.6g}" for x in np.asarray(w).ravel()) + "]"


def run_weak_transfer(inst, n_p: int, n_q: int, tau: float, params: TransferParams | None = None,
                      seed: int = 0, trial: int = 0) -> TrialReport:
    params = params or TransferParams()
    seed_p, seed_q = _sides(seed)
    s_p = sample(inst, "P", n_p, seed_p)
    s_q = sample(inst, "Q", n_q, seed_q)
    if isinstance(inst, FiniteInstance):
        return _weak_finite(inst, s_p, s_q, tau, params, seed, trial)
    if isinstance(inst, LinearInstance):
        return _weak_linear(inst, s_p, s_q, tau, params, seed, trial)
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def _weak_finite(inst, s_p, s_q, tau, params, seed, trial) -> TrialReport:
    cp = params.classification
    view_p = EmpiricalView(inst, s_p) if s_p.n else None
    view_q = EmpiricalView(inst, s_q) if s_q.n else None
    set_p = weak_confidence_set(s_p, inst, cp, tau, view=view_p) if view_p else None
    set_q = weak_confidence_set(s_q, inst, cp, tau, view=view_q) if view_q else None
    h_q = view_q.erm() if view_q else None
    if set_p is None and set_q is None:
        h = 0
    elif set_p is None:
        h = h_q
    else:
        h = algorithm_weak(set_q, set_p, h_q)
    eps_q = set_q.eps if set_q else math.inf
    eps_p = set_p.eps if set_p else math.inf
    delta = weak_modulus(inst, eps_p)
    bound = min(eps_q, delta)
    intersect = bool(set_p is not None and set_q is not None
                     and np.intersect1d(set_p.member_indices, set_q.member_indices).size)
    ex = float(inst.excess_q[h])
    return TrialReport(trial, seed, "weak", s_p.n, s_q.n, "weak", inst.name(h), ex, eps_q, eps_p, delta,
                       bound, ex <= bound + TOL, bound, intersect=intersect,
                       target_only_excess=float(inst.excess_q[h_q]) if view_q else math.nan,
                       source_only_excess=float(inst.excess_q[view_p.erm()]) if view_p else math.nan)


def _weak_linear(inst, s_p, s_q, tau, params, seed, trial) -> TrialReport:
    def conf(s):
        return regression_confidence_set(s, inst.noise_scale, params.c_mu, tau, 1.0, params.regression_c0)

    set_p = conf(s_p) if s_p.n else None
    set_q = conf(s_q) if s_q.n else None
    w_q = set_q.center if set_q else None
    if set_p is None and set_q is None:
        raise ValueError("at least one of n_p, n_q must be positive")
    w = w_q if set_p is None else algorithm_weak(set_q, set_p, w_q)
    eps_q = set_q.eps if set_q else math.inf
    eps_p = set_p.eps if set_p else math.inf
    delta = weak_modulus_linear(inst, eps_p)
    bound = min(eps_q, delta)
    ex = _excess_q_linear(inst, w)
    intersect = bool(set_p is not None and set_q is not None and ellipsoid_intersect(set_p, set_q).feasible)
    return TrialReport(trial, seed, "weak", s_p.n, s_q.n, "weak", _w_label(w), ex, eps_q, eps_p, delta,
                       bound, ex <= bound * (1 + 1e-9) + TOL, bound, intersect=intersect,
                       target_only_excess=_excess_q_linear(inst, w_q) if set_q else math.nan,
                       source_only_excess=_excess_q_linear(inst, set_p.center) if set_p else math.nan)


def _excess_q_linear(inst: LinearInstance, w) -> float:
    v = np.asarray(w) - inst.w_star_q
    return float(v @ inst.sigma_q @ v)


@dataclass(frozen=True)
class StrongSets:
    sharp: Any
    flat: Any
    eps_q: float
    c_sharp: float
    c_flat: float


def target_strong_sets(inst: FiniteInstance, s_q: LabeledSample, tau: float, params: TransferParams,
                       view: EmpiricalView | None = None) -> StrongSets:
    """Wide and narrow target sets with level ratio equal to the wide set's ratio.

    rootn: narrow uses constant c, wide 2c (ratio 2 each).  localized: the
    narrow set uses multiplier m, the wide one m * C5 * C6, so the narrow
    level is the wide level divided by the wide ratio.
    """
    cp = params.classification
    view = view or EmpiricalView(inst, s_q)
    if params.q_strong == "rootn":
        c = cp.C if params.c_flat is None else params.c_flat
        flat = strong_confidence_set_rootn(s_q, inst, cp, tau, C=c, view=view)
        sharp = strong_confidence_set_rootn(s_q, inst, cp, tau, C=2 * c, view=view)
    else:
        m = params.loc_multiplier
        flat = localized_strong_set(s_q, inst, cp, tau, m, view=view)
        sharp = localized_strong_set(s_q, inst, cp, tau, m * flat.C, view=view)
    return StrongSets(sharp, flat, sharp.eps, sharp.C, flat.C)


def run_strong_transfer(inst, n_p: int, n_q: int, tau: float, params: TransferParams | None = None,
                        seed: int = 0, trial: int = 0) -> TrialReport:
    params = params or TransferParams()
    if n_q <= 0:
        raise ValueError("the strong algorithm needs target data (n_q >= 1)")
    seed_p, seed_q = _sides(seed)
    s_p = sample(inst, "P", n_p, seed_p)
    s_q = sample(inst, "Q", n_q, seed_q)
    if isinstance(inst, FiniteInstance):
        return _strong_finite(inst, s_p, s_q, tau, params, seed, trial)
    if isinstance(inst, LinearInstance):
        return _strong_linear(inst, s_p, s_q, tau, params, seed, trial)
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def _strong_finite(inst, s_p, s_q, tau, params, seed, trial) -> TrialReport:
    cp = params.classification
    view_q = EmpiricalView(inst, s_q)
    view_p = EmpiricalView(inst, s_p) if s_p.n else None
    qs = target_strong_sets(inst, s_q, tau, params, view_q)
    set_p = weak_confidence_set(s_p, inst, cp, tau, view=view_p) if view_p else None
    h, intersect = algorithm_strong(qs.sharp, qs.flat, set_p, s_p, inst)
    eps_q = qs.eps_q
    eps_p = set_p.eps if set_p else math.inf
    delta = weak_modulus(inst, eps_p)
    weak_bound = min(eps_q, delta)
    strong1 = strong_modulus(inst, eps_q, eps_p)
    eps_tilde = math.nan
    if eps_q > pivotal_value(inst) + TOL or intersect:
        case, bound = "1", strong1
    else:
        case = "2"
        eps_tilde = estimate_eps_tilde(inst, qs.flat.member_indices, s_p.n, tau, params.eps_tilde_trials)
        bound = qs.c_flat * strong_modulus(inst, eps_q / qs.c_sharp, eps_tilde)
    ex = float(inst.excess_q[h])
    return TrialReport(trial, seed, "strong", s_p.n, s_q.n, case, inst.name(h), ex, eps_q, eps_p, delta,
                       bound, ex <= bound + TOL, weak_bound, strong_bound=strong1, eps_tilde=eps_tilde,
                       intersect=intersect,
                       target_only_excess=float(inst.excess_q[view_q.erm()]),
                       source_only_excess=float(inst.excess_q[view_p.erm()]) if view_p else math.nan)


def _strong_linear(inst, s_p, s_q, tau, params, seed, trial) -> TrialReport:
    """Regression path: wide target set at 26x the narrow one (ratio 26 each).

    The strong modulus of a linear instance has no closed form; its envelope
    min{eps1, delta(eps2)} is recorded, which upper-bounds it.  The unique
    source minimizer w*_P fixes the pivotal value at its excess target risk.
    """
    def conf(s, scale):
        return regression_confidence_set(s, inst.noise_scale, params.c_mu, tau, scale, params.regression_c0)

    flat = conf(s_q, 1.0)
    sharp = conf(s_q, 26.0)
    set_p = conf(s_p, 1.0) if s_p.n else None
    w, intersect = algorithm_strong(sharp, flat, set_p, s_p)
    eps_q = sharp.eps
    eps_p = set_p.eps if set_p else math.inf
    delta = weak_modulus_linear(inst, eps_p)
    weak_bound = min(eps_q, delta)
    strong1 = weak_bound
    eps_tilde = math.nan
    diff = inst.w_star_p - inst.w_star_q
    pivot = float(diff @ inst.sigma_q @ diff)
    if eps_q > pivot + TOL or intersect:
        case, bound = "1", strong1
    else:
        case = "2"
        eps_tilde = estimate_eps_tilde(inst, flat, s_p.n, tau, params.eps_tilde_trials, seed)
        bound = flat.C * min(eps_q / sharp.C, weak_modulus_linear(inst, eps_tilde))
    ex = _excess_q_linear(inst, w)
    return TrialReport(trial, seed, "strong", s_p.n, s_q.n, case, _w_label(w), ex, eps_q, eps_p, delta,
                       bound, ex <= bound * (1 + 1e-9) + TOL, weak_bound, strong_bound=strong1,
                       eps_tilde=eps_tilde, intersect=intersect,
                       target_only_excess=_excess_q_linear(inst, flat.center),
                       source_only_excess=_excess_q_linear(inst, set_p.center) if set_p else math.nan)
