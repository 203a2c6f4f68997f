"""Confidence sets for finite classification classes.

Three constructions around the empirical risk minimizer:

* ``weak_confidence_set`` -- empirical-Bernstein threshold
  C sqrt(mu_hat(h != h_hat) alpha) + C alpha on the empirical excess risk;
* ``strong_confidence_set_rootn`` -- flat threshold C sqrt(alpha'),
  alpha' = sqrt((d + ln(1/tau)) / n);
* ``localized_strong_set`` -- dyadic localization on the empirical diameter.

The universal constants are configuration (``ComplexityParams``); the
contract checkers below evaluate the set-inclusion guarantees exactly against
population risks so the constants can be calibrated by simulation.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterable

import numpy as np

from .instances import TOL, FiniteInstance, LabeledSample, normalize_side

DYADIC_FLOOR_EXP = 60


@dataclass(frozen=True)
class ComplexityParams:
    """Constants of the confidence-set constructions.

    ``C`` and ``C_prime`` scale the weak set and its nominal level, ``c0`` is
    the uniform-Bernstein constant, ``C1``..``C7`` the localization constants.
    ``bcc_C``/``bcc_beta`` are the Bernstein class parameters used only for
    the nominal level of the weak set (beta = 0, C = 1 always holds).
    """

    d_vc: int | None = None
    c0: float = 1.0
    C: float = 2.0
    C_prime: float = 4.0
    C1: float = 2.0
    C2: float = 4.0
    C3: float = 8.0
    C4: float = 8.0
    C5: float = 2.0
    C6: float = 4.0
    C7: float = 16.0
    bcc_C: float = 1.0
    bcc_beta: float = 0.0

    def __post_init__(self) -> None:
        if self.d_vc is not None and self.d_vc < 1:
            raise ValueError("d_vc must be >= 1")
        for name in ("c0", "C", "C_prime", "C1", "C2", "C3", "C4", "C5", "C6", "C7", "bcc_C"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0 <= self.bcc_beta <= 1:
            raise ValueError("bcc_beta must lie in [0, 1]")

    def with_(self, **kw) -> "ComplexityParams":
        return replace(self, **kw)

    def resolve_dvc(self, inst: FiniteInstance) -> int:
        return self.d_vc if self.d_vc is not None else vc_dimension(inst.hypotheses)


@dataclass(frozen=True, eq=False)
class FiniteConfidenceSet:
    member_indices: np.ndarray
    eps: float
    tau: float
    kind: str
    erm_index: int
    C: float | None = None
    eps_hat_loc: float | None = None
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        idx = np.asarray(self.member_indices, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("confidence set must be non-empty")
        if self.erm_index not in idx:
            raise ValueError("confidence set must contain the empirical risk minimizer")
        if self.kind not in ("weak", "strong"):
            raise ValueError(f"kind must be weak or strong, got {self.kind!r}")
        if self.kind == "strong" and not (self.C is not None and self.C > 1):
            raise ValueError("strong sets need a ratio C > 1")
        idx = np.unique(idx)
        idx.setflags(write=False)
        object.__setattr__(self, "member_indices", idx)

    def __contains__(self, j: int) -> bool:
        return bool(np.any(self.member_indices == j))

    def mask(self, k: int) -> np.ndarray:
        m = np.zeros(k, dtype=bool)
        m[self.member_indices] = True
        return m

    def bitmask(self, k: int) -> str:
        """Membership as a 0/1 string, hypothesis 0 first."""
        return "".join("1" if b else "0" for b in self.mask(k))


# ---------------------------------------------------------------------------
# complexity and empirical quantities
# ---------------------------------------------------------------------------


def alpha(n: int, d_vc: int, tau: float) -> float:
    """(d ln(n/d) + ln(1/tau)) / n."""
    if n < 1 or n < d_vc:
        raise ValueError(f"need n >= max(1, d_vc); got n={n}, d_vc={d_vc}")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    return (d_vc * math.log(n / d_vc) + math.log(1.0 / tau)) / n


def alpha_prime(n: int, d_vc: int, tau: float) -> float:
    """sqrt((d + ln(1/tau)) / n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < tau <= 1:
        raise ValueError("tau must lie in (0, 1]")
    return math.sqrt((d_vc + math.log(1.0 / tau)) / n)


def vc_dimension(hypotheses: np.ndarray) -> int:
    """Exact VC dimension of a finite table by shattering search (m <= 20).

    A class of one hypothesis shatters nothing; 1 is returned so the
    complexity terms stay defined.
    """
    h = np.ascontiguousarray(np.asarray(hypotheses) > 0, dtype=np.int8)
    return _vc_cached(h.tobytes(), h.shape)


@lru_cache(maxsize=256)
def _vc_cached(buf: bytes, shape: tuple[int, int]) -> int:
    h = np.frombuffer(buf, dtype=np.int8).reshape(shape) > 0
    k, m = shape
    if m > 20:
        raise ValueError("VC dimension search is limited to m <= 20 atoms; supply d_vc")
    best = 0
    for s in range(1, m + 1):
        if 2 ** s > k:
            break
        weights = 1 << np.arange(s)
        found = False
        for cols in itertools.combinations(range(m), s):
            codes = h[:, cols].astype(np.int64) @ weights
            if np.unique(codes).size == 2 ** s:
                found = True
                break
        if not found:
            break
        best = s
    return max(best, 1)


@dataclass(frozen=True, eq=False)
class EmpiricalView:
    """Empirical risks and distances of a finite class on one sample."""

    inst: FiniteInstance
    sample: LabeledSample

    def __post_init__(self) -> None:
        if self.sample.n == 0:
            raise ValueError("empty sample")

    @property
    def n(self) -> int:
        return self.sample.n

    @property
    def counts(self) -> np.ndarray:
        return self._cache["counts"]

    @property
    def _cache(self) -> dict:
        c = self.__dict__.get("_c")
        if c is None:
            counts = self.sample.cell_counts(self.inst.m)
            # predicting +1 errs on label -1 (column 0) and vice versa
            errs = np.where(self.inst.hypotheses == 1, counts[:, 0], counts[:, 1]).sum(axis=1)
            c = {"counts": counts, "errors": errs.astype(np.int64)}
            object.__setattr__(self, "_c", c)
        return c

    @property
    def errors(self) -> np.ndarray:
        return self._cache["errors"]

    @property
    def risks(self) -> np.ndarray:
        return self.errors / self.n

    def erm(self, subset: np.ndarray | None = None) -> int:
        if subset is None:
            return int(np.argmin(self.errors))
        idx = np.asarray(subset, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("empty subset")
        idx = np.sort(idx)
        return int(idx[np.argmin(self.errors[idx])])

    def excess(self) -> np.ndarray:
        e = self.errors
        return (e - e.min()) / self.n

    def atom_freq(self) -> np.ndarray:
        return self.counts.sum(axis=1) / self.n

    def distances(self) -> np.ndarray:
        c = self._cache
        if "dist" not in c:
            c["dist"] = self.inst.disagreement_under(self.atom_freq())
        return c["dist"]


def empirical_distance(sample: LabeledSample, inst: FiniteInstance, h: int, h_prime: int) -> float:
    if sample.n == 0:
        raise ValueError("empty sample")
    pts = np.asarray(sample.points, dtype=np.int64)
    hyp = inst.hypotheses
    return float(np.mean(hyp[h, pts] != hyp[h_prime, pts]))


def _check_side(sample: LabeledSample, side: str | None) -> str:
    return sample.side if side is None else normalize_side(side)


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------


def weak_confidence_set(sample: LabeledSample, inst: FiniteInstance,
                        params: ComplexityParams, tau: float,
                        view: EmpiricalView | None = None) -> FiniteConfidenceSet:
    view = view or EmpiricalView(inst, sample)
    d = params.resolve_dvc(inst)
    a = alpha(view.n, d, tau)
    h_hat = view.erm()
    dist = view.distances()[h_hat]
    thresh = params.C * np.sqrt(dist * a) + params.C * a
    members = np.flatnonzero(view.excess() <= thresh + TOL)
    eps = params.C_prime * (params.bcc_C * a) ** (1.0 / (2.0 - params.bcc_beta))
    return FiniteConfidenceSet(members, eps, tau, "weak", h_hat)


def strong_confidence_set_rootn(sample: LabeledSample, inst: FiniteInstance,
                                params: ComplexityParams, tau: float, C: float | None = None,
                                view: EmpiricalView | None = None) -> FiniteConfidenceSet:
    """Flat-threshold strong set; ``C`` defaults to ``params.C``."""
    view = view or EmpiricalView(inst, sample)
    c = params.C if C is None else float(C)
    d = params.resolve_dvc(inst)
    level = c * math.sqrt(alpha_prime(view.n, d, tau))
    members = np.flatnonzero(view.excess() <= level + TOL)
    return FiniteConfidenceSet(members, 4.0 / 3.0 * level, tau, "strong", view.erm(), C=2.0)


@dataclass(frozen=True)
class DyadicResult:
    value: float
    saturated: bool
    floored: bool


def _dyadic_search(lhs: Callable[[float], float], c_den: float) -> DyadicResult:
    """Smallest 2^-i such that lhs(e) <= e / c_den holds for it and every larger grid point."""
    if lhs(1.0) > 1.0 / c_den + TOL:
        return DyadicResult(1.0, True, False)
    e = 1.0
    for i in range(1, DYADIC_FLOOR_EXP + 1):
        nxt = 2.0 ** -i
        if lhs(nxt) > nxt / c_den + TOL:
            return DyadicResult(e, False, False)
        e = nxt
    return DyadicResult(e, False, True)


def _diameter(dist: np.ndarray, members: np.ndarray) -> float:
    if members.size <= 1:
        return 0.0
    return float(dist[np.ix_(members, members)].max())


def empirical_eps_loc(view: EmpiricalView, params: ComplexityParams, tau: float) -> DyadicResult:
    d = params.resolve_dvc(view.inst)
    a = alpha(view.n, d, tau)
    excess = view.excess()
    dist = view.distances()

    def lhs(e: float) -> float:
        members = np.flatnonzero(excess <= params.C3 * e + TOL)
        diam = _diameter(dist, members)
        return min(params.c0 * math.sqrt(diam * a) + params.c0 * a, 1.0)

    return _dyadic_search(lhs, params.C4)


def localized_strong_set(sample: LabeledSample, inst: FiniteInstance, params: ComplexityParams,
                         tau: float, C_multiplier: float = 1.0,
                         view: EmpiricalView | None = None) -> FiniteConfidenceSet:
    """Empirical constraint set at level C_multiplier * eps_hat_loc.

    Observable metadata: level C6 * C_multiplier * eps_hat with ratio C5 * C6,
    i.e. the inclusions H(C eps_hat / C5) within the set within
    H(C6 C eps_hat) that hold on the good event whenever eps_hat >= eps_bar.
    """
    view = view or EmpiricalView(inst, sample)
    res = empirical_eps_loc(view, params, tau)
    level = C_multiplier * res.value
    members = np.flatnonzero(view.excess() <= level + TOL)
    flags = tuple(f for f, on in (("saturated", res.saturated), ("floored", res.floored)) if on)
    return FiniteConfidenceSet(members, params.C6 * level, tau, "strong", view.erm(),
                               C=params.C5 * params.C6, eps_hat_loc=res.value, flags=flags)


def population_eps_loc(inst: FiniteInstance, side: str, params: ComplexityParams,
                       n: int, tau: float) -> DyadicResult:
    """Dyadic localization level computed from exact diameters and excess risks."""
    d = params.resolve_dvc(inst)
    a = alpha(n, d, tau)
    excess = inst.excess(side)
    dist = inst.disagreement(side)

    def lhs(e: float) -> float:
        members = np.flatnonzero(excess <= params.C1 * e + TOL)
        return min(params.c0 * math.sqrt(_diameter(dist, members) * a) + params.c0 * a, 1.0)

    return _dyadic_search(lhs, params.C2)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BCCResult:
    ok: bool
    worst_eps: float
    worst_gap: float


def bcc_check(inst: FiniteInstance, side: str, C_mu: float, beta: float) -> BCCResult:
    """Exact check of diam(H(eps)) <= C_mu eps^beta for eps in (0, 1/2).

    The constraint set only changes at the distinct excess levels, and on
    [e_j, e_{j+1}) the right-hand side is smallest at e_j, so checking the
    levels below 1/2 (with 0^0 = 1) is exhaustive.
    """
    excess = inst.excess(side)
    dist = inst.disagreement(side)
    worst_gap, worst_eps = -math.inf, 0.0
    levels = sorted(set(float(e) for e in excess))
    for e in levels:
        if e >= 0.5:
            break
        members = np.flatnonzero(excess <= e + TOL)
        rhs = C_mu * (1.0 if beta == 0 else e ** beta)
        gap = _diameter(dist, members) - rhs
        if gap > worst_gap:
            worst_gap, worst_eps = gap, e
    return BCCResult(worst_gap <= TOL, worst_eps, worst_gap)


@dataclass(frozen=True)
class BernsteinCheck:
    risk_ok: bool
    distance_ok: bool

    @property
    def ok(self) -> bool:
        return self.risk_ok and self.distance_ok


def uniform_bernstein_check(sample: LabeledSample, inst: FiniteInstance,
                            params: ComplexityParams, tau: float,
                            view: EmpiricalView | None = None) -> BernsteinCheck:
    """Both uniform-Bernstein displays, for every pair of hypotheses at once."""
    view = view or EmpiricalView(inst, sample)
    side = sample.side
    a = alpha(view.n, params.resolve_dvc(inst), tau)
    c0 = params.c0
    r, rh = inst.risks(side), view.risks
    dev = np.abs((r[:, None] - r[None, :]) - (rh[:, None] - rh[None, :]))
    dh = view.distances()
    risk_ok = bool(np.all(dev <= c0 * np.sqrt(dh * a) + c0 * a + TOL))
    dmu = inst.disagreement(side)
    distance_ok = bool(np.all(0.5 * dmu - c0 * a <= dh + TOL) and np.all(dh <= 2 * dmu + c0 * a + TOL))
    return BernsteinCheck(risk_ok, distance_ok)


@dataclass(frozen=True)
class ContractResult:
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def weak_contract(inst: FiniteInstance, side: str, cs: FiniteConfidenceSet) -> ContractResult:
    """Exact check of the weak-set conditions.

    (i) some level above E(h_hat) has its constraint set inside the set; the
    constraint set just above E(h_hat) is {h : E(h) <= E(h_hat)}, so this is
    the binding choice.  (ii) the set lies inside H(eps).
    """
    excess = inst.excess(side)
    mask = cs.mask(inst.k)
    lower = np.flatnonzero(excess <= excess[cs.erm_index] + TOL)
    lower_ok = bool(mask[lower].all())
    upper_ok = bool(np.all(excess[cs.member_indices] <= cs.eps + TOL))
    return ContractResult(lower_ok, upper_ok)


def strong_contract(inst: FiniteInstance, side: str, cs: FiniteConfidenceSet) -> ContractResult:
    """Exact check of H(eps / C) within the set within H(eps)."""
    if cs.C is None:
        raise ValueError("strong contract needs a ratio C")
    excess = inst.excess(side)
    mask = cs.mask(inst.k)
    lower = np.flatnonzero(excess <= cs.eps / cs.C + TOL)
    return ContractResult(bool(mask[lower].all()),
                          bool(np.all(excess[cs.member_indices] <= cs.eps + TOL)))


# ---------------------------------------------------------------------------
# calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Calibration:
    value: float
    failure_rate: float
    validation_rate: float | None
    tried: tuple[tuple[float, float], ...] = field(default=())


def calibrate_constant(fails: Callable[[float, int], bool], candidates: Iterable[float],
                       seeds: Iterable[int], tau: float,
                       validation_seeds: Iterable[int] | None = None) -> Calibration:
    """Smallest candidate whose empirical failure frequency is at most tau.

    ``fails(value, seed)`` runs one trial and reports whether the guarantee
    failed.  Candidates are scanned in increasing order; if a validation seed
    list is given, the failure frequency there is reported (not enforced).
    """
    seeds = list(seeds)
    if not seeds:
        raise ValueError("need at least one calibration seed")
    tried = []
    for c in sorted(float(v) for v in candidates):
        rate = sum(bool(fails(c, s)) for s in seeds) / len(seeds)
        tried.append((c, rate))
        if rate <= tau:
            val = None
            if validation_seeds is not None:
                vs = list(validation_seeds)
                val = sum(bool(fails(c, s)) for s in vs) / len(vs)
            return Calibration(c, rate, val, tuple(tried))
    raise ValueError(f"no candidate reached failure rate <= {tau}: {tried}")
