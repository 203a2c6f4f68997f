"""Hard-instance families behind the classification lower bound.

A family is indexed by sign vectors sigma in {-1, 1}^d drawn from a greedy
Varshamov-Gilbert packing.  Every member lives on atoms x_0..x_d: x_0 carries
most of the mass and is always labeled +1, while x_i (i >= 1) carries a small
mass and a label bias of sign sigma_i.  Source and target share the Bayes
classifier h_sigma but differ in how much mass and bias they put on x_1..x_d.

Two variants are supported:

* ``full``: the effective class is every sign pattern on x_1..x_d;
* ``code``: the class is the packing itself, with kappa fixed to 1 and the
  target scale tied to f(eps_P / 8).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .conf_class import ComplexityParams, bcc_check, vc_dimension
from .instances import FiniteInstance, sample
from .moduli import weak_modulus_curve
from .seeding import derive_seed
from .transfer import TransferParams, erm, run_weak_transfer

CLOSED_FORM_TOL = 1e-12
RADIUS_REL_TOL = 1e-9
DEFAULT_C = 2.0 ** -9
MAX_FULL_D = 16
VARIANTS = ("full", "code")


# ---------------------------------------------------------------------------
# packing
# ---------------------------------------------------------------------------


def _popcount(a: np.ndarray) -> np.ndarray:
    return np.bitwise_count(a.astype(np.uint64)).astype(np.int64)


def vg_code(d: int, count: int | None = None, exhaustive: bool = False) -> np.ndarray:
    """Greedy packing of {-1, 1}^d with pairwise Hamming distance >= d/8.

    Words are scanned in lexicographic order of their integer encoding (bit
    i set means coordinate i is -1), so the first word is all ones.  A word
    is kept if it is at distance >= ceil(d/8) from every kept word.  The scan
    stops once ``count`` words are kept (default ceil(2^(d/8)) + 1, enough
    for the packing guarantee) or, with ``exhaustive``, runs to the end.
    Returns a (words, d) int8 array.
    """
    if d < 8:
        raise ValueError("the packing needs d >= 8")
    if d > 62:
        raise ValueError("d > 62 does not fit the integer encoding")
    min_dist = math.ceil(d / 8)
    if exhaustive:
        if d > 20:
            raise ValueError("an exhaustive scan is limited to d <= 20")
        target = None
    else:
        target = count if count is not None else math.ceil(2.0 ** (d / 8)) + 1
    kept: list[int] = []
    kept_arr = np.zeros(0, dtype=np.uint64)
    x = 0
    limit = 1 << d
    while x < limit and (target is None or len(kept) < target):
        if kept_arr.size == 0 or _popcount(kept_arr ^ np.uint64(x)).min() >= min_dist:
            kept.append(x)
            kept_arr = np.asarray(kept, dtype=np.uint64)
        x += 1
    if target is not None and len(kept) < target:
        raise RuntimeError(f"packing ran out of words at {len(kept)} < {target}")
    return _decode(np.asarray(kept, dtype=np.uint64), d)


def _decode(codes: np.ndarray, d: int) -> np.ndarray:
    bits = (codes[:, None] >> np.arange(d, dtype=np.uint64)[None, :]) & np.uint64(1)
    return np.where(bits == 1, -1, 1).astype(np.int8)


def hamming(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sum(np.asarray(a) != np.asarray(b), axis=-1)


@dataclass(frozen=True)
class PackingCheck:
    ok: bool
    words: int
    min_distance: int
    required_distance: float
    required_words: float


def check_packing(code: np.ndarray) -> PackingCheck:
    """Exhaustive pairwise check of the two packing guarantees."""
    code = np.asarray(code)
    M1, d = code.shape
    enc = (code == -1).astype(np.uint64) @ (np.uint64(1) << np.arange(d, dtype=np.uint64))
    min_d = d
    for i in range(M1 - 1):
        min_d = min(min_d, int(_popcount(enc[i + 1:] ^ enc[i]).min()))
    need_w = 2.0 ** (d / 8)
    ok = bool(min_d >= d / 8 and M1 - 1 >= need_w and np.all(code[0] == 1))
    return PackingCheck(ok, M1, min_d, d / 8, need_w)


# ---------------------------------------------------------------------------
# envelope f
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FSpec:
    """Non-decreasing envelope tabulated at knots, linear in between.

    Below the first knot the function interpolates towards (0, 0); beyond
    the last knot it stays flat.  ``kappa`` is the declared constant of the
    scaling condition alpha f(eps) <= kappa f(alpha eps).
    """

    knots_x: tuple[float, ...]
    knots_y: tuple[float, ...]
    kappa: float = 1.0

    def __post_init__(self) -> None:
        xs, ys = np.asarray(self.knots_x, float), np.asarray(self.knots_y, float)
        if xs.ndim != 1 or xs.size < 1 or xs.size != ys.size:
            raise ValueError("knots need matching non-empty x and y lists")
        if np.any(np.diff(xs) <= 0) or xs[0] < 0:
            raise ValueError("knot x values must be >= 0 and strictly increasing")
        if np.any(np.diff(ys) < 0) or ys[0] < 0 or ys[-1] > 1:
            raise ValueError("knot y values must be non-decreasing within [0, 1]")
        if not self.kappa >= 1:
            raise ValueError("kappa must be >= 1")

    def __call__(self, eps):
        xs = np.asarray(self.knots_x)
        ys = np.asarray(self.knots_y)
        if xs[0] > 0:
            xs, ys = np.concatenate([[0.0], xs]), np.concatenate([[0.0], ys])
        out = np.interp(np.asarray(eps, dtype=np.float64), xs, ys)
        return float(out) if np.ndim(out) == 0 else out

    def kappa_violation(self, grid_size: int = 1000) -> float:
        """Largest alpha f(eps) - kappa f(alpha eps) over a grid of (0, 1]^2."""
        g = np.linspace(1.0 / grid_size, 1.0, grid_size)
        f_eps = self(g)
        worst = -math.inf
        for a in g:
            worst = max(worst, float(np.max(a * f_eps - self.kappa * self(a * g))))
        return worst

    def check_kappa(self, grid_size: int = 1000) -> bool:
        return self.kappa_violation(grid_size) <= CLOSED_FORM_TOL

    @classmethod
    def identity(cls) -> "FSpec":
        return cls((0.0, 1.0), (0.0, 1.0), 1.0)

    @classmethod
    def power(cls, exponent: float, scale: float = 1.0, knots: int = 257) -> "FSpec":
        """scale * eps^exponent for exponent in (0, 1], tabulated on a geometric grid."""
        if not 0 < exponent <= 1:
            raise ValueError("power envelopes need exponent in (0, 1] (concave, kappa = 1)")
        xs = np.concatenate([[0.0], np.geomspace(1e-9, 1.0, knots - 1)])
        return cls(tuple(xs), tuple(np.minimum(scale * xs ** exponent, 1.0)), 1.0)

    def to_dict(self) -> dict:
        return {"knots": [[x, y] for x, y in zip(self.knots_x, self.knots_y)], "kappa": self.kappa}

    @classmethod
    def from_dict(cls, d: dict) -> "FSpec":
        unknown = set(d) - {"knots", "kappa"}
        if unknown:
            raise ValueError(f"unknown f-spec keys: {sorted(unknown)}")
        knots = d["knots"]
        return cls(tuple(float(k[0]) for k in knots), tuple(float(k[1]) for k in knots),
                   float(d.get("kappa", 1.0)))

    @classmethod
    def load(cls, path: str | Path) -> "FSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# the family
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HardFamily:
    """Shared structure plus the per-sigma instances (built lazily)."""

    d: int
    n_p: int
    n_q: int
    beta_p: float
    beta_q: float
    eps_p: float
    eps_q: float
    eps: float
    kappa0: float
    c0: float
    c1: float
    variant: str
    f_spec: FSpec
    codewords: np.ndarray
    hypotheses: np.ndarray
    p_weights: np.ndarray
    q_weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        """Number of codewords besides sigma_0."""
        return self.codewords.shape[0] - 1

    def bias(self, side: str) -> float:
        """|2 eta - 1| on the informative atoms."""
        if side == "P":
            return self.eps_p ** (1 - self.beta_p)
        return self.eps ** (1 - self.beta_q)

    def eta(self, side: str, sigma) -> np.ndarray:
        s = np.asarray(sigma, dtype=np.float64)
        return np.concatenate([[1.0], 0.5 + 0.5 * s * self.bias(side)])

    def instance(self, i: int) -> FiniteInstance:
        """(P_sigma, Q_sigma) for codeword i."""
        if i not in self._cache:
            sigma = self.codewords[i]
            self._cache[i] = FiniteInstance(self.p_weights, self.q_weights, self.eta("P", sigma),
                                            self.eta("Q", sigma), self.hypotheses)
        return self._cache[i]

    def bayes_index(self, i: int) -> int:
        """Index of h_sigma in the class."""
        match = np.flatnonzero(np.all(self.hypotheses[:, 1:] == self.codewords[i], axis=1))
        if match.size == 0:
            raise LookupError("Bayes classifier missing from the class")
        return int(match[0])

    @property
    def vc_dim(self) -> int:
        if self.variant == "full":
            return self.d
        return vc_dimension(self.hypotheses)

    def closed_forms(self, dist) -> dict[str, np.ndarray]:
        """Excess risks and disagreement masses as functions of Hamming distance."""
        r = np.asarray(dist, dtype=np.float64) / self.d
        return {
            "excess_q": r / self.kappa0 * self.eps,
            "disagree_q": r / self.kappa0 * self.eps ** self.beta_q,
            "excess_p": r * self.eps_p,
            "disagree_p": r * self.eps_p ** self.beta_p,
        }

    def lower_bound_scale(self) -> float:
        """min{eps_Q, f(eps_P)}, the order the minimax risk is compared against."""
        return min(self.eps_q, self.f_spec(self.eps_p))


def _all_patterns(d: int) -> np.ndarray:
    if d > MAX_FULL_D:
        raise ValueError(f"the full class is limited to d <= {MAX_FULL_D}; use the code variant")
    return _decode(np.arange(1 << d, dtype=np.uint64), d)


def build_hard_family(d: int, n_p: int, n_q: int, beta_p: float, beta_q: float,
                      f_spec: FSpec | None = None, c0: float = DEFAULT_C, c1: float = DEFAULT_C,
                      variant: str = "full", codewords: np.ndarray | None = None,
                      check_kappa: bool = True) -> HardFamily:
    """Construct the family for the given sample sizes and noise exponents.

    eps_P = c0 (d/n_p)^(1/(2-beta_P)), eps_Q = (d/n_q)^(1/(2-beta_Q)) and the
    target scale eps = c1 min{eps_Q, f(eps_P)} (full) or
    c1 min{eps_Q, f(eps_P/8)} (code).  Marginals:
    P_X(x_0) = 1 - eps_P^beta_P, P_X(x_i) = eps_P^beta_P / d,
    Q_X(x_0) = 1 - eps^beta_Q / kappa0, Q_X(x_i) = eps^beta_Q / (d kappa0).
    """
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    if n_p < 1 or n_q < 1:
        raise ValueError("n_p and n_q must be >= 1")
    for name, b in (("beta_p", beta_p), ("beta_q", beta_q)):
        if not 0 <= b <= 1:
            raise ValueError(f"{name} must lie in [0, 1]")
    if not (c0 > 0 and c1 > 0):
        raise ValueError("c0 and c1 must be > 0")
    f_spec = f_spec or FSpec.identity()
    if check_kappa and variant == "full" and not f_spec.check_kappa():
        raise ValueError(f"f violates the kappa condition by {f_spec.kappa_violation():.3g}")
    eps_p = c0 * (d / n_p) ** (1 / (2 - beta_p))
    eps_q = (d / n_q) ** (1 / (2 - beta_q))
    if variant == "full":
        kappa0 = f_spec.kappa
        eps = c1 * min(eps_q, f_spec(eps_p))
    else:
        kappa0 = 1.0
        eps = c1 * min(eps_q, f_spec(eps_p / 8))
    if not eps_p < 0.5:
        raise ValueError(f"eps_P = {eps_p:.4g} >= 1/2; increase n_p or decrease c0")
    if not 0 < eps < 0.5:
        raise ValueError(f"eps = {eps:.4g} outside (0, 1/2); increase n_q or decrease c1")
    code = vg_code(d) if codewords is None else np.asarray(codewords, dtype=np.int8)
    if code.ndim != 2 or code.shape[1] != d:
        raise ValueError("codewords must be a (words, d) array")
    if variant == "full":
        body = _all_patterns(d)
    else:
        body = code
    hyp = np.concatenate([np.ones((body.shape[0], 1), dtype=np.int8), body], axis=1)
    mp, mq = eps_p ** beta_p, eps ** beta_q / kappa0
    p_w = np.concatenate([[1.0 - mp], np.full(d, mp / d)])
    q_w = np.concatenate([[1.0 - mq], np.full(d, mq / d)])
    return HardFamily(d, int(n_p), int(n_q), float(beta_p), float(beta_q), float(eps_p), float(eps_q),
                      float(eps), float(kappa0), float(c0), float(c1), variant, f_spec, code, hyp, p_w, q_w)


# ---------------------------------------------------------------------------
# membership audit
# ---------------------------------------------------------------------------


@dataclass
class MembershipReport:
    checked: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_membership(family: HardFamily, sigma_indices=None, max_listed: int = 50) -> MembershipReport:
    """Exact audit of every family member against the class requirements.

    For each sigma: marginals are probability vectors; source and target
    Bayes classifiers coincide with h_sigma; exact excess risks and
    disagreement masses of every class member match their closed forms; the
    Bernstein condition holds with constant 1 around the Bayes classifier
    and, for classes small enough to tabulate, with constant 2 on diameters;
    and delta <= f on every modulus breakpoint up to 1/4.
    """
    rep = MembershipReport()

    def bad(msg: str) -> None:
        if len(rep.violations) < max_listed:
            rep.violations.append(msg)
        elif len(rep.violations) == max_listed:
            rep.violations.append("further violations suppressed")

    for side, w in (("P", family.p_weights), ("Q", family.q_weights)):
        if np.any(w < 0) or abs(float(np.sum(w)) - 1.0) > CLOSED_FORM_TOL:
            bad(f"{side} marginal is not a probability vector (sum {float(np.sum(w)):.17g})")
    idx = range(family.codewords.shape[0]) if sigma_indices is None else sigma_indices
    for i in idx:
        rep.checked += 1
        sigma = family.codewords[i]
        try:
            inst = family.instance(i)
        except ValueError as exc:
            bad(f"sigma[{i}]: invalid instance ({exc})")
            continue
        for side in ("P", "Q"):
            bayes = np.where(inst.eta(side)[1:] >= 0.5, 1, -1)
            if np.any(bayes != sigma) or inst.eta(side)[0] != 1.0:
                bad(f"sigma[{i}]: {side} Bayes classifier differs from h_sigma")
        b = family.bayes_index(i)
        dist = hamming(family.hypotheses[:, 1:], sigma)
        closed = family.closed_forms(dist)
        hyp = family.hypotheses
        exact = {
            "excess_q": inst.risks_q - inst.risks_q[b],
            "disagree_q": (hyp != hyp[b]) @ family.q_weights,
            "excess_p": inst.risks_p - inst.risks_p[b],
            "disagree_p": (hyp != hyp[b]) @ family.p_weights,
        }
        for key, val in exact.items():
            gap = np.abs(val - closed[key])
            j = int(np.argmax(gap))
            if gap[j] > CLOSED_FORM_TOL:
                bad(f"sigma[{i}]: {key} of hypothesis {j} is {val[j]:.17g}, closed form {closed[key][j]:.17g}")
        if np.any(inst.excess_p < -CLOSED_FORM_TOL) or abs(inst.risks_p.min() - inst.risks_p[b]) > CLOSED_FORM_TOL:
            bad(f"sigma[{i}]: h_sigma is not a source risk minimizer")
        if abs(inst.risks_q.min() - inst.risks_q[b]) > CLOSED_FORM_TOL:
            bad(f"sigma[{i}]: h_sigma is not a target risk minimizer")
        for side, beta, dis in (("P", family.beta_p, exact["disagree_p"]), ("Q", family.beta_q, exact["disagree_q"])):
            ex = np.maximum(inst.excess(side), 0.0)
            rhs = np.ones_like(ex) if beta == 0 else ex ** beta
            # excess is a difference of O(1) risks, so ex**beta carries a
            # relative error of about 1e-16 / ex; allow 1e-9 relative slack
            gap = dis - rhs - RADIUS_REL_TOL * rhs
            j = int(np.argmax(gap))
            if gap[j] > CLOSED_FORM_TOL:
                bad(f"sigma[{i}]: {side} Bernstein radius condition fails at hypothesis {j} (gap {gap[j]:.3g})")
            if inst.k <= 2048:
                res = bcc_check(inst, side, 2.0, beta)
                if not res.ok:
                    bad(f"sigma[{i}]: {side} Bernstein diameter condition (C=2) fails at eps={res.worst_eps:.4g}")
        curve = weak_modulus_curve(inst)
        for e, delta in curve.breakpoints:
            if e > 0.25:
                break
            if delta > family.f_spec(e) + CLOSED_FORM_TOL:
                bad(f"sigma[{i}]: delta({e:.6g}) = {delta:.6g} exceeds f = {family.f_spec(e):.6g}")
    return rep


# ---------------------------------------------------------------------------
# KL divergences
# ---------------------------------------------------------------------------


def kl_bernoulli(p: float, q: float) -> float:
    """KL(Ber(p) || Ber(q)) in nats."""
    for name, v in (("p", p), ("q", q)):
        if not 0 < v < 1:
            raise ValueError(f"{name} = {v} must lie in (0, 1)")
    return float(p * math.log(p / q) + (1 - p) * math.log((1 - p) / (1 - q)))


def fit_kl_constant(eps_max: float = 0.45, points: int = 4500) -> float:
    """max of KL(1/2 + e/2 || 1/2 - e/2) / e^2 over a grid of (0, eps_max]."""
    grid = np.linspace(eps_max / points, eps_max, points)
    vals = [kl_bernoulli(0.5 + e / 2, 0.5 - e / 2) / (e * e) for e in grid]
    return float(max(vals))


def _side_kl(family: HardFamily, side: str, s1: np.ndarray, s2: np.ndarray) -> float:
    differ = s1 != s2
    if not np.any(differ):
        return 0.0
    bias = family.bias(side)
    if bias >= 1:
        return math.inf
    w = family.p_weights if side == "P" else family.q_weights
    kl_flip = kl_bernoulli(0.5 + bias / 2, 0.5 - bias / 2)
    return float(np.sum(w[1:][differ]) * kl_flip)


def kl_budget(family: HardFamily, sigma, sigma_prime) -> float:
    """KL between the joint sample laws: n_P KL(P_sigma||P_sigma') + n_Q KL(Q_sigma||Q_sigma').

    Each per-distribution term is the marginal-weighted sum of conditional
    Bernoulli divergences over atoms where the two sign vectors differ.
    ``sigma`` arguments are codeword indices or sign vectors.
    """
    s1 = _as_sigma(family, sigma)
    s2 = _as_sigma(family, sigma_prime)
    return family.n_p * _side_kl(family, "P", s1, s2) + family.n_q * _side_kl(family, "Q", s1, s2)


def _as_sigma(family: HardFamily, s) -> np.ndarray:
    if np.ndim(s) == 0:
        return family.codewords[int(s)]
    s = np.asarray(s)
    if s.shape != (family.d,):
        raise ValueError(f"sign vector must have length {family.d}")
    return s


@dataclass(frozen=True)
class KLBudgetCheck:
    ok: bool
    worst: float
    mean: float
    limit: float


def check_kl_budget(family: HardFamily) -> KLBudgetCheck:
    """Worst and mean KL from sigma_0 to the other codewords against (1/8) ln M."""
    vals = [kl_budget(family, 0, i) for i in range(1, family.codewords.shape[0])]
    limit = math.log(family.M) / 8 if family.M >= 1 else 0.0
    worst = max(vals) if vals else 0.0
    mean = float(np.mean(vals)) if vals else 0.0
    return KLBudgetCheck(bool(worst <= limit), worst, mean, limit)


# ---------------------------------------------------------------------------
# minimax simulation
# ---------------------------------------------------------------------------

LEARNERS = ("oracle", "majority-x0", "erm-q", "alg1")


def _learner(family: HardFamily, name: str, tau: float, params: TransferParams | None
             ) -> Callable[[int, int], int]:
    """Map (codeword index, trial seed) to the index of the chosen hypothesis."""
    if name == "oracle":
        return lambda i, s: family.bayes_index(i)
    if name == "majority-x0":
        # the x_0 labels carry no information about sigma; predicting their
        # majority label everywhere gives the all-ones pattern
        ones = int(np.flatnonzero(np.all(family.hypotheses == 1, axis=1))[0])
        return lambda i, s: ones
    if name == "erm-q":
        def run(i: int, s: int) -> int:
            inst = family.instance(i)
            return int(erm(sample(inst, "Q", family.n_q, derive_seed(s, "Q")), None, inst))
        return run
    if name == "alg1":
        p = params or TransferParams(ComplexityParams(d_vc=family.vc_dim))

        def run(i: int, s: int) -> int:
            inst = family.instance(i)
            rep = run_weak_transfer(inst, family.n_p, family.n_q, tau, p, seed=s)
            return _index_of(inst, rep.chosen)
        return run
    raise ValueError(f"unknown learner {name!r}; choose from {LEARNERS}")


def _index_of(inst: FiniteInstance, name: str) -> int:
    if name.startswith("h") and name[1:].isdigit():
        return int(name[1:])
    return inst.names.index(name)


@dataclass(frozen=True)
class MinimaxResult:
    learner: str
    worst: float
    worst_sigma: int
    per_sigma: tuple[float, ...]
    trials: int


def minimax_simulate(family: HardFamily, learner: str = "alg1", trials: int = 20, seed: int = 0,
                     sigma_indices=None, tau: float = 0.05, params: TransferParams | None = None,
                     threads: int = 1) -> MinimaxResult:
    """Worst case over sigma of the Monte Carlo mean excess target risk.

    Trial t for codeword i uses seed derive_seed(seed, i, t), so results do
    not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    run = _learner(family, learner, tau, params)
    idx = list(range(family.codewords.shape[0])) if sigma_indices is None else list(sigma_indices)

    def mean_for(i: int) -> float:
        inst = family.instance(i)
        ex = [float(inst.excess_q[run(i, derive_seed(seed, i, t))]) for t in range(trials)]
        return float(np.mean(ex))

    for i in idx:  # build instances up front so workers only read
        family.instance(i)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            means = list(pool.map(mean_for, idx))
    else:
        means = [mean_for(i) for i in idx]
    j = int(np.argmax(means))
    return MinimaxResult(learner, means[j], idx[j], tuple(means), trials)
