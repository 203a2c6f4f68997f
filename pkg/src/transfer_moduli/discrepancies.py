"""Relatedness measures between source and target and the modulus bounds they imply."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .instances import TOL, AtomCovariates, FiniteInstance, LinearInstance
from .moduli import pivotal_sharp, weak_modulus_curve, weak_modulus_linear
from .trust_region import inv_sqrt_spd

BOUND_SLACK_TOL = 1e-10


def y_discrepancy(inst: FiniteInstance) -> float:
    return float(np.max(np.abs(inst.risks_p - inst.risks_q)))


def y_discrepancy_prime(inst: FiniteInstance) -> float:
    return float(np.max(np.abs(inst.excess_p - inst.excess_q)))


def a_discrepancy(inst: FiniteInstance) -> float:
    return float(np.max(np.abs(inst.disagreement("P") - inst.disagreement("Q"))))


def a_disc_offset(inst: FiniteInstance) -> float:
    """Additive terms of the A-discrepancy bound beyond eps + disc_A.

    (R_P(h*_P) - R_Q(h*_Q)) + R_Q(h*) + R_P(h*) with h* the lowest-index
    minimizer of R_Q + R_P.
    """
    total = inst.risks_p + inst.risks_q
    j = int(np.flatnonzero(total <= total.min() + TOL)[0])
    return float(inst.risks_p.min() - inst.risks_q.min() + inst.risks_q[j] + inst.risks_p[j])


@dataclass(frozen=True)
class TransferExponentCheck:
    ok: bool
    worst_index: int
    worst_gap: float


def transfer_exponent_check(inst: FiniteInstance, rho: float, C_rho: float) -> TransferExponentCheck:
    """Check E_Q(h) <= C_rho * E_P(h)^(1/rho) + eps_sharp for every h.

    ``worst_gap`` is the largest E_Q(h) - bound(h); the check passes when it
    is at most TOL.
    """
    if rho <= 0:
        raise ValueError("rho must be > 0")
    sharp = pivotal_sharp(inst)
    bound = C_rho * np.power(np.maximum(inst.excess_p, 0.0), 1.0 / rho) + sharp
    gap = inst.excess_q - bound
    j = int(np.argmax(gap))
    return TransferExponentCheck(bool(gap[j] <= TOL), j, float(gap[j]))


def smallest_transfer_constant(inst: FiniteInstance, rho: float) -> float:
    """Smallest C_rho making (rho, C_rho) a transfer exponent; 0 if any works."""
    sharp = pivotal_sharp(inst)
    pos = inst.excess_p > TOL
    if not np.any(pos):
        return 0.0
    ratio = (inst.excess_q[pos] - sharp) / np.power(inst.excess_p[pos], 1.0 / rho)
    return float(max(0.0, ratio.max()))


# ---------------------------------------------------------------------------
# Wasserstein-1 by successive shortest paths
# ---------------------------------------------------------------------------


def wasserstein1_discrete(p_weights, q_weights, metric) -> float:
    """Exact optimal-transport cost between two weight vectors on m points.

    Solved as a min-cost flow on the bipartite transport network with
    successive shortest augmenting paths (Bellman-Ford on the residual graph,
    which carries negative reverse-edge costs).
    """
    p = np.asarray(p_weights, dtype=np.float64)
    q = np.asarray(q_weights, dtype=np.float64)
    c = np.asarray(metric, dtype=np.float64)
    m = p.size
    if q.size != m or c.shape != (m, m):
        raise ValueError("weights and metric dimensions disagree")
    if np.any(c < 0):
        raise ValueError("metric has negative costs")
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("weights must be nonnegative")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError(f"total masses differ by {abs(p.sum() - q.sum()):.3g} (> 1e-9)")
    q = q * (p.sum() / q.sum()) if q.sum() > 0 else q

    n = 2 * m + 2
    src, snk = 2 * m, 2 * m + 1
    cap = np.zeros((n, n))
    cost = np.zeros((n, n))
    cap[src, :m] = p
    cap[m:2 * m, snk] = q
    big = p.sum() + 1.0
    cap[:m, m:2 * m] = big
    cost[:m, m:2 * m] = c
    cost[m:2 * m, :m] = -c.T
    flow_tol = 1e-15
    total = 0.0
    for _ in range(4 * m * m + 8):
        dist = np.full(n, np.inf)
        prev = np.full(n, -1)
        dist[src] = 0.0
        for _ in range(n - 1):
            changed = False
            for u in np.flatnonzero(np.isfinite(dist)):
                nbr = np.flatnonzero(cap[u] > flow_tol)
                cand = dist[u] + cost[u, nbr]
                better = cand < dist[nbr] - 1e-15
                if np.any(better):
                    dist[nbr[better]] = cand[better]
                    prev[nbr[better]] = u
                    changed = True
            if not changed:
                break
        if not np.isfinite(dist[snk]):
            break
        path = [snk]
        while path[-1] != src:
            path.append(int(prev[path[-1]]))
        path.reverse()
        push = min(cap[u, v] for u, v in zip(path, path[1:]))
        for u, v in zip(path, path[1:]):
            cap[u, v] -= push
            cap[v, u] += push
        total += push * dist[snk]
    remaining = cap[src, :m].sum()
    if remaining > 1e-12:
        raise RuntimeError(f"transport did not route all mass ({remaining:.3g} left)")
    return float(total)


def euclidean_metric(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    return np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)


# ---------------------------------------------------------------------------
# linear-regression measures
# ---------------------------------------------------------------------------


def covariance_ratio(sigma_p, sigma_q) -> float:
    """lambda_max(Sigma_P^{-1} Sigma_Q) through the similar symmetric matrix."""
    sp = np.asarray(sigma_p, dtype=np.float64)
    sq = np.asarray(sigma_q, dtype=np.float64)
    for name, s in (("sigma_p", sp), ("sigma_q", sq)):
        if s.ndim != 2 or s.shape[0] != s.shape[1] or np.max(np.abs(s - s.T)) > 1e-10:
            raise ValueError(f"{name} must be a symmetric square matrix")
        if np.linalg.eigvalsh(s)[0] <= 0:
            raise ValueError(f"{name} is not positive definite")
    r = inv_sqrt_spd(sp)
    return float(np.linalg.eigvalsh(r @ sq @ r)[-1])


def w1_class_constants(inst: LinearInstance) -> tuple[float, float]:
    """(M, lambda) for the finite class h_w(x) = w.x on the atom covariates.

    lambda is the largest |w| (Lipschitz constant for the Euclidean metric)
    and M the largest |w.x| over class members and atoms.
    """
    W = inst.w1_class
    pts = inst.covariate_model.points
    lam = float(np.max(np.linalg.norm(W, axis=1)))
    M = float(np.max(np.abs(W @ pts.T)))
    return M, lam


def w1_class_modulus(inst: LinearInstance, eps: float) -> float:
    """Weak modulus over the finite class ``w1_class`` with exact excess risks."""
    W = inst.w1_class
    rp = np.einsum("ij,jk,ik->i", W - inst.w_star_p, inst.sigma_p, W - inst.w_star_p)
    rq = np.einsum("ij,jk,ik->i", W - inst.w_star_q, inst.sigma_q, W - inst.w_star_q)
    ep, eq = rp - rp.min(), rq - rq.min()
    return float(eq[ep <= eps + TOL].max())


# ---------------------------------------------------------------------------
# bound audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundRow:
    measure: str
    measure_value: float
    eps: float
    delta: float
    bound: float

    @property
    def slack(self) -> float:
        return self.bound - self.delta


@dataclass
class BoundReport:
    rows: list[BoundRow] = field(default_factory=list)

    @property
    def min_slack(self) -> float:
        return min((r.slack for r in self.rows), default=math.inf)

    @property
    def ok(self) -> bool:
        return self.min_slack >= -BOUND_SLACK_TOL

    def violations(self) -> list[BoundRow]:
        return [r for r in self.rows if r.slack < -BOUND_SLACK_TOL]


FINITE_MEASURES = ("y_disc", "y_disc_shift", "y_disc_prime", "a_disc", "transfer_exp_1", "transfer_exp_2")
LINEAR_MEASURES = ("covariance", "w1")


def verify_modulus_bounds(inst: FiniteInstance | LinearInstance, eps_grid,
                          measures: tuple[str, ...] | None = None) -> BoundReport:
    """Evaluate every applicable modulus upper bound on an eps grid.

    Finite instances: y_disc (eps + 2 disc), y_disc_shift (eps + disc plus the
    gap between best risks), y_disc_prime, a_disc, and transfer exponents
    with rho = 1, 2 at their smallest admissible constants.  Linear
    instances: the covariance-ratio bound (exact form when the minimizers
    coincide, the factor-2 form otherwise) and, when the instance carries a
    finite class on atom covariates with a shared minimizer, the W1 bound.
    """
    eps_grid = [float(e) for e in eps_grid]
    report = BoundReport()
    if isinstance(inst, FiniteInstance):
        wanted = FINITE_MEASURES if measures is None else measures
        unknown = set(wanted) - set(FINITE_MEASURES)
        if unknown:
            raise ValueError(f"unknown finite measures: {sorted(unknown)}")
        curve = weak_modulus_curve(inst)
        disc = y_discrepancy(inst)
        shift = float(inst.risks_p.min() - inst.risks_q.min())
        disc_p = y_discrepancy_prime(inst)
        disc_a = a_discrepancy(inst) if "a_disc" in wanted else 0.0
        a_off = a_disc_offset(inst)
        sharp = pivotal_sharp(inst)
        consts = {rho: smallest_transfer_constant(inst, rho) for rho in (1, 2)}
        for eps in eps_grid:
            delta = curve(eps)
            for name in wanted:
                if name == "y_disc":
                    report.rows.append(BoundRow(name, disc, eps, delta, eps + 2 * disc))
                elif name == "y_disc_shift":
                    report.rows.append(BoundRow(name, disc, eps, delta, eps + disc + shift))
                elif name == "y_disc_prime":
                    report.rows.append(BoundRow(name, disc_p, eps, delta, eps + disc_p))
                elif name == "a_disc":
                    report.rows.append(BoundRow(name, disc_a, eps, delta, eps + disc_a + a_off))
                else:
                    rho = int(name[-1])
                    C = consts[rho]
                    report.rows.append(BoundRow(name, C, eps, delta, C * eps ** (1.0 / rho) + sharp))
        return report
    if isinstance(inst, LinearInstance):
        wanted = LINEAR_MEASURES if measures is None else measures
        unknown = set(wanted) - set(LINEAR_MEASURES)
        if unknown:
            raise ValueError(f"unknown linear measures: {sorted(unknown)}")
        lam = covariance_ratio(inst.sigma_p, inst.sigma_q)
        diff = inst.w_star_p - inst.w_star_q
        shared = bool(np.max(np.abs(diff)) <= 1e-12)
        eq_wp = float(diff @ inst.sigma_q @ diff)
        has_w1 = (inst.w1_class is not None and isinstance(inst.covariate_model, AtomCovariates) and shared
                  and np.any(np.all(np.abs(inst.w1_class - inst.w_star_p) <= 1e-12, axis=1)))
        if has_w1 and "w1" in wanted:
            M, lip = w1_class_constants(inst)
            cm = inst.covariate_model
            w1 = wasserstein1_discrete(cm.p_weights, cm.q_weights, euclidean_metric(cm.points))
        for eps in eps_grid:
            if "covariance" in wanted:
                delta = weak_modulus_linear(inst, eps)
                bound = lam * eps if shared else 2 * lam * eps + 2 * eq_wp
                report.rows.append(BoundRow("covariance", lam, eps, delta, bound))
            if has_w1 and "w1" in wanted:
                report.rows.append(BoundRow("w1", w1, eps, w1_class_modulus(inst, eps),
                                            eps + 8 * M * lip * w1))
        return report
    raise TypeError(f"unsupported instance type {type(inst).__name__}")

