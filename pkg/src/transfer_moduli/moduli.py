"""Constraint sets, weak and strong moduli and pivotal values.

All finite-instance quantities are exact: the class is finite, so every sup
and inf is a max or min over a table.  Constraint sets are closed,
``{h : excess(h) <= eps}``, evaluated with the absolute slack ``TOL``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import TOL, FiniteInstance, LinearInstance, normalize_side
from .trust_region import inv_sqrt_spd, maximize_quadratic_on_ball


def _check_eps(eps: float, name: str = "eps") -> float:
    eps = float(eps)
    if math.isnan(eps) or eps < 0:
        raise ValueError(f"{name} must be >= 0, got {eps}")
    return eps


def constraint_set(inst: FiniteInstance, side: str, eps: float) -> np.ndarray:
    """Sorted indices of hypotheses with excess risk at most ``eps`` (inf allowed)."""
    eps = _check_eps(eps)
    return np.flatnonzero(inst.excess(side) <= eps + TOL)


def relative_excess(inst: FiniteInstance, side: str, subset: np.ndarray) -> np.ndarray:
    """Excess risk of every hypothesis relative to the best member of ``subset``."""
    r = inst.risks(side)
    return r - r[np.asarray(subset, dtype=int)].min()


def weak_modulus(inst: FiniteInstance, eps: float) -> float:
    members = constraint_set(inst, "P", eps)
    return float(inst.excess_q[members].max())


@dataclass(frozen=True)
class ModulusCurve:
    """Right-continuous step function eps -> delta(eps).

    ``breakpoints[i] = (e_i, d_i)`` means delta(eps) = d_i for e_i <= eps < e_{i+1};
    the last entry holds for every larger eps, including infinity.
    """

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        eps = [b[0] for b in self.breakpoints]
        vals = [b[1] for b in self.breakpoints]
        if not eps or eps[0] != 0.0:
            raise ValueError("curve must start at eps = 0")
        if any(e2 <= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(v2 < v1 for v1, v2 in zip(vals, vals[1:])):
            raise ValueError("curve values must be non-decreasing")

    def __call__(self, eps: float) -> float:
        eps = _check_eps(eps)
        idx = 0
        for i, (e, _) in enumerate(self.breakpoints):
            if e <= eps + TOL:
                idx = i
        return self.breakpoints[idx][1]

    @property
    def sup(self) -> float:
        return self.breakpoints[-1][1]


def _distinct_levels(values: np.ndarray) -> list[float]:
    """Sorted values with entries closer than TOL merged into the smallest."""
    out: list[float] = []
    for v in np.sort(values):
        if not out or v > out[-1] + TOL:
            out.append(float(v))
    return out


def weak_modulus_curve(inst: FiniteInstance) -> ModulusCurve:
    ep, eq = inst.excess_p, inst.excess_q
    levels = _distinct_levels(ep)
    bps: list[tuple[float, float]] = []
    running = 0.0
    for lev in levels:
        running = max(running, float(eq[ep <= lev + TOL].max()))
        bps.append((0.0 if not bps else lev, running))
    return ModulusCurve(tuple(bps))


@dataclass(frozen=True)
class StrongModulusResult:
    value: float
    members: np.ndarray
    empty: bool


def strong_modulus_detail(inst: FiniteInstance, eps1: float, eps2: float) -> StrongModulusResult:
    """The strong modulus with its feasible set.

    Feasible: excess Q-risk <= eps1 and P-risk within eps2 of the best P-risk
    inside the Q-constraint set.  That set always contains the P-best member
    of the Q-constraint set, so ``empty`` is False on finite instances; the
    flag is kept so a sup over an empty set reads as 0 explicitly.
    """
    eps1 = _check_eps(eps1, "eps1")
    eps2 = _check_eps(eps2, "eps2")
    q_set = constraint_set(inst, "Q", eps1)
    rel = relative_excess(inst, "P", q_set)[q_set]
    members = q_set[rel <= eps2 + TOL]
    if members.size == 0:
        return StrongModulusResult(0.0, members, True)
    return StrongModulusResult(float(inst.excess_q[members].max()), members, False)


def strong_modulus(inst: FiniteInstance, eps1: float, eps2: float) -> float:
    return strong_modulus_detail(inst, eps1, eps2).value


def p_minimizers(inst: FiniteInstance) -> np.ndarray:
    return np.flatnonzero(inst.excess_p <= TOL)


def pivotal_value(inst: FiniteInstance) -> float:
    return float(inst.excess_q[p_minimizers(inst)].min())


def pivotal_sharp(inst: FiniteInstance) -> float:
    return float(inst.excess_q[p_minimizers(inst)].max())


def pivotal_value_by_sets(inst: FiniteInstance) -> float:
    """Smallest eps1 with H_Q(eps1) meeting H_P(eps) for every eps > 0.

    H_P(eps) only changes at the distinct excess-P levels, so "every eps > 0"
    is checked at those levels plus one level below the smallest positive one.
    """
    p_levels = _distinct_levels(inst.excess_p)
    positive = [lv for lv in p_levels if lv > TOL]
    probe = [positive[0] / 2 if positive else 1.0] + positive
    p_sets = [set(constraint_set(inst, "P", e).tolist()) for e in probe]
    for e1 in _distinct_levels(inst.excess_q):
        q_set = set(constraint_set(inst, "Q", e1).tolist())
        if all(q_set & ps for ps in p_sets):
            return e1
    raise AssertionError("H_Q(max excess) is the whole class; unreachable")


# ---------------------------------------------------------------------------
# linear regression
# ---------------------------------------------------------------------------


def weak_modulus_linear(inst: LinearInstance, eps: float) -> float:
    """Exact max of |w - w*_Q|^2_{Sigma_Q} over |w - w*_P|^2_{Sigma_P} <= eps.

    With w = w*_P + Sigma_P^{-1/2} u the objective is u^T M u + 2 b^T u + c over
    the ball |u|^2 <= eps, where M = Sigma_P^{-1/2} Sigma_Q Sigma_P^{-1/2}.
    """
    eps = _check_eps(eps)
    diff = inst.w_star_p - inst.w_star_q
    c = float(diff @ inst.sigma_q @ diff)
    if eps == 0:
        return c
    if math.isinf(eps):
        return math.inf
    s_inv = inv_sqrt_spd(inst.sigma_p)
    M = s_inv @ inst.sigma_q @ s_inv
    b = s_inv @ inst.sigma_q @ diff
    return maximize_quadratic_on_ball(M, b, eps).value + c


def excess_linear(inst: LinearInstance, side: str, W: np.ndarray) -> np.ndarray:
    """Excess risks of several weight vectors (rows of ``W``)."""
    side = normalize_side(side)
    V = np.atleast_2d(W) - inst.w_star(side)
    return np.einsum("ij,jk,ik->i", V, inst.sigma(side), V)
