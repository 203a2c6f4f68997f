"""Regression confidence ellipsoids and the quadratic geometry behind them.

Everything reduces to one of two primitives:

* a trust-region subproblem (quadratic objective over one ellipsoid), used
  for intersection tests and constrained least squares;
* an S-procedure certificate for containment of one ellipsoid in another.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .instances import LabeledSample, LinearInstance, normalize_side
from .trust_region import inv_sqrt_spd, solve_trs

FEAS_TOL = 1e-10
NUDGE = 1e-12


def _spd(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square")
    if np.max(np.abs(a - a.T)) > 1e-10:
        raise ValueError(f"{name} is not symmetric within 1e-10")
    a = 0.5 * (a + a.T)
    if np.linalg.eigvalsh(a)[0] <= 0:
        raise ValueError(f"{name} is not positive definite")
    return a


@dataclass(frozen=True, eq=False)
class Ellipsoid:
    """{w : (w - center)^T shape (w - center) <= radius}, with optional (eps, tau, C) tags."""

    center: np.ndarray
    shape: np.ndarray
    radius: float
    eps: float | None = None
    tau: float | None = None
    C: float | None = None

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=np.float64).ravel()
        s = _spd(self.shape, "shape")
        if s.shape[0] != c.size:
            raise ValueError("center and shape dimensions disagree")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("radius must be finite and > 0")
        c.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", s)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self) -> int:
        return self.center.size

    def quad(self, w) -> float:
        v = np.asarray(w, dtype=np.float64) - self.center
        return float(v @ self.shape @ v)

    def contains_point(self, w, tol: float = FEAS_TOL) -> bool:
        return self.quad(w) <= self.radius + tol

    def to_dict(self) -> dict:
        out = {"center": self.center.tolist(), "shape": self.shape.tolist(), "radius": self.radius}
        for k in ("eps", "tau", "C"):
            if getattr(self, k) is not None:
                out[k] = getattr(self, k)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Ellipsoid":
        return cls(np.asarray(d["center"]), np.asarray(d["shape"]), d["radius"],
                   d.get("eps"), d.get("tau"), d.get("C"))


def population_ellipsoid(inst: LinearInstance, side: str, eps: float) -> Ellipsoid:
    """The exact constraint set {w : |w - w*|^2_Sigma <= eps}."""
    side = normalize_side(side)
    return Ellipsoid(inst.w_star(side), inst.sigma(side), eps)


# ---------------------------------------------------------------------------
# least squares and matrix concentration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OLSFit:
    w_hat: np.ndarray
    sigma_hat: np.ndarray
    singular: bool


def ols_fit(sample: LabeledSample) -> OLSFit:
    """Least squares through an SVD-based solver; ``singular`` flags rank loss."""
    X = np.asarray(sample.points, dtype=np.float64)
    y = np.asarray(sample.labels, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("regression samples need an n x d covariate array")
    n, d = X.shape
    if n == 0:
        return OLSFit(np.zeros(d), np.zeros((d, d)), True)
    sigma_hat = X.T @ X / n
    w_hat = np.linalg.lstsq(X, y, rcond=None)[0]
    tr = float(np.trace(sigma_hat))
    singular = n < d or tr <= 0 or float(np.linalg.eigvalsh(sigma_hat)[0]) <= 1e-12 * tr / d
    return OLSFit(w_hat, sigma_hat, bool(singular))


def sandwich_check(sigma, sigma_hat) -> bool:
    """True iff Sigma/2 <= Sigma_hat <= 3 Sigma/2 in the Loewner order."""
    r = inv_sqrt_spd(_spd(sigma, "sigma"))
    eig = np.linalg.eigvalsh(r @ np.asarray(sigma_hat, dtype=np.float64) @ r)
    return bool(eig[0] >= 0.5 and eig[-1] <= 1.5)


def regression_eps(n: int, d: int, noise_scale: float, c_mu: float, tau: float, c0: float = 4.0) -> float:
    """c0 sigma_Y^2 (d + c_mu + ln(1/tau)) / n with sigma_Y floored at 1."""
    s = max(float(noise_scale), 1.0)
    return c0 * s * s * (d + c_mu + math.log(1.0 / tau)) / n


def regression_confidence_set(sample: LabeledSample, noise_scale: float, c_mu: float, tau: float,
                              scale: float = 1.0, c0: float = 4.0) -> Ellipsoid:
    """Ellipsoid around the OLS fit with radius 6 scale eps in the empirical metric.

    Tagged (26 scale eps, 2 tau, 26): on the good events it sits between the
    population constraint sets at levels scale*eps and 26*scale*eps.
    """
    fit = ols_fit(sample)
    if fit.singular:
        raise ValueError("empirical second moment is singular; need more samples")
    eps = regression_eps(sample.n, fit.w_hat.size, noise_scale, c_mu, tau, c0)
    return Ellipsoid(fit.w_hat, fit.sigma_hat, 6.0 * scale * eps,
                     eps=26.0 * scale * eps, tau=2.0 * tau, C=26.0)


# ---------------------------------------------------------------------------
# ellipsoid geometry
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Intersection:
    feasible: bool
    witness: np.ndarray | None
    min_value: float


def _min_quadratic_over(e: Ellipsoid, A: np.ndarray, b: np.ndarray, const: float):
    """Minimize w^T A w - 2 b^T w + const over e; returns (w, value, lam)."""
    R = inv_sqrt_spd(e.shape)
    M = R @ A @ R
    g = R @ (A @ e.center - b)
    base = float(e.center @ A @ e.center - 2 * b @ e.center + const)
    res = solve_trs(M, g, e.radius)
    return e.center + R @ res.x, res.value + base, res.lam


def ellipsoid_intersect(e1: Ellipsoid, e2: Ellipsoid) -> Intersection:
    """Decide whether two ellipsoids meet by minimizing e2's quadratic over e1."""
    if e1.dim != e2.dim:
        raise ValueError("dimension mismatch")
    A2, c2 = e2.shape, e2.center
    w, val, _ = _min_quadratic_over(e1, A2, A2 @ c2, float(c2 @ A2 @ c2))
    if val > e2.radius + FEAS_TOL:
        return Intersection(False, None, val)
    if e1.quad(w) >= e1.radius:
        w = e1.center + (1 - NUDGE) * (w - e1.center)
    return Intersection(True, w, val)


def _homogenized(e: Ellipsoid) -> np.ndarray:
    A, c = e.shape, e.center
    d = c.size
    F = np.empty((d + 1, d + 1))
    F[:d, :d] = A
    F[:d, d] = -A @ c
    F[d, :d] = -A @ c
    F[d, d] = float(c @ A @ c) - e.radius
    return F


@dataclass(frozen=True)
class Containment:
    contained: bool
    margin: float
    multiplier: float


def ellipsoid_contains(inner: Ellipsoid, outer: Ellipsoid, tol: float = 1e-9) -> Containment:
    """S-procedure test of ``inner`` being a subset of ``outer``.

    inner is in outer iff some lam >= 0 makes lam F_inner - F_outer positive
    semidefinite (F the homogenized quadratic forms).  The smallest
    eigenvalue of that pencil is concave in lam; its maximum is located by
    doubling and golden-section search.  Both forms are normalized first so
    ``tol`` is relative.
    """
    if inner.dim != outer.dim:
        raise ValueError("dimension mismatch")
    F1 = _homogenized(inner)
    F2 = _homogenized(outer)
    F1 = F1 / np.linalg.norm(F1)
    F2 = F2 / np.linalg.norm(F2)

    def g(lam: float) -> float:
        return float(np.linalg.eigvalsh(lam * F1 - F2)[0])

    hi = 1.0
    while g(2 * hi) > g(hi) and hi < 1e12:
        hi *= 2
    lo, hi = 0.0, 2 * hi
    phi = (math.sqrt(5) - 1) / 2
    a, b = hi - phi * (hi - lo), lo + phi * (hi - lo)
    ga, gb = g(a), g(b)
    for _ in range(200):
        if hi - lo <= 1e-13 * max(1.0, hi):
            break
        if ga < gb:
            lo, a, ga = a, b, gb
            b = lo + phi * (hi - lo)
            gb = g(b)
        else:
            hi, b, gb = b, a, ga
            a = hi - phi * (hi - lo)
            ga = g(a)
    best_lam = max((0.0, g(0.0)), (a, ga), (b, gb), key=lambda t: t[1])
    return Containment(best_lam[1] >= -tol, best_lam[1], best_lam[0])


@dataclass(frozen=True)
class ConstrainedLS:
    w: np.ndarray
    value: float
    lam: float
    kkt_residual: float


def min_empirical_risk_detail(sample: LabeledSample, e: Ellipsoid) -> ConstrainedLS:
    X = np.asarray(sample.points, dtype=np.float64)
    y = np.asarray(sample.labels, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("empty sample")
    S = X.T @ X / n
    b = X.T @ y / n
    w, val, lam = _min_quadratic_over(e, S, b, float(y @ y / n))
    # stationarity of the Lagrangian in the ellipsoid's own metric
    grad = 2 * (S @ w - b) + 2 * lam * e.shape @ (w - e.center)
    scale = max(1.0, float(np.linalg.norm(b)), float(np.linalg.norm(S, 2)))
    return ConstrainedLS(w, val, lam, float(np.linalg.norm(grad)) / scale)


def min_empirical_risk_over_ellipsoid(sample: LabeledSample, e: Ellipsoid) -> np.ndarray:
    """Least-squares minimizer restricted to the ellipsoid."""
    return min_empirical_risk_detail(sample, e).w


def empirical_risk(sample: LabeledSample, w) -> float:
    X = np.asarray(sample.points, dtype=np.float64)
    y = np.asarray(sample.labels, dtype=np.float64)
    r = y - X @ np.asarray(w, dtype=np.float64)
    return float(r @ r / len(y))


@dataclass(frozen=True)
class RegressionContract:
    lower_ok: bool
    upper_ok: bool

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def regression_strong_contract(inst: LinearInstance, side: str, e: Ellipsoid) -> RegressionContract:
    """Exact check of H(eps / C) within e within H(eps) via ellipsoid containment."""
    if e.eps is None or e.C is None:
        raise ValueError("ellipsoid carries no (eps, C) metadata")
    lower = ellipsoid_contains(population_ellipsoid(inst, side, e.eps / e.C), e).contained
    upper = ellipsoid_contains(e, population_ellipsoid(inst, side, e.eps)).contained
    return RegressionContract(lower, upper)
