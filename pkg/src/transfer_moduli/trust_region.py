"""Trust-region subproblem: minimize x^T A x + 2 g^T x subject to |x|^2 <= r2.

``A`` is symmetric and may be indefinite.  After an eigendecomposition
``A = V diag(a) V^T`` the optimal multiplier ``lam >= max(0, -min(a))`` solves
the secular equation ``s(lam) = sum_i gt_i^2 / (a_i + lam)^2 = r2`` (with
``gt = V^T g``) unless the solution is interior or falls in the hard case.
The root is found by safeguarded Newton on ``1/sqrt(s) - 1/sqrt(r2)``, which
is increasing and nearly linear in ``lam``, with bisection as a fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LAMBDA_TOL = 1e-12
MAX_NEWTON = 200
MAX_BISECT = 400


@dataclass(frozen=True)
class TRSResult:
    x: np.ndarray
    lam: float
    value: float
    boundary: bool
    hard_case: bool
    iterations: int


def _secular_parts(a: np.ndarray, gt2: np.ndarray, lam: float) -> tuple[float, float]:
    den = a + lam
    s = float(np.sum(gt2 / den**2))
    ds = float(-2.0 * np.sum(gt2 / den**3))
    return s, ds


def _dual(a: np.ndarray, gt2: np.ndarray, lam: float, r2: float) -> float:
    return float(-np.sum(gt2 / (a + lam)) - lam * r2)


def solve_trs(A: np.ndarray, g: np.ndarray, r2: float) -> TRSResult:
    """Global minimizer of x^T A x + 2 g^T x over the ball |x|^2 <= r2."""
    A = np.asarray(A, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64).ravel()
    d = g.size
    if A.shape != (d, d):
        raise ValueError(f"A has shape {A.shape}, expected ({d}, {d})")
    if not r2 > 0:
        raise ValueError("r2 must be > 0")
    a, V = np.linalg.eigh(0.5 * (A + A.T))
    gt = V.T @ g
    gt2 = gt**2
    scale = max(1.0, float(np.max(np.abs(a))))
    a0 = float(a[0])
    lam_low = max(0.0, -a0)
    gnorm = math.sqrt(float(gt2.sum()))

    # components whose shifted eigenvalue vanishes at lam_low
    flat = (a + lam_low) <= 1e-13 * scale
    live = ~flat

    def x_at(lam: float) -> np.ndarray:
        y = np.zeros(d)
        y[live] = -gt[live] / (a[live] + lam)
        return y

    def finish(y: np.ndarray, lam: float, boundary: bool, hard: bool, it: int) -> TRSResult:
        x = V @ y
        val = float(x @ A @ x + 2 * g @ x)
        return TRSResult(x, lam, val, boundary, hard, it)

    # gradient mass on the flat eigenspace forces lam > lam_low
    flat_mass = float(gt2[flat].sum())
    if flat_mass <= (1e-14 * max(gnorm, 1.0)) ** 2:
        y = x_at(lam_low)
        y_norm2 = float(y @ y)
        if y_norm2 <= r2:
            if lam_low == 0.0:
                return finish(y, 0.0, False, False, 0)
            # hard case: move along the bottom eigenvector to the boundary
            y[np.flatnonzero(flat)[0]] = math.sqrt(max(r2 - y_norm2, 0.0))
            return finish(y, lam_low, True, True, 0)

    # root lies in (lam_low, hi]: at hi every |a_i + lam| >= |g| / sqrt(r2)
    lo = lam_low
    hi = lam_low + gnorm / math.sqrt(r2)
    target = 1.0 / math.sqrt(r2)
    lam = hi
    psi_lo = -math.inf
    phi = 0.0
    it = 0
    for it in range(1, MAX_NEWTON + MAX_BISECT + 1):
        s, ds = _secular_parts(a, gt2, lam)
        phi = 1.0 / math.sqrt(s) - target if s > 0 else math.inf
        if phi < 0:
            lo = lam
            psi = _dual(a, gt2, lo, r2)
            # the dual is concave with its maximum at the root, so it rises
            # while the lower end of the bracket moves toward the root
            assert psi >= psi_lo - 1e-9 * max(1.0, abs(psi_lo)), "dual value decreased"
            psi_lo = psi
        else:
            hi = lam
        if phi == 0 or hi - lo <= max(LAMBDA_TOL, 4 * np.finfo(float).eps * hi):
            break
        cand = math.nan
        if it <= MAX_NEWTON and math.isfinite(phi):
            dphi = -0.5 * s**-1.5 * ds
            if dphi > 0:
                cand = lam - phi / dphi
        lam = cand if lo < cand < hi else 0.5 * (lo + hi)
    # use the end of the bracket inside the ball, then snap to the sphere
    if phi < 0:
        lam = hi
    y = -gt / (a + lam)
    n2 = float(y @ y)
    if n2 > 0:
        y *= math.sqrt(r2 / n2)
    return finish(y, float(lam), True, False, it)


def maximize_quadratic_on_ball(B: np.ndarray, h: np.ndarray, r2: float) -> TRSResult:
    """Maximize x^T B x + 2 h^T x over |x|^2 <= r2 (value field holds the max)."""
    res = solve_trs(-np.asarray(B, dtype=np.float64), -np.asarray(h, dtype=np.float64), r2)
    return TRSResult(res.x, res.lam, -res.value, res.boundary, res.hard_case, res.iterations)


def inv_sqrt_spd(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    if lam[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (V / np.sqrt(lam)) @ V.T


def sqrt_spd(S: np.ndarray) -> np.ndarray:
    lam, V = np.linalg.eigh(0.5 * (S + S.T))
    if lam[0] <= 0:
        raise ValueError("matrix is not positive definite")
    return (V * np.sqrt(lam)) @ V.T
