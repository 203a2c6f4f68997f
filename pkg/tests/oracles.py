"""Independent reference computations used by the tests.

None of these share code with the package beyond plain numpy/scipy: moduli
are recomputed in exact rational arithmetic, geometry by grids and projected
gradient, transport by a linear program.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog


# ---------------------------------------------------------------------------
# exact rational moduli
# ---------------------------------------------------------------------------


class RationalInstance:
    """Finite instance with Fraction-valued weights and regression values."""

    def __init__(self, p_weights, q_weights, p_eta, q_eta, hypotheses):
        self.pw = [Fraction(x) for x in p_weights]
        self.qw = [Fraction(x) for x in q_weights]
        self.pe = [Fraction(x) for x in p_eta]
        self.qe = [Fraction(x) for x in q_eta]
        self.h = [list(map(int, row)) for row in hypotheses]

    @classmethod
    def from_float(cls, inst) -> "RationalInstance":
        return cls([Fraction(float(x)) for x in inst.p_weights], [Fraction(float(x)) for x in inst.q_weights],
                   [Fraction(float(x)) for x in inst.p_eta], [Fraction(float(x)) for x in inst.q_eta],
                   inst.hypotheses.tolist())

    def risks(self, side: str) -> list[Fraction]:
        w, eta = (self.pw, self.pe) if side == "P" else (self.qw, self.qe)
        out = []
        for row in self.h:
            r = Fraction(0)
            for wi, ei, label in zip(w, eta, row):
                r += wi * (1 - ei if label == 1 else ei)
            out.append(r)
        return out

    def excess(self, side: str, subset=None) -> list[Fraction]:
        r = self.risks(side)
        idx = range(len(r)) if subset is None else subset
        best = min(r[j] for j in idx)
        return [x - best for x in r]

    def weak(self, eps) -> Fraction:
        ep, eq = self.excess("P"), self.excess("Q")
        return max(eq[j] for j in range(len(ep)) if ep[j] <= eps)

    def strong(self, eps1, eps2) -> Fraction:
        eq = self.excess("Q")
        q_set = [j for j in range(len(eq)) if eq[j] <= eps1]
        rel = self.excess("P", q_set)
        feas = [j for j in q_set if rel[j] <= eps2]
        return max((eq[j] for j in feas), default=Fraction(0))

    def pivot(self) -> Fraction:
        ep, eq = self.excess("P"), self.excess("Q")
        return min(eq[j] for j in range(len(ep)) if ep[j] == 0)

    def pivot_sharp(self) -> Fraction:
        ep, eq = self.excess("P"), self.excess("Q")
        return max(eq[j] for j in range(len(ep)) if ep[j] == 0)


def t1_rational() -> RationalInstance:
    """T1 transcribed with exact decimals."""
    return RationalInstance(["1/2", "1/2"], ["1/2", "1/2"], ["1", "9/10"], ["1", "1/10"],
                            [[1, 1], [1, -1], [-1, 1]])


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------


def _in_ellipse(pts, center, shape, radius):
    v = pts - center
    return np.einsum("ij,jk,ik->i", v, shape, v) <= radius


def grid_intersects(c1, s1, r1, c2, s2, r2, n: int = 801) -> bool:
    """Dense grid over the bounding box of the first ellipse (d = 2)."""
    half = np.sqrt(r1 * np.diag(np.linalg.inv(s1)))
    xs = np.linspace(c1[0] - half[0], c1[0] + half[0], n)
    ys = np.linspace(c1[1] - half[1], c1[1] + half[1], n)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    return bool(np.any(_in_ellipse(pts, c1, s1, r1) & _in_ellipse(pts, c2, s2, r2)))


def grid_verdict(c1, s1, r1, c2, s2, r2, margin: float = 0.03):
    """True/False when the verdict is stable under a relative radius change, else None."""
    lo = grid_intersects(c1, s1, r1 * (1 - margin), c2, s2, r2 * (1 - margin))
    hi = grid_intersects(c1, s1, r1 * (1 + margin), c2, s2, r2 * (1 + margin))
    return lo if lo == hi else None


def projected_gradient_ls(X, y, center, shape, radius, iters: int = 20000) -> float:
    """Accelerated projected gradient for min |Xw - y|^2/n over an ellipsoid.

    Works in coordinates w = center + R u with R = shape^{-1/2}, where the
    feasible set is the ball |u|^2 <= radius and projection is a rescale.
    """
    n = X.shape[0]
    ev, V = np.linalg.eigh(shape)
    R = V @ np.diag(ev ** -0.5) @ V.T
    A = X @ R
    b = y - X @ center
    L = 2 * np.linalg.norm(A, 2) ** 2 / n
    rad = math.sqrt(radius)

    def proj(u):
        nu = np.linalg.norm(u)
        return u if nu <= rad else u * (rad / nu)

    def f(u):
        r = A @ u - b
        return float(r @ r / n)

    u = np.zeros(A.shape[1])
    z, t = u.copy(), 1.0
    for _ in range(iters):
        g = 2 * A.T @ (A @ z - b) / n
        u_new = proj(z - g / L)
        t_new = (1 + math.sqrt(1 + 4 * t * t)) / 2
        z = u_new + (t - 1) / t_new * (u_new - u)
        u, t = u_new, t_new
    return f(u)


def boundary_max_quadratic(center, shape, radius, A, b, c, directions: int = 100_000) -> float:
    """max of w^T A w + 2 b^T w + c over the boundary of a 2-d ellipse, by dense angles."""
    th = np.linspace(0, 2 * np.pi, directions, endpoint=False)
    U = np.column_stack([np.cos(th), np.sin(th)]) * math.sqrt(radius)
    ev, V = np.linalg.eigh(shape)
    R = V @ np.diag(ev ** -0.5) @ V.T
    W = center + U @ R.T
    return float(np.max(np.einsum("ij,jk,ik->i", W, A, W) + 2 * W @ b + c))


def power_iteration_ratio(sigma_p, sigma_q, iters: int = 5000, seed: int = 0) -> float:
    """Top eigenvalue of Sigma_P^{-1} Sigma_Q by power iteration."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(sigma_p.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = np.linalg.solve(sigma_p, sigma_q @ v)
        lam = float(np.linalg.norm(w) / np.linalg.norm(v))
        v = w / np.linalg.norm(w)
    return lam


def trs_reference(A, g, r2, starts: int = 64, seed: int = 0) -> float:
    """Best value of x^T A x + 2 g^T x over |x|^2 <= r2 by multistart projected gradient."""
    rng = np.random.default_rng(seed)
    d = len(g)
    L = 2 * np.linalg.norm(A, 2) + 1e-12
    best = 0.0  # x = 0 is feasible
    rad = math.sqrt(r2)
    for _ in range(starts):
        x = rng.standard_normal(d)
        x *= rad * rng.random() ** (1 / d) / np.linalg.norm(x)
        for _ in range(3000):
            x = x - (2 * A @ x + 2 * g) / L
            nx = np.linalg.norm(x)
            if nx > rad:
                x *= rad / nx
        best = min(best, float(x @ A @ x + 2 * g @ x))
    return best


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------


def w1_linprog(p, q, cost) -> float:
    m = len(p)
    A_eq, b_eq = [], []
    for i in range(m):
        row = np.zeros((m, m))
        row[i, :] = 1
        A_eq.append(row.ravel())
        b_eq.append(p[i])
    for j in range(m):
        row = np.zeros((m, m))
        row[:, j] = 1
        A_eq.append(row.ravel())
        b_eq.append(q[j])
    res = linprog(np.asarray(cost).ravel(), A_eq=np.array(A_eq), b_eq=np.array(b_eq), bounds=(0, None),
                  method="highs")
    assert res.status == 0, res.message
    return float(res.fun)
