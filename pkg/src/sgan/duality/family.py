"""Exact minimax quantities for the quadratic payoff family.

Each member gamma contributes phi(gamma; theta) = a_gamma . theta - |theta|^2/2 + b_gamma,
which is concave in theta. Everything the duality-gap bound talks about has
a closed form here:

* the inner sup over theta of an average of members is |a_bar|^2/2 + b_bar,
* h(u) = min_gamma |u + a_gamma|^2/2 + b_gamma,
* its convex closure is cl h(u) = min over convex weights lam of
  |u + A lam|^2/2 + b . lam,
* q* = sup_theta min_gamma phi(gamma; theta) = cl h(0).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import (GridFunction, conjugate_grid, infimal_convolution, lower_convex_envelope,
                   lower_hull, uniform_grid)

ENUMERATION_CAP = 10**6
GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class QuadraticFamily:
    a: np.ndarray  # (n, t)
    b: np.ndarray  # (n,)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        if a.ndim == 1:
            a = a[:, None]
        b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if len(a) < 1 or a.shape[0] != b.shape[0]:
            raise ValueError("family needs >= 1 member and one b per a")
        if a.shape[1] not in (1, 2):
            raise ValueError(f"discriminator dimension t must be 1 or 2, got {a.shape[1]}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("family entries must be finite")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def t(self) -> int:
        return self.a.shape[1]

    @property
    def size(self) -> int:
        return self.a.shape[0]

    @classmethod
    def pm1(cls) -> "QuadraticFamily":
        """The two-member family a in {-1, +1}, b = 0."""
        return cls(np.array([[-1.0], [1.0]]), np.zeros(2))

    @classmethod
    def random(cls, rng, max_size: int = 6, t: int = 1, lo: float = -2.0, hi: float = 2.0):
        n = 1 + int(rng.integers(max_size, 1)[0])
        a = lo + (hi - lo) * rng.uniform((n, t))
        b = lo + (hi - lo) * rng.uniform(n)
        return cls(a, b)

    def phi(self, theta) -> np.ndarray:
        """phi(gamma; theta) for every member; theta of shape (t,) or (k, t)."""
        th = np.asarray(theta, dtype=np.float64)
        th2 = th.reshape(-1, self.t)
        vals = th2 @ self.a.T - 0.5 * (th2 ** 2).sum(axis=1, keepdims=True) + self.b
        single = th.ndim <= 1 and th.size == self.t
        return vals[0] if single else vals

    def maximin_objective(self, theta) -> np.ndarray:
        """min_gamma phi(gamma; theta), vectorised over rows of theta."""
        th2 = np.asarray(theta, dtype=np.float64).reshape(-1, self.t)
        vals = th2 @ self.a.T - 0.5 * (th2 ** 2).sum(axis=1, keepdims=True) + self.b
        return vals.min(axis=1)

    def h(self, u) -> np.ndarray:
        """h(u) = min_gamma |u + a_gamma|^2/2 + b_gamma, vectorised over rows of u."""
        uu = np.asarray(u, dtype=np.float64).reshape(-1, self.t)
        d = uu[:, None, :] + self.a[None, :, :]
        return (0.5 * (d ** 2).sum(axis=2) + self.b).min(axis=1)


# -- maximisation of min_gamma (a.theta + b) - |theta|^2/2 -----------------------------


def _active_set_candidates(a: np.ndarray, b: np.ndarray):
    """Stationary points of every active set of size <= t+1.

    The maximiser of a concave, piecewise-quadratic function of this form is
    the maximiser of one smooth piece restricted to the affine set where its
    active pieces tie, so enumerating those sets finds it exactly.
    """
    n, t = a.shape
    cands = []
    for k in range(1, min(n, t + 1) + 1):
        for S in itertools.combinations(range(n), k):
            i0 = S[0]
            if k == 1:
                cands.append(a[i0].copy())
                continue
            M = a[list(S[1:])] - a[i0]
            c = b[i0] - b[list(S[1:])]
            pinv = np.linalg.pinv(M)
            th = a[i0] - pinv @ (M @ a[i0] - c)
            if np.allclose(M @ th, c, atol=1e-9 * (1 + np.abs(c).max())):
                cands.append(th)
    return np.array(cands)


def _golden_max(fn, lo: float, hi: float, tol: float = 1e-10) -> float:
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    while hi - lo > tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = fn(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = fn(x1)
    return 0.5 * (lo + hi)


def _golden_theta(a, b):
    """Golden-section (nested per coordinate for t = 2) maximiser."""
    t = a.shape[1]
    r = float(np.abs(a).max()) + 1.0

    def obj(th):
        th = np.asarray(th, dtype=np.float64)
        return float((a @ th + b).min() - 0.5 * th @ th)

    if t == 1:
        return np.array([_golden_max(lambda x: obj([x]), -r, r)])

    def outer(x):
        y = _golden_max(lambda yy: obj([x, yy]), -r, r, tol=1e-9)
        return obj([x, y])

    x = _golden_max(outer, -r, r, tol=1e-9)
    y = _golden_max(lambda yy: obj([x, yy]), -r, r, tol=1e-9)
    return np.array([x, y])


def max_min_concave(a: np.ndarray, b: np.ndarray, bracket: bool = True) -> tuple[float, np.ndarray]:
    """sup_theta min_i (a_i . theta + b_i) - |theta|^2/2 and a maximiser.

    The active-set candidates give the value to rounding error; with
    ``bracket`` a golden-section search adds an independent candidate.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cands = _active_set_candidates(a, b)
    if bracket:
        cands = np.vstack([cands, _golden_theta(a, b)[None, :]])
    vals = (cands @ a.T + b).min(axis=1) - 0.5 * (cands ** 2).sum(axis=1)
    k = int(np.argmax(vals))
    return float(vals[k]), cands[k]


def q_star(fam: QuadraticFamily) -> float:
    return max_min_concave(fam.a, fam.b)[0]


def closure_h_pointwise(fam: QuadraticFamily, u) -> np.ndarray:
    """cl h(u) via cl h(u) = sup_v min_gamma (u + a_gamma).v + b_gamma - |v|^2/2."""
    uu = np.asarray(u, dtype=np.float64).reshape(-1, fam.t)
    return np.array([max_min_concave(fam.a + row, fam.b, bracket=False)[0] for row in uu])


# -- closed forms for t = 1 -------------------------------------------------------------


def _hull_of_members(fam: QuadraticFamily):
    order = np.lexsort((fam.b, fam.a[:, 0]))
    x, y = fam.a[order, 0], fam.b[order]
    # keep the lowest b for repeated a
    keep = np.ones(len(x), dtype=bool)
    keep[1:] = x[1:] != x[:-1]
    x, y = x[keep], y[keep]
    idx = lower_hull(x, y)
    return x[idx], y[idx]


def closure_h(fam: QuadraticFamily, u) -> np.ndarray:
    """Exact cl h on R for t = 1.

    cl h(u) = min_alpha (u + alpha)^2/2 + L(alpha), where L is the lower
    convex hull of the points (a_gamma, b_gamma); each hull segment is
    minimised in closed form.
    """
    if fam.t != 1:
        return closure_h_pointwise(fam, u)
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    xs, ys = _hull_of_members(fam)
    best = 0.5 * (u[:, None] + xs[None, :]) ** 2 + ys[None, :]
    out = best.min(axis=1)
    for k in range(len(xs) - 1):
        s = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        al = np.clip(-u - s, xs[k], xs[k + 1])
        out = np.minimum(out, 0.5 * (u + al) ** 2 + ys[k] + s * (al - xs[k]))
    return out


def delta_exact(fam: QuadraticFamily) -> tuple[float, float]:
    """(sup_u h(u) - cl h(u), argmax) for t = 1.

    Between consecutive breakpoints of h and cl h the difference is linear
    or convex, so the sup sits at a breakpoint.
    """
    if fam.t != 1:
        raise ValueError("exact delta is only available for t = 1; use delta_estimate")
    a, b = fam.a[:, 0], fam.b
    cands = [0.0]
    for i, j in itertools.combinations(range(len(a)), 2):
        if a[i] != a[j]:
            cands.append(-(0.5 * (a[i] ** 2 - a[j] ** 2) + b[i] - b[j]) / (a[i] - a[j]))
    xs, ys = _hull_of_members(fam)
    for k in range(len(xs) - 1):
        s = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        cands += [-xs[k] - s, -xs[k + 1] - s]
    u = np.array(cands)
    diff = fam.h(u) - closure_h(fam, u)
    k = int(np.argmax(diff))
    return max(0.0, float(diff[k])), float(u[k])


def delta_estimate(fam: QuadraticFamily, n: int = 81) -> float:
    """Grid-and-refine estimate of sup_u h - cl h for t = 2 (a lower estimate)."""
    from scipy.optimize import minimize

    r = float(np.abs(fam.a).max()) + 1.0
    g = np.linspace(-r, r, n)
    U = np.array(np.meshgrid(g, g)).reshape(2, -1).T
    gap = fam.h(U) - closure_h_pointwise(fam, U)
    best = float(gap.max())
    for k in np.argsort(-gap)[:5]:
        res = minimize(lambda x: -(fam.h(x)[0] - closure_h_pointwise(fam, x)[0]), U[k],
                       method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-13})
        best = max(best, -float(res.fun))
    return max(0.0, best)


def delta_worst(fam: QuadraticFamily) -> float:
    return delta_exact(fam)[0] if fam.t == 1 else delta_estimate(fam)


# -- grid versions -----------------------------------------------------------------------


def family_h(fam: QuadraticFamily, u=None) -> GridFunction:
    """h sampled on a 1-D grid (default [-8, 8], 1601 points)."""
    if fam.t != 1:
        raise ValueError("grid functions need t = 1")
    u = uniform_grid() if u is None else np.asarray(u, dtype=np.float64)
    return GridFunction(u, fam.h(u))


def delta_grid(f: GridFunction) -> tuple[float, float]:
    """(max_j h_j - env h_j, argmax) over the grid."""
    env = lower_convex_envelope(f)
    d = f.h - env.h
    k = int(np.argmax(d))
    return float(d[k]), float(f.u[k])


# -- w*, q* and the gap bound -----------------------------------------------------------


@dataclass
class DualityReport:
    I: int
    w_star: float
    q_star: float
    gap: float
    delta_worst: float
    bound: float
    holds: bool
    t: int = 1

    def row(self) -> dict:
        return asdict(self)


def w_star(fam: QuadraticFamily, I: int, cap: int = ENUMERATION_CAP) -> tuple[float, tuple]:
    """min over multisets of I members of |a_bar|^2/2 + b_bar, and a minimiser."""
    if I < 1:
        raise ValueError("I must be >= 1")
    n = fam.size
    count = math.comb(n + I - 1, I)
    if count > cap:
        raise ValueError(f"multiset enumeration needs {count} > {cap} cases; lower I or the family size")
    best, arg = math.inf, None
    block = []

    def flush():
        nonlocal best, arg
        idx = np.array(block)
        a_bar = fam.a[idx].mean(axis=1)
        b_bar = fam.b[idx].mean(axis=1)
        vals = 0.5 * (a_bar ** 2).sum(axis=1) + b_bar
        k = int(np.argmin(vals))
        if vals[k] < best:
            best, arg = float(vals[k]), tuple(int(i) for i in idx[k])
        block.clear()

    for combo in itertools.combinations_with_replacement(range(n), I):
        block.append(combo)
        if len(block) >= 65536:
            flush()
    if block:
        flush()
    return best, arg


def exact_minimax(fam: QuadraticFamily, I: int, delta: float | None = None) -> DualityReport:
    """w*, q* and the bound gap <= (t+1) delta_worst / I (theta-side terms vanish)."""
    w, _ = w_star(fam, I)
    q = q_star(fam)
    d = delta_worst(fam) if delta is None else delta
    gap = w - q
    bound = (fam.t + 1) * d / I
    return DualityReport(I, w, q, gap, d, bound, bool(gap <= bound + 1e-9), fam.t)


def sweep(fam: QuadraticFamily, Is) -> list[DualityReport]:
    d = delta_worst(fam)
    return [exact_minimax(fam, I, d) for I in Is]


# -- strong duality on the grid -----------------------------------------------------------


def p_function(h: GridFunction, I: int) -> GridFunction:
    """p(u) = inf over u_1 + ... + u_I = -u of sum h(u_i), on the I-fold sum grid."""
    acc = h
    for _ in range(I - 1):
        acc = infimal_convolution(acc, h)
    # p(u) = acc(-u): reverse the grid
    return GridFunction(-acc.u[::-1], acc.h[::-1])


@dataclass
class StrongDualityReport:
    I: int
    p0: float
    cl_p0: float
    sup_q: float
    delta_grid: float
    spacing: float
    duality_error: float     # |cl p(0) - sup_mu q(mu)|
    closure_gap: float       # p(0) - cl p(0)
    closure_bound: float     # (t+1) delta
    ok: bool


def strong_duality_check(fam: QuadraticFamily, I: int, u=None, dual=None) -> StrongDualityReport:
    """Check sup_mu q(mu) = cl p(0) and 0 <= p(0) - cl p(0) <= (t+1) delta on the grid.

    q(mu) = inf_u p(u) + mu u = -p*(-mu), so sup_mu q(mu) is the maximum of
    -p* over the dual grid.
    """
    h = family_h(fam, u)
    p = p_function(h, I)
    zero = int(np.argmin(np.abs(p.u)))
    if abs(p.u[zero]) > 1e-9 * h.spacing:
        raise ValueError("grid must contain 0")
    p0 = float(p.h[zero])
    cl_p0 = float(lower_convex_envelope(p).h[zero])
    if dual is None:
        r = float(np.abs(fam.a).max()) + 10.0
        dual = uniform_grid(-r, r, int(round(2 * r / h.spacing)) + 1)
    pstar = conjugate_grid(p, np.sort(-np.asarray(dual, dtype=np.float64)))
    sup_q = float(np.max(-pstar.h))
    d, _ = delta_grid(h)
    spacing = h.spacing
    dual_err = abs(cl_p0 - sup_q)
    closure_gap = p0 - cl_p0
    bound = (fam.t + 1) * d
    ok = dual_err < 10 * spacing and -1e-9 <= closure_gap <= bound + 1e-9
    return StrongDualityReport(I, p0, cl_p0, sup_q, d, spacing, dual_err, closure_gap, bound, ok)
