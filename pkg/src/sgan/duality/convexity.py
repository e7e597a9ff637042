"""Carathéodory reduction and Shapley-Folkman decomposition.

The Shapley-Folkman decomposition solves the feasibility problem

    sum_i sum_j lam_ij y_ij = y,   sum_j lam_ij = 1,   lam >= 0

with an exact rational simplex. A basic solution has at most m + I
positive weights; every set needs one, so at most m sets end up with a
genuinely convex (more than one point) combination.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

WEIGHT_TOL = 1e-12
RECON_TOL = 1e-9


class NotAConvexCombination(ValueError):
    pass


class NotInConvexHull(ValueError):
    pass


def caratheodory_reduce(points, weights, tol: float = 1e-9):
    """Rewrite a convex combination in R^d using at most d+1 of its points.

    Repeatedly finds an affine dependence c (sum c = 0, sum c_j p_j = 0)
    among the support and moves along it until a weight hits zero.
    Returns ``(points, weights)`` restricted to the final support.
    """
    P = np.asarray(points, dtype=np.float64)
    if P.ndim == 1:
        P = P[:, None]
    w = np.asarray(weights, dtype=np.float64).copy()
    if len(P) < 1 or len(w) != len(P):
        raise NotAConvexCombination("need at least one point and one weight per point")
    if (w < -tol).any() or abs(w.sum() - 1.0) > tol:
        raise NotAConvexCombination(f"weights must be non-negative and sum to 1 (sum={w.sum():.12g})")
    w = np.clip(w, 0.0, None)
    keep = w > WEIGHT_TOL
    P, w = P[keep], w[keep] / w[keep].sum()
    d = P.shape[1]
    while len(w) > d + 1:
        M = np.vstack([P.T, np.ones(len(w))])
        c = np.linalg.svd(M)[2][-1]
        if not (c > 0).any():
            c = -c
        pos = c > 0
        ratios = np.full(len(w), np.inf)
        ratios[pos] = w[pos] / c[pos]
        k = int(np.argmin(ratios))
        w = w - ratios[k] * c
        w[k] = 0.0
        w = np.clip(w, 0.0, None)
        keep = w > WEIGHT_TOL
        P, w = P[keep], w[keep] / w[keep].sum()
    return P, w


# -- exact simplex ----------------------------------------------------------------------


def _phase_one(A, rhs):
    """Basic feasible solution of A x = rhs, x >= 0, in exact arithmetic.

    Returns ``(x, infeasibility)`` where infeasibility is the optimal sum
    of artificial variables (0 when feasible).
    """
    m, n = len(A), len(A[0])
    rows = []
    for r in range(m):
        sign = -1 if rhs[r] < 0 else 1
        rows.append([sign * v for v in A[r]] + [Fraction(int(k == r)) for k in range(m)] + [sign * rhs[r]])
    basis = [n + r for r in range(m)]
    total = n + m
    # reduced costs of the phase-one objective (sum of artificials)
    cost = [Fraction(0)] * total + [Fraction(0)]
    for r in range(m):
        for k in range(total + 1):
            cost[k] -= rows[r][k]
    for r in range(m):
        cost[n + r] += 1
    while True:
        enter = next((k for k in range(total) if cost[k] < 0), None)  # Bland
        if enter is None:
            break
        best, leave = None, None
        for r in range(m):
            if rows[r][enter] > 0:
                ratio = rows[r][-1] / rows[r][enter]
                if best is None or ratio < best or (ratio == best and basis[r] < basis[leave]):
                    best, leave = ratio, r
        if leave is None:
            break  # unbounded direction cannot happen in phase one
        piv = rows[leave][enter]
        rows[leave] = [v / piv for v in rows[leave]]
        for r in range(m):
            if r != leave and rows[r][enter] != 0:
                f = rows[r][enter]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[leave])]
        f = cost[enter]
        cost = [a - f * b for a, b in zip(cost, rows[leave])]
        basis[leave] = enter
    x = [Fraction(0)] * total
    for r in range(m):
        x[basis[r]] = rows[r][-1]
    return x[:n], -cost[-1]


@dataclass
class SFInstance:
    sets: list                   # list of (k_i, m) arrays
    y: np.ndarray

    def __post_init__(self):
        self.sets = [np.asarray(s, dtype=np.float64).reshape(len(s), -1) for s in self.sets]
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if not self.sets or any(len(s) == 0 for s in self.sets):
            raise ValueError("every set must be non-empty")
        if any(s.shape[1] != len(self.y) for s in self.sets):
            raise ValueError("set points and target must share the dimension m")

    @property
    def m(self) -> int:
        return len(self.y)

    @classmethod
    def random(cls, rng, m: int, I: int, max_points: int = 4) -> "SFInstance":
        sets, y = [], np.zeros(m)
        for _ in range(I):
            k = 1 + int(rng.integers(max_points, 1)[0])
            pts = rng.uniform((k, m)) * 4.0 - 2.0
            lam = rng.uniform(k) + 1e-3
            lam /= lam.sum()
            sets.append(pts)
            y += lam @ pts
        return cls(sets, y)


@dataclass
class SFDecomposition:
    picks: dict = field(default_factory=dict)       # i -> point of Y_i
    convexified: dict = field(default_factory=dict)  # i -> (points, weights)
    reconstruction_error: float = 0.0

    @property
    def index_set(self) -> list:
        return sorted(self.convexified)

    def total(self) -> np.ndarray:
        parts = list(self.picks.values()) + [w @ P for P, w in self.convexified.values()]
        return np.sum(parts, axis=0)


def shapley_folkman_decompose(inst: SFInstance) -> SFDecomposition:
    """Split y into pure picks y_i in Y_i plus at most m convex combinations."""
    m, I = inst.m, len(inst.sets)
    cols = [(i, j) for i, s in enumerate(inst.sets) for j in range(len(s))]
    A = []
    for d in range(m):
        A.append([Fraction(float(inst.sets[i][j, d])) for i, j in cols])
    for i in range(I):
        A.append([Fraction(int(ci == i)) for ci, _ in cols])
    rhs = [Fraction(float(v)) for v in inst.y] + [Fraction(1)] * I
    x, infeas = _phase_one(A, rhs)

    lam = np.array([float(v) for v in x])
    dec = SFDecomposition()
    for i, s in enumerate(inst.sets):
        idx = [k for k, (ci, _) in enumerate(cols) if ci == i]
        w = lam[idx]
        if w.sum() <= 0:
            raise NotInConvexHull("target is not in the convex hull of the Minkowski sum")
        w = w / w.sum()
        support = w > WEIGHT_TOL
        if support.sum() == 1:
            dec.picks[i] = s[np.flatnonzero(support)[0]].copy()
        else:
            dec.convexified[i] = caratheodory_reduce(s[support], w[support])
    err = float(np.max(np.abs(dec.total() - inst.y)))
    dec.reconstruction_error = err
    if err > RECON_TOL or float(infeas) > RECON_TOL:
        raise NotInConvexHull(f"target is not in the convex hull of the Minkowski sum "
                              f"(residual {max(err, float(infeas)):.3g})")
    return dec
