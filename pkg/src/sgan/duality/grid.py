"""One-dimensional grid functions: conjugates, convex envelopes, infimal convolution."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_LO, DEFAULT_HI, DEFAULT_POINTS = -8.0, 8.0, 1601


@dataclass(frozen=True)
class GridFunction:
    u: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        if u.ndim != 1 or u.shape != h.shape or len(u) == 0:
            raise ValueError("grid and values must be non-empty 1-D arrays of equal length")
        if len(u) > 1 and not np.all(np.diff(u) > 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(h)):
            raise ValueError("grid function values must be finite")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "h", h)

    @property
    def spacing(self) -> float:
        return float(np.max(np.diff(self.u))) if len(self.u) > 1 else 0.0

    def at(self, x: float) -> float:
        """Value at a grid point (nearest node)."""
        return float(self.h[int(np.argmin(np.abs(self.u - x)))])

    def __add__(self, other: "GridFunction") -> "GridFunction":
        if not np.array_equal(self.u, other.u):
            raise ValueError("pointwise sum needs a shared grid")
        return GridFunction(self.u, self.h + other.h)


def uniform_grid(lo: float = DEFAULT_LO, hi: float = DEFAULT_HI, n: int = DEFAULT_POINTS) -> np.ndarray:
    """Uniform grid. When lo is a whole number of steps the nodes are
    ``k*step`` for integer k, so 0 is represented exactly."""
    step = (hi - lo) / (n - 1)
    k0 = round(lo / step)
    if abs(k0 * step - lo) <= 1e-9 * step:
        return step * np.arange(k0, k0 + n)
    return lo + step * np.arange(n)


def index_grid(step: float, k_lo: int, k_hi: int) -> np.ndarray:
    """Grid ``k*step`` for integer k in [k_lo, k_hi]; exact at k = 0."""
    return step * np.arange(k_lo, k_hi + 1)


def conjugate_grid(f: GridFunction, dual) -> GridFunction:
    """f*(v) = max_j (u_j v - h_j), exact over the primal grid."""
    v = np.asarray(dual, dtype=np.float64)
    out = np.empty_like(v)
    chunk = max(1, 4_000_000 // len(f.u))
    for s in range(0, len(v), chunk):
        vv = v[s:s + chunk]
        out[s:s + chunk] = np.max(vv[:, None] * f.u[None, :] - f.h[None, :], axis=1)
    return GridFunction(v, out)


def lower_hull(x, y) -> np.ndarray:
    """Indices of the lower convex hull of points sorted by x (monotone chain)."""
    hull: list[int] = []
    for k in range(len(x)):
        while len(hull) >= 2:
            i, j = hull[-2], hull[-1]
            # drop j unless it lies strictly below the chord i -> k
            if (y[j] - y[i]) * (x[k] - x[i]) >= (y[k] - y[i]) * (x[j] - x[i]):
                hull.pop()
            else:
                break
        hull.append(k)
    return np.array(hull, dtype=np.int64)


def lower_convex_envelope(f: GridFunction) -> GridFunction:
    """Greatest convex function below f, evaluated on f's grid."""
    idx = lower_hull(f.u, f.h)
    env = np.interp(f.u, f.u[idx], f.h[idx])
    # hull vertices keep their exact values
    env[idx] = f.h[idx]
    return GridFunction(f.u, np.minimum(env, f.h))


def infimal_convolution(f: GridFunction, g: GridFunction) -> GridFunction:
    """(f ⊕ g)(w) = min_{u + v = w} f(u) + g(v) over both grids.

    Both grids must be uniform with a common step; the result lives on the
    sum grid, whose nodes are integer multiples of the step offset by
    ``f.u[0] + g.u[0]``.
    """
    step = _common_step(f, g)
    n = len(f.u) + len(g.u) - 1
    out = np.full(n, np.inf)
    # loop over the shorter operand
    a, b = (f, g) if len(f.u) <= len(g.u) else (g, f)
    for i, hv in enumerate(a.h):
        seg = out[i:i + len(b.h)]
        np.minimum(seg, hv + b.h, out=seg)
    k0 = round(f.u[0] / step) + round(g.u[0] / step)
    if abs(k0 * step - (f.u[0] + g.u[0])) <= 1e-9 * step:
        w = step * np.arange(k0, k0 + n)
    else:
        w = (f.u[0] + g.u[0]) + step * np.arange(n)
    return GridFunction(w, out)


def _common_step(f: GridFunction, g: GridFunction) -> float:
    steps = []
    for fn in (f, g):
        if len(fn.u) > 1:
            d = np.diff(fn.u)
            if np.ptp(d) > 1e-9 * abs(d[0]):
                raise ValueError("infimal convolution needs uniform grids")
            steps.append(d.mean())
    if len(steps) == 2 and abs(steps[0] - steps[1]) > 1e-9 * steps[0]:
        raise ValueError("infimal convolution needs grids with a common step")
    return steps[0] if steps else 1.0


def restrict(f: GridFunction, lo: float, hi: float) -> GridFunction:
    keep = (f.u >= lo - 1e-12) & (f.u <= hi + 1e-12)
    return GridFunction(f.u[keep], f.h[keep])


def infconv_check(fs, dual, window: tuple[float, float] | None = None) -> dict:
    """Compare (f_1+...+f_I)* with cl(f_1* ⊕ ... ⊕ f_I*) on the dual grid.

    ``dual`` must be uniform. The infimal convolution of the conjugates is
    taken over the full dual grid of each summand; the comparison runs over
    ``window`` (default: the whole dual grid), which should stay clear of
    the grid edges where the truncated convolution loses splits.
    """
    fs = list(fs)
    if not fs:
        raise ValueError("need at least one function")
    total = fs[0]
    for f in fs[1:]:
        total = total + f
    dual = np.asarray(dual, dtype=np.float64)
    left = conjugate_grid(total, dual)
    conj = [conjugate_grid(f, dual) for f in fs]
    acc = conj[0]
    for c in conj[1:]:
        acc = infimal_convolution(acc, c)
    right = lower_convex_envelope(acc)
    lo, hi = window if window is not None else (dual[0], dual[-1])
    mask = (dual >= lo - 1e-12) & (dual <= hi + 1e-12)
    r = np.interp(dual[mask], right.u, right.h)
    dev = np.abs(left.h[mask] - r)
    return {"max_deviation": float(dev.max()), "spacing": float(np.max(np.diff(dual))),
            "left": left, "right": right}
