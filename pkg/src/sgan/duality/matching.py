"""GAN value against the optimal discriminator for discrete distributions."""

from __future__ import annotations

import math

import numpy as np

NORM_TOL = 1e-9
MATCH_TV = 1e-9
EQUILIBRIUM = 2 * math.log(0.5)


def _xlogy(x, y):
    out = np.zeros_like(x)
    nz = x > 0
    out[nz] = x[nz] * np.log(y[nz])
    return out


def _check(p, name):
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if (p < 0).any() or abs(p.sum() - 1.0) > NORM_TOL:
        raise ValueError(f"{name} must be a probability vector (non-negative, sums to 1); sum={p.sum():.12g}")
    return p


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def js_divergence(p, q) -> float:
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)
    return 0.5 * float(_xlogy(p, np.where(m > 0, p / np.where(m > 0, m, 1), 1)).sum()
                       + _xlogy(q, np.where(m > 0, q / np.where(m > 0, m, 1), 1)).sum())


def discrete_gan_value(p, q) -> tuple[float, bool]:
    """sum_x p log D*(x) + q log(1 - D*(x)) with D* = p / (p + q).

    This equals 2 log(1/2) + 2 JS(P||Q). ``matched`` reports whether the
    distributions coincide (total variation <= 1e-9), the case in which the
    value reaches its minimum 2 log(1/2).
    """
    p, q = _check(p, "P"), _check(q, "Q")
    if p.shape != q.shape:
        raise ValueError(f"support mismatch: {p.shape[0]} vs {q.shape[0]} atoms")
    s = p + q
    safe = np.where(s > 0, s, 1.0)
    d = p / safe
    value = float(_xlogy(p, d).sum() + _xlogy(q, 1.0 - d).sum())
    return value, total_variation(p, q) <= MATCH_TV
