"""Deterministic SVG scatter plots of generated samples."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .synthdata import MixtureSpec

# Tableau 10
PALETTE = ("#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
           "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac")
VIEW = 3.0
SIZE = 480


def _px(v):
    return (np.asarray(v) + VIEW) / (2 * VIEW) * SIZE


def scatter_svg(samples, labels, spec: MixtureSpec | None = None, radius: float = 1.5) -> str:
    """SVG text for a 2-D scatter coloured by generator label.

    Points outside the fixed viewport [-3, 3]^2 are clipped by the frame.
    Labels beyond the palette size reuse colours cyclically.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        x = x.reshape(0, 2)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ValueError(f"scatter plots need (n, 2) samples, got shape {x.shape}")
    lab = np.zeros(len(x), dtype=np.int64) if labels is None else np.asarray(labels, dtype=np.int64)
    if lab.shape != (len(x),):
        raise ValueError("need exactly one label per sample")

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
           f'viewBox="0 0 {SIZE} {SIZE}">',
           f'<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white" stroke="black"/>',
           f'<line x1="0" y1="{SIZE / 2:g}" x2="{SIZE}" y2="{SIZE / 2:g}" stroke="#cccccc"/>',
           f'<line x1="{SIZE / 2:g}" y1="0" x2="{SIZE / 2:g}" y2="{SIZE}" stroke="#cccccc"/>']
    px, py = _px(x[:, 0]), SIZE - _px(x[:, 1])
    for g in np.unique(lab):
        color = PALETTE[int(g) % len(PALETTE)]
        out.append(f'<g fill="{color}" class="gen{int(g)}">')
        for i in np.flatnonzero(lab == g):
            out.append(f'<circle cx="{px[i]:.2f}" cy="{py[i]:.2f}" r="{radius:g}"/>')
        out.append("</g>")
    if spec is not None:
        out.append('<g stroke="black" stroke-width="1.5" class="centers">')
        for cx, cy in zip(_px(spec.centers[:, 0]), SIZE - _px(spec.centers[:, 1])):
            out.append(f'<line x1="{cx - 5:.2f}" y1="{cy - 5:.2f}" x2="{cx + 5:.2f}" y2="{cy + 5:.2f}"/>')
            out.append(f'<line x1="{cx - 5:.2f}" y1="{cy + 5:.2f}" x2="{cx + 5:.2f}" y2="{cy - 5:.2f}"/>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_scatter_svg(samples, labels, spec: MixtureSpec | None, path) -> Path:
    p = Path(path)
    p.write_text(scatter_svg(samples, labels, spec), newline="\n")
    return p
