"""Deterministic SVG band diagram: bulk bands along a phase loop plus the interface branch."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .bands import BandTable, GapReport

PHASE_PATH = ((0.0, 0.0), (math.pi, 0.0), (math.pi, math.pi), (0.0, math.pi), (0.0, 0.0))
PATH_LABELS = ("(0,0)", "(π,0)", "(π,π)", "(0,π)", "(0,0)")

WIDTH, HEIGHT = 760, 480
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 20, 40
PANEL_GAP = 40
ZETA_FRACTION = 0.3  # share of the plot width used by the zeta panel

BAND_FILLS = ("#9ecae1", "#a1d99b", "#fdae6b", "#bcbddc")
CURVE_COLOURS = ("#3182bd", "#31a354", "#e6550d", "#756bb1")


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def path_samples(table: BandTable, path: Sequence[tuple[float, float]] = PHASE_PATH,
                 tol: float = 1e-9):
    """Points of ``table`` on the polygonal ``path`` as ``(arclength, values)``, in path order."""
    s_out, v_out = [], []
    offset = 0.0
    for a, b in zip(path, path[1:]):
        a, b = np.asarray(a), np.asarray(b)
        seg = b - a
        length = float(np.hypot(*seg))
        rel = table.phases - a
        t = rel @ seg / length ** 2
        off = np.abs(rel[:, 0] * seg[1] - rel[:, 1] * seg[0]) / length
        on = (off < tol) & (t > -tol) & (t < 1 + tol)
        idx = np.nonzero(on)[0]
        idx = idx[np.argsort(t[idx], kind="stable")]
        for i in idx:
            s_out.append(offset + float(t[i]) * length)
            v_out.append(table.values[i])
        offset += length
    return np.array(s_out), np.array(v_out), offset


def emit_band_diagram(tables: Sequence[BandTable], gaps: Optional[GapReport] = None,
                      interface=None, levels: Sequence[float] = (),
                      interface_level: Optional[float] = None,
                      y_max: Optional[float] = None) -> str:
    """SVG text; identical inputs give identical bytes.

    ``interface`` is an :class:`~contrastbands.waveguide.InterfaceBand` or ``None``;
    ``levels`` are drawn as grey dashed lines and ``interface_level`` as a red one.
    """
    if not tables:
        raise ValueError("need at least one band table")
    has_zeta = interface is not None and np.any(np.isfinite(interface.values))
    plot_w = WIDTH - LEFT - RIGHT
    path_w = plot_w * (1 - ZETA_FRACTION) - PANEL_GAP / 2 if has_zeta else plot_w
    zeta_x0 = LEFT + path_w + PANEL_GAP
    zeta_w = WIDTH - RIGHT - zeta_x0
    plot_h = HEIGHT - TOP - BOTTOM

    if y_max is None:
        y_max = max(float(t.values.max()) for t in tables)
        y_max = max([y_max] + [v for v in levels if v <= 1.2 * y_max])
        y_max *= 1.05
    y_min = 0.0

    def ypx(v):
        return TOP + plot_h * (1 - (v - y_min) / (y_max - y_min))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>']

    panels = [(LEFT, path_w)] + ([(zeta_x0, zeta_w)] if has_zeta else [])
    for k, table in enumerate(tables):
        fill = BAND_FILLS[k % len(BAND_FILLS)]
        for lo, hi in table.intervals:
            lo, hi = max(float(lo), y_min), min(float(hi), y_max)
            if hi <= lo:
                continue
            for x0, w in panels:
                out.append(f'<rect x="{_fmt(x0)}" y="{_fmt(ypx(hi))}" width="{_fmt(w)}" '
                           f'height="{_fmt(ypx(lo) - ypx(hi))}" fill="{fill}" fill-opacity="0.45"/>')

    if gaps is not None:
        for a, b in gaps.gaps:
            if a < y_max:
                out.append(f'<!-- gap {a!r} {b!r} -->')

    for k, table in enumerate(tables):
        s, vals, total = path_samples(table)
        if len(s) < 2:
            continue
        colour = CURVE_COLOURS[k % len(CURVE_COLOURS)]
        for band in range(vals.shape[1]):
            pts = " ".join(f"{_fmt(LEFT + path_w * si / total)},{_fmt(ypx(min(v, y_max)))}"
                           for si, v in zip(s, vals[:, band]))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1"/>')

    for v in levels:
        if y_min <= v <= y_max:
            for x0, w in panels:
                out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(ypx(v))}" x2="{_fmt(x0 + w)}" '
                           f'y2="{_fmt(ypx(v))}" stroke="#555555" stroke-dasharray="4,3"/>')
    if interface_level is not None and y_min <= interface_level <= y_max:
        for x0, w in panels:
            out.append(f'<line x1="{_fmt(x0)}" y1="{_fmt(ypx(interface_level))}" '
                       f'x2="{_fmt(x0 + w)}" y2="{_fmt(ypx(interface_level))}" '
                       f'stroke="#cb181d" stroke-dasharray="6,3"/>')

    if has_zeta:
        z = np.asarray(interface.zetas, dtype=float)
        v = np.asarray(interface.values, dtype=float)
        ok = np.isfinite(v)
        pts = " ".join(f"{_fmt(zeta_x0 + zeta_w * zi / math.pi)},{_fmt(ypx(vi))}"
                       for zi, vi in zip(z[ok], v[ok]))
        out.append(f'<polyline points="{pts}" fill="none" stroke="#cb181d" stroke-width="2"/>')
        for zi, vi in zip(z[ok], v[ok]):
            out.append(f'<circle cx="{_fmt(zeta_x0 + zeta_w * zi / math.pi)}" cy="{_fmt(ypx(vi))}" '
                       f'r="2.5" fill="#cb181d"/>')

    # axes and labels
    for x0, w in panels:
        out.append(f'<rect x="{_fmt(x0)}" y="{TOP}" width="{_fmt(w)}" height="{plot_h}" '
                   f'fill="none" stroke="black"/>')
    _, _, total = path_samples(tables[0])
    offset = 0.0
    for (a, b), label in zip(zip(PHASE_PATH, PHASE_PATH[1:]), PATH_LABELS):
        x = LEFT + path_w * offset / total
        out.append(f'<line x1="{_fmt(x)}" y1="{TOP}" x2="{_fmt(x)}" y2="{TOP + plot_h}" '
                   f'stroke="#bbbbbb"/>')
        out.append(f'<text x="{_fmt(x)}" y="{HEIGHT - BOTTOM + 16}" text-anchor="middle">{label}</text>')
        offset += math.hypot(b[0] - a[0], b[1] - a[1])
    out.append(f'<text x="{_fmt(LEFT + path_w)}" y="{HEIGHT - BOTTOM + 16}" '
               f'text-anchor="middle">{PATH_LABELS[-1]}</text>')
    if has_zeta:
        for zi, label in ((0.0, "0"), (math.pi, "π")):
            out.append(f'<text x="{_fmt(zeta_x0 + zeta_w * zi / math.pi)}" '
                       f'y="{HEIGHT - BOTTOM + 16}" text-anchor="middle">{label}</text>')
        out.append(f'<text x="{_fmt(zeta_x0 + zeta_w / 2)}" y="{HEIGHT - 6}" '
                   f'text-anchor="middle">ζ</text>')
    out.append(f'<text x="{_fmt(LEFT + path_w / 2)}" y="{HEIGHT - 6}" '
               f'text-anchor="middle">phase path</text>')
    step = _tick_step(y_max - y_min)
    t = 0.0
    while t <= y_max + 1e-12:
        out.append(f'<text x="{LEFT - 6}" y="{_fmt(ypx(t) + 4)}" text-anchor="end">{t:g}</text>')
        t = round(t + step, 10)
    out.append(f'<text x="14" y="{_fmt(TOP + plot_h / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 14 {_fmt(TOP + plot_h / 2)})">Λ</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _tick_step(span: float) -> float:
    raw = span / 6
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if m * mag >= raw:
            return m * mag
    return 10 * mag
