"""Minimal SVG line plots for run inspection (no plotting dependency).

Each plot is a single polyline over a time axis with optional vertical
event markers; values spanning many orders of magnitude are drawn on a
log10 axis.
"""

import numpy as np

_W, _H = 960, 300
_ML, _MR, _MT, _MB = 60, 15, 25, 35


def _map(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(vals) - lo) / span * (out_hi - out_lo)


def polyline_svg(t, y, title, log_y=False, markers=(), floor=1e-300):
    """Render one curve to an SVG document string."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if log_y:
        y = np.log10(np.maximum(np.abs(y), floor))
        title = f"log10 {title}"
    finite = np.isfinite(y)
    ylo = float(y[finite].min()) if finite.any() else 0.0
    yhi = float(y[finite].max()) if finite.any() else 1.0
    if yhi <= ylo:
        yhi = ylo + 1.0
    xs = _map(t, t[0], t[-1], _ML, _W - _MR)
    ys = _map(y, ylo, yhi, _H - _MB, _MT)
    pts = " ".join(
        f"{x:.2f},{v:.2f}" for x, v, ok in zip(xs, ys, finite) if ok
    )
    marks = []
    for mt in markers:
        mx = float(_map([mt], t[0], t[-1], _ML, _W - _MR)[0])
        marks.append(
            f'<line x1="{mx:.2f}" y1="{_MT}" x2="{mx:.2f}" y2="{_H - _MB}" '
            'stroke="#cc3333" stroke-dasharray="4 3" stroke-width="1"/>'
        )
    labels = (
        f'<text x="{_ML}" y="16" font-size="13" font-family="sans-serif">{title}</text>'
        f'<text x="{_ML - 5}" y="{_MT + 5}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{yhi:.3g}</text>'
        f'<text x="{_ML - 5}" y="{_H - _MB}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{ylo:.3g}</text>'
        f'<text x="{_ML}" y="{_H - 10}" font-size="11" font-family="sans-serif">{t[0]:g}s</text>'
        f'<text x="{_W - _MR}" y="{_H - 10}" font-size="11" text-anchor="end" '
        f'font-family="sans-serif">{t[-1]:g}s</text>'
    )
    frame = (
        f'<rect x="{_ML}" y="{_MT}" width="{_W - _ML - _MR}" '
        f'height="{_H - _MT - _MB}" fill="none" stroke="#888"/>'
    )
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}"><rect width="100%" height="100%" fill="white"/>'
        f"{frame}{labels}"
        f'<polyline points="{pts}" fill="none" stroke="#1f5fbf" stroke-width="1.2"/>'
        f"{''.join(marks)}</svg>\n"
    )


def write_run_plots(result, out_dir, decimate=1):
    """Tracking error, parameter error, and scalar regressor plots."""
    import os

    tab = result.telemetry
    sel = slice(0, tab.rows, max(int(decimate), 1))
    t = tab.t[sel]
    marks = [ev.t_reset for ev in result.events]
    curves = [
        ("eref_norm.svg", tab.column("eref_norm")[sel], "|e_ref|", False),
        ("thetatilde_norm.svg", tab.column("ttil_norm")[sel], "|vec(theta_err)|", False),
        ("omega.svg", tab.column("omega")[sel], "Omega", True),
    ]
    paths = []
    os.makedirs(out_dir, exist_ok=True)
    for fname, y, title, logy in curves:
        path = os.path.join(out_dir, fname)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(polyline_svg(t, y, title, log_y=logy, markers=marks))
        paths.append(path)
    return paths
