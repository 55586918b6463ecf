"""Hand-written SVG line plots and the case-study table.

One plot per (window, load): ground truth, the Bayesian predictive mean,
the deterministic estimate and the shaded confidence band. No plotting
library is needed and the output is plain, diffable text.
"""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 320
PAD_L, PAD_R, PAD_T, PAD_B = 56, 16, 28, 36

STYLE = {
    "truth": ("#000000", ""),
    "bayes": ("#1f77b4", ""),
    "det": ("#d62728", "6,4"),
}


def _scale(lo, hi, a, b):
    span = hi - lo if hi > lo else 1.0
    return lambda v: a + (np.asarray(v, float) - lo) / span * (b - a)


def _points(xs, ys):
    return " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))


def window_svg(title: str, curves: dict, band=None, unit: str = "kW") -> str:
    """SVG for one window of one load.

    ``curves`` maps a name in ``STYLE`` to a length-``P`` array; ``band`` is an
    optional ``(lo, hi)`` pair drawn as a shaded polygon under the curves.
    """
    arrays = [np.asarray(v, float) for v in curves.values()]
    if band is not None:
        arrays += [np.asarray(band[0], float), np.asarray(band[1], float)]
    P = len(arrays[0])
    vmin = min(float(a.min()) for a in arrays)
    vmax = max(float(a.max()) for a in arrays)
    pad = 0.05 * (vmax - vmin or 1.0)
    vmin, vmax = vmin - pad, vmax + pad
    sx = _scale(0, max(P - 1, 1), PAD_L, W - PAD_R)
    sy = _scale(vmin, vmax, H - PAD_B, PAD_T)
    t = np.arange(P)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-family="sans-serif" '
           f'font-size="13">{escape(title)}</text>']
    # axes and a few ticks
    x0, x1, y0, y1 = PAD_L, W - PAD_R, H - PAD_B, PAD_T
    out.append(f'<path d="M{x0},{y1} V{y0} H{x1}" stroke="#444" fill="none"/>')
    for v in np.linspace(vmin + pad, vmax - pad, 5):
        y = float(sy(v))
        out.append(f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="#444"/>')
        out.append(f'<text x="{x0 - 6}" y="{y + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{v:.1f}</text>')
    for k in np.linspace(0, P - 1, 5):
        x = float(sx(k))
        out.append(f'<text x="{x:.2f}" y="{y0 + 14}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="10">{int(round(k))}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{H - 6}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="11">time step</text>')
    out.append(f'<text x="14" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="11" transform="rotate(-90 14 {(y0 + y1) / 2:.0f})">{escape(unit)}</text>')

    if band is not None:
        lo, hi = (np.asarray(b, float) for b in band)
        poly = _points(sx(t), sy(hi)) + " " + _points(sx(t[::-1]), sy(lo[::-1]))
        out.append(f'<polygon class="band" points="{poly}" fill="#1f77b4" fill-opacity="0.2" '
                   f'stroke="none"/>')
    for name, ys in curves.items():
        color, dash = STYLE.get(name, ("#555555", ""))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline class="{name}" points="{_points(sx(t), sy(ys))}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"{dash_attr}/>')

    # legend
    names = list(curves) + (["band"] if band is not None else [])
    for i, name in enumerate(names):
        x = x1 - 110
        y = PAD_T + 6 + 14 * i
        if name == "band":
            out.append(f'<rect x="{x}" y="{y - 6}" width="18" height="8" fill="#1f77b4" '
                       f'fill-opacity="0.2"/>')
        else:
            color, dash = STYLE.get(name, ("#555555", ""))
            dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
            out.append(f'<line x1="{x}" y1="{y - 2}" x2="{x + 18}" y2="{y - 2}" stroke="{color}" '
                       f'stroke-width="1.5"{dash_attr}/>')
        out.append(f'<text x="{x + 24}" y="{y + 2}" font-family="sans-serif" font-size="10">'
                   f'{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_windows(out_dir, truth, windows, det=None, bayes=None, names=None) -> list:
    """Write ``window_<j>_load_<c>.svg`` files; returns their paths.

    ``truth`` and ``det`` are ``C x P x M``; ``bayes`` is ``(mean, lo, hi)``
    with the same layout. Indices in file names are 1-based for loads and
    0-based for windows.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = np.asarray(truth, float)
    C = truth.shape[0]
    names = names or [f"load {c + 1}" for c in range(C)]
    paths = []
    for j in windows:
        for c in range(C):
            curves = {"truth": truth[c, :, j]}
            band = None
            if bayes is not None:
                curves["bayes"] = bayes[0][c, :, j]
                band = (bayes[1][c, :, j], bayes[2][c, :, j])
            if det is not None:
                curves["det"] = np.asarray(det)[c, :, j]
            p = out / f"window_{j}_load_{c + 1}.svg"
            p.write_text(window_svg(f"window {j}, {names[c]}", curves, band))
            paths.append(p)
    return paths


def case_table(rows, C: int) -> str:
    """Markdown table of seed-averaged uncertainty per case.

    ``rows`` are ``(seed, case, U_1..U_C, U_all, ter_bayes, ter_det)``.
    """
    by_case = {}
    for r in rows:
        by_case.setdefault(int(r[1]), []).append([float(v) for v in r[2:]])
    head = ["case"] + [f"U_{c + 1}" for c in range(C)] + ["U_all", "TER B-EDS", "TER D-EDS"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for case in sorted(by_case):
        m = np.mean(by_case[case], axis=0)
        cells = [str(case)] + [f"{v:.2f}" for v in m[:C + 1]] + [f"{v:.4f}" for v in m[C + 1:]]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
