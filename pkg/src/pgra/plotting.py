"""Dependency-free SVG output: representation scatter and learning curves."""

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

_W, _H, _PAD = 520, 520, 60


def pca_2d(X):
    """Project the columns of X (d x n) onto their top two principal axes."""
    Xc = X - X.mean(axis=1, keepdims=True)
    U, _, _ = np.linalg.svd(Xc, full_matrices=False)
    return U[:, :2].T @ Xc


def displacement_colors(disp):
    """RGB in [0,1]: min-max normalised dx, dy and a constant 0.5 blue."""
    disp = np.asarray(disp, dtype=np.float64)
    out = np.full((disp.shape[0], 3), 0.5)
    for k in range(2):
        lo, hi = disp[:, k].min(), disp[:, k].max()
        if hi > lo:
            out[:, k] = (disp[:, k] - lo) / (hi - lo)
    return out


def _hex(rgb):
    r, g, b = (int(round(255 * float(np.clip(c, 0.0, 1.0)))) for c in rgb)
    return f"#{r:02x}{g:02x}{b:02x}"


def _axes(lo, hi):
    """Map data [lo, hi] on both axes into the plot square."""
    span = np.where(hi > lo, hi - lo, 1.0)

    def tx(x):
        return _PAD + (x - lo[0]) / span[0] * (_W - 2 * _PAD)

    def ty(y):
        return _H - _PAD - (y - lo[1]) / span[1] * (_H - 2 * _PAD)
    return tx, ty


def _frame(lo, hi, tx, ty, xlabel, ylabel, title):
    parts = [
        f'<rect x="{_PAD}" y="{_PAD}" width="{_W - 2 * _PAD}" height="{_H - 2 * _PAD}" '
        'fill="none" stroke="#333"/>',
        f'<text x="{_W / 2}" y="{_PAD / 2}" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{_W / 2}" y="{_H - 15}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="18" y="{_H / 2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {_H / 2})">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(lo[0], hi[0], 5):
        parts.append(f'<text x="{tx(v):.1f}" y="{_H - _PAD + 16}" text-anchor="middle" '
                     f'font-size="10">{v:.2g}</text>')
    for v in np.linspace(lo[1], hi[1], 5):
        parts.append(f'<text x="{_PAD - 6}" y="{ty(v) + 3:.1f}" text-anchor="end" '
                     f'font-size="10">{v:.2g}</text>')
    return parts


def _write(path, body):
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'viewBox="0 0 {_W} {_H}">\n' + "\n".join(body) + "\n</svg>\n")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg)
    return path


def embedding_scatter_svg(reps, displacements, path, project=None, title=None):
    """One circle per action at its 2-D representation, coloured by displacement.

    ``reps`` is (d_e, |A|). With d_e != 2 pass ``project="pca"``.
    """
    reps = np.asarray(reps, dtype=np.float64)
    if reps.shape[0] != 2:
        if project != "pca":
            raise ValueError(f"scatter needs 2-D representations, got d_e={reps.shape[0]}; "
                             "pass project='pca' (CLI: --project pca) to plot a 2-D projection")
        reps = pca_2d(reps)
    colors = displacement_colors(displacements)
    lo = np.minimum(reps.min(axis=1), -1.0) if project is None else reps.min(axis=1)
    hi = np.maximum(reps.max(axis=1), 1.0) if project is None else reps.max(axis=1)
    tx, ty = _axes(lo, hi)
    n = reps.shape[1]
    title = title or f"Action representations ({n} actions)"
    body = _frame(lo, hi, tx, ty, "dimension 1", "dimension 2", title)
    r = 4.0 if n <= 256 else 2.0
    for a in range(n):
        body.append(f'<circle class="action" data-action="{a}" cx="{tx(reps[0, a]):.2f}" '
                    f'cy="{ty(reps[1, a]):.2f}" r="{r}" fill="{_hex(colors[a])}"/>')
    legend_y = _PAD + 14
    body.append(f'<g class="legend" font-size="10"><text x="{_W - _PAD - 4}" y="{legend_y}" '
                'text-anchor="end">colour: R = normalised dx, G = normalised dy, B = 0.5</text>')
    for k, (label, rgb) in enumerate((("max dx", (1, 0, .5)), ("max dy", (0, 1, .5)),
                                       ("min dx, min dy", (0, 0, .5)))):
        y = legend_y + 14 * (k + 1)
        body.append(f'<rect x="{_W - _PAD - 110}" y="{y - 8}" width="9" height="9" '
                    f'fill="{_hex(rgb)}"/><text x="{_W - _PAD - 96}" y="{y}">{label}</text>')
    body.append("</g>")
    return _write(path, body)


def learning_curve_svg(mean, std, path, title="Return", label=None):
    """Mean curve with a one-standard-deviation band."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    x = np.arange(mean.size, dtype=np.float64)
    lo = np.array([0.0, float(np.min(mean - std))])
    hi = np.array([max(x[-1], 1.0), float(np.max(mean + std))])
    tx, ty = _axes(lo, hi)
    body = _frame(lo, hi, tx, ty, "episode", "return", title)
    upper = " ".join(f"{tx(a):.1f},{ty(b):.1f}" for a, b in zip(x, mean + std))
    lower = " ".join(f"{tx(a):.1f},{ty(b):.1f}" for a, b in zip(x[::-1], (mean - std)[::-1]))
    body.append(f'<polygon class="band" points="{upper} {lower}" fill="#4477aa" '
                'fill-opacity="0.25" stroke="none"/>')
    line = " ".join(f"{tx(a):.1f},{ty(b):.1f}" for a, b in zip(x, mean))
    body.append(f'<polyline class="mean" points="{line}" fill="none" stroke="#224477" '
                'stroke-width="1.5"/>')
    if label:
        body.append(f'<text x="{_W - _PAD - 4}" y="{_PAD + 14}" text-anchor="end" '
                    f'font-size="11">{escape(label)}</text>')
    return _write(path, body)
