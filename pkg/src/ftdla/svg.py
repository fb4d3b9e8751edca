"""Minimal SVG scatter / line plots (no plotting stack needed)."""

from xml.sax.saxutils import escape

W, H = 640, 420
PAD = 60


def _scale(vals, lo_px, hi_px):
    lo, hi = min(vals), max(vals)
    if hi == lo:
        lo, hi = lo - 0.5, hi + 0.5
    span = hi - lo
    lo, hi = lo - 0.05 * span, hi + 0.05 * span
    return lambda v: lo_px + (v - lo) / (hi - lo) * (hi_px - lo_px), lo, hi


def _frame(title, xlabel, ylabel, xl, xh, yl, yh):
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{W - PAD / 2}" y2="{H - PAD}" stroke="black"/>',
           f'<line x1="{PAD}" y1="{H - PAD}" x2="{PAD}" y2="{PAD / 2}" stroke="black"/>',
           f'<text x="{W / 2}" y="{H - 18}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
           f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>',
           f'<text x="{PAD}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{xl:.3g}</text>',
           f'<text x="{W - PAD / 2}" y="{H - PAD + 16}" font-size="10" text-anchor="middle">{xh:.3g}</text>',
           f'<text x="{PAD - 6}" y="{H - PAD}" font-size="10" text-anchor="end">{yl:.3g}</text>',
           f'<text x="{PAD - 6}" y="{PAD / 2 + 4}" font-size="10" text-anchor="end">{yh:.3g}</text>']
    return out


def scatter(points, highlight=(), title="", xlabel="", ylabel=""):
    """``points`` is a list of (x, y); ``highlight`` indexes drawn as the front line."""
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] or [0.0]
    sx, xl, xh = _scale(xs, PAD, W - PAD / 2)
    sy, yl, yh = _scale(ys, H - PAD, PAD / 2)
    out = _frame(title, xlabel, ylabel, xl, xh, yl, yh)
    for x, y in points:
        out.append(f'<circle class="point" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#4a7ab5" fill-opacity="0.6"/>')
    hl = sorted((points[i] for i in highlight), key=lambda p: p[0])
    if hl:
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in hl)
        out.append(f'<polyline class="front" points="{path}" fill="none" stroke="#c0392b" stroke-width="2"/>')
        for x, y in hl:
            out.append(f'<circle class="front-point" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="#c0392b"/>')
    out.append("</svg>")
    return "\n".join(out)


def line(xs, ys, lo=None, hi=None, title="", xlabel="", ylabel=""):
    """Line with an optional shaded CI band ``lo..hi``."""
    allv = list(ys) + list(lo or []) + list(hi or [])
    sx, xl, xh = _scale(list(xs) or [0.0], PAD, W - PAD / 2)
    sy, yl, yh = _scale(allv or [0.0], H - PAD, PAD / 2)
    out = _frame(title, xlabel, ylabel, xl, xh, yl, yh)
    if lo is not None and hi is not None:
        band = [f"{sx(x):.2f},{sy(v):.2f}" for x, v in zip(xs, hi)]
        band += [f"{sx(x):.2f},{sy(v):.2f}" for x, v in reversed(list(zip(xs, lo)))]
        out.append(f'<polygon points="{" ".join(band)}" fill="#4a7ab5" fill-opacity="0.2"/>')
    path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, ys))
    out.append(f'<polyline points="{path}" fill="none" stroke="#4a7ab5" stroke-width="2"/>')
    for x, y in zip(xs, ys):
        out.append(f'<circle class="point" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="#4a7ab5"/>')
    out.append("</svg>")
    return "\n".join(out)
