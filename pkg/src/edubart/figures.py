"""Tiny static SVG emitters for the sweep and profile reports.

Hand-rolled on purpose: the tables are the primary deliverable and these
figures only need axes, a few series, and a legend, so no plotting
dependency is warranted. Output is deterministic text.
"""

PALETTE = ("#1b6ca8", "#d1495b", "#2e933c", "#8f2d56", "#e09f3e", "#335c67")

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 64, 24, 40, 48


def _scale(lo, hi):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    return lo - 0.05 * span, hi + 0.05 * span


def _x_px(v, lo, hi):
    return _ML + (v - lo) / (hi - lo) * (_W - _ML - _MR)


def _y_px(v, lo, hi):
    return _H - _MB - (v - lo) / (hi - lo) * (_H - _MT - _MB)


def _axes(parts, title, xlabel, ylabel, xlo, xhi, ylo, yhi, xticks, yticks):
    parts.append(
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>'
    )
    parts.append(
        f'<text x="{_W / 2:.1f}" y="22" text-anchor="middle" '
        f'font-size="15" font-family="sans-serif">{title}</text>'
    )
    x0, y0 = _ML, _H - _MB
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{_W - _MR}" y2="{y0}" stroke="black"/>'
    )
    parts.append(f'<line x1="{x0}" y1="{_MT}" x2="{x0}" y2="{y0}" stroke="black"/>')
    for tv in xticks:
        px = _x_px(tv, xlo, xhi)
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{tv:g}</text>'
        )
    for tv in yticks:
        py = _y_px(tv, ylo, yhi)
        parts.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{py + 4:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{tv:g}</text>'
        )
    parts.append(
        f'<text x="{(_ML + _W - _MR) / 2:.1f}" y="{_H - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT + _H - _MB) / 2:.1f}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif" '
        f'transform="rotate(-90 16 {(_MT + _H - _MB) / 2:.1f})">{ylabel}</text>'
    )


def _ticks(lo, hi, n=6):
    step = (hi - lo) / (n - 1)
    return [round(lo + i * step, 3) for i in range(n)]


def svg_line_chart(path, series, title, xlabel, ylabel):
    """Write a line chart; `series` is a list of (label, [(x, y), ...])."""
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    xlo, xhi = _scale(min(xs), max(xs))
    ylo, yhi = _scale(min(ys), max(ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">'
    ]
    _axes(
        parts, title, xlabel, ylabel, xlo, xhi, ylo, yhi,
        sorted(set(xs)), _ticks(min(ys), max(ys)),
    )
    for i, (label, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(
            f"{_x_px(x, xlo, xhi):.1f},{_y_px(y, ylo, yhi):.1f}" for x, y in pts
        )
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in pts:
            parts.append(
                f'<circle cx="{_x_px(x, xlo, xhi):.1f}" cy="{_y_px(y, ylo, yhi):.1f}" '
                f'r="3" fill="{color}"/>'
            )
        ly = _MT + 16 * i
        parts.append(
            f'<line x1="{_W - _MR - 130}" y1="{ly}" x2="{_W - _MR - 110}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{_W - _MR - 104}" y="{ly + 4}" font-size="11" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def svg_interval_chart(path, groups, title, xlabel, ylabel):
    """Dot-and-interval chart.

    `groups` is a list of (label, [(x, y, lo, hi), ...]); group points are
    dodged around each integer x position.
    """
    xs = [x for _, pts in groups for x, *_ in pts]
    ys = [v for _, pts in groups for _, y, lo, hi in pts for v in (y, lo, hi)]
    xlo, xhi = _scale(min(xs) - 0.3, max(xs) + 0.3)
    ylo, yhi = _scale(min(ys), max(ys))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">'
    ]
    _axes(
        parts, title, xlabel, ylabel, xlo, xhi, ylo, yhi,
        sorted(set(xs)), _ticks(min(ys), max(ys)),
    )
    n = max(len(groups), 1)
    for i, (label, pts) in enumerate(groups):
        color = PALETTE[i % len(PALETTE)]
        dodge = (i - (n - 1) / 2) * 0.12
        for x, y, lo, hi in pts:
            px = _x_px(x + dodge, xlo, xhi)
            parts.append(
                f'<line x1="{px:.1f}" y1="{_y_px(lo, ylo, yhi):.1f}" '
                f'x2="{px:.1f}" y2="{_y_px(hi, ylo, yhi):.1f}" '
                f'stroke="{color}" stroke-width="1.5"/>'
            )
            parts.append(
                f'<circle cx="{px:.1f}" cy="{_y_px(y, ylo, yhi):.1f}" r="4" fill="{color}"/>'
            )
        ly = _MT + 16 * i
        parts.append(
            f'<circle cx="{_W - _MR - 120}" cy="{ly}" r="4" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{_W - _MR - 108}" y="{ly + 4}" font-size="11" '
            f'font-family="sans-serif">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
