"""Dependency-free SVG line chart of success curves.

The output is a pure function of the curves: fixed 800x500 viewBox, fixed
palette, coordinates printed with two decimals, so identical input gives
identical bytes.
"""
from xml.sax.saxutils import escape

__all__ = ["render_svg", "write_svg"]

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 180, 40, 60
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _nice_ticks(lo, hi, target=8):
    span = hi - lo
    for step in (1, 2, 4, 5, 10, 20, 25, 50, 100, 200, 500, 1000):
        if span / step <= target:
            break
    first = -(-lo // step) * step
    return list(range(int(first), int(hi) + 1, step))


def render_svg(curves, title="Success frequency vs sparsity"):
    """SVG text for a list of ``SuccessCurve`` (or ``(name, [(k, freq), ...])`` pairs)."""
    series = []
    for c in curves:
        if hasattr(c, "points"):
            series.append((c.algorithm, [(k, s / t) for k, s, t in c.points]))
        else:
            name, pts = c
            series.append((name, [(k, float(f)) for k, f in pts]))
    if not series or not any(pts for _, pts in series):
        raise ValueError("nothing to plot: no success curves")

    ks = [k for _, pts in series for k, _ in pts]
    kmin, kmax = min(ks), max(ks)
    if kmin == kmax:
        kmin, kmax = kmin - 1, kmax + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def X(k):
        return LEFT + (k - kmin) / (kmax - kmin) * pw

    def Y(f):
        return TOP + (1.0 - f) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{LEFT + pw / 2:.2f}" y="24" text-anchor="middle" font-size="15">'
        f'{escape(title)}</text>',
    ]
    # grid and ticks
    for i in range(6):
        f = i / 5
        y = Y(f)
        out.append(f'<line x1="{LEFT}" y1="{y:.2f}" x2="{LEFT + pw}" y2="{y:.2f}" '
                   f'stroke="#e0e0e0"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y + 4:.2f}" text-anchor="end">{f:.1f}</text>')
    for k in _nice_ticks(kmin, kmax):
        x = X(k)
        out.append(f'<line x1="{x:.2f}" y1="{TOP + ph}" x2="{x:.2f}" y2="{TOP + ph + 5}" '
                   f'stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{TOP + ph + 20}" text-anchor="middle">{k}</text>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" '
               f'stroke="black"/>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'sparsity level k</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2:.2f})">success frequency</text>')

    for i, (name, pts) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{X(k):.2f},{Y(f):.2f}" for k, f in sorted(pts))
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" '
                   f'stroke-width="2"><title>{escape(name)}</title></polyline>')
        for k, f in sorted(pts):
            out.append(f'<circle cx="{X(k):.2f}" cy="{Y(f):.2f}" r="3" fill="{color}"/>')
        ly = TOP + 10 + 20 * i
        lx = LEFT + pw + 20
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{ly + 4}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(curves, path, title="Success frequency vs sparsity"):
    text = render_svg(curves, title)
    with open(path, "w", newline="\n") as f:
        f.write(text)
    return path
