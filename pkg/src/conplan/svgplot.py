"""Minimal self-contained SVG scatter plots (no plotting dependency).

Produces panel grids (rows x cols of framed scatter plots with titles) and
simple bar charts. Categorical colors cycle through a fixed palette; label
-1 (noise) renders gray.
"""

import io

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#bcbd22", "#17becf", "#aec7e8", "#ffbb78", "#98df8a",
]
NOISE_COLOR = "#999999"

PANEL_W = 240
PANEL_H = 220
MARGIN = 36
TITLE_H = 18


def color_for(label):
    if label is None or label < 0:
        return NOISE_COLOR
    return PALETTE[int(label) % len(PALETTE)]


def _panel_svg(buf, x0, y0, xs, ys, labels, title):
    buf.write(f'<g class="panel" transform="translate({x0},{y0})">\n')
    buf.write(f'<text x="{PANEL_W / 2:.1f}" y="12" text-anchor="middle" '
              f'font-size="11" font-family="sans-serif">{title}</text>\n')
    fx0, fy0 = 6, TITLE_H
    fw, fh = PANEL_W - 12, PANEL_H - TITLE_H - 8
    buf.write(f'<rect x="{fx0}" y="{fy0}" width="{fw}" height="{fh}" '
              f'fill="none" stroke="#333" stroke-width="1"/>\n')
    if len(xs):
        xmin, xmax = min(xs), max(xs)
        ymin, ymax = min(ys), max(ys)
        xspan = (xmax - xmin) or 1.0
        yspan = (ymax - ymin) or 1.0
        pad = 0.05
        for x, y, lab in zip(xs, ys, labels):
            px = fx0 + fw * (pad + (1 - 2 * pad) * (x - xmin) / xspan)
            py = fy0 + fh * (1 - pad - (1 - 2 * pad) * (y - ymin) / yspan)
            buf.write(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="1.6" '
                      f'fill="{color_for(lab)}"/>\n')
    buf.write('</g>\n')


def panel_grid_svg(panels, n_rows, n_cols):
    """panels: list of (xs, ys, labels, title), row-major."""
    width = MARGIN * 2 + n_cols * PANEL_W
    height = MARGIN * 2 + n_rows * PANEL_H
    buf = io.StringIO()
    buf.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
              f'height="{height}" viewBox="0 0 {width} {height}">\n')
    buf.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
    for k, (xs, ys, labels, title) in enumerate(panels):
        r, c = divmod(k, n_cols)
        _panel_svg(buf, MARGIN + c * PANEL_W, MARGIN + r * PANEL_H,
                   xs, ys, labels, title)
    buf.write('</svg>\n')
    return buf.getvalue()


def bar_chart_svg(groups, series, values, errors=None, title="",
                  width=520, height=300):
    """Grouped bars: values[g][s]; optional symmetric error whiskers."""
    buf = io.StringIO()
    buf.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
              f'height="{height}" viewBox="0 0 {width} {height}">\n')
    buf.write(f'<rect width="{width}" height="{height}" fill="white"/>\n')
    buf.write(f'<text x="{width / 2}" y="16" text-anchor="middle" '
              f'font-size="13" font-family="sans-serif">{title}</text>\n')
    x0, y0 = 50, height - 40
    plot_w, plot_h = width - 80, height - 80
    vmax = max((v for row in values for v in row if v == v), default=1.0) or 1.0
    if errors is not None:
        vmax = max(vmax, max((v + e for row, erow in zip(values, errors)
                              for v, e in zip(row, erow) if v == v), default=vmax))
    buf.write(f'<line x1="{x0}" y1="{y0}" x2="{x0 + plot_w}" y2="{y0}" '
              f'stroke="#333"/>\n')
    buf.write(f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y0 - plot_h}" '
              f'stroke="#333"/>\n')
    gw = plot_w / max(1, len(groups))
    bw = gw / (len(series) + 1)
    for gi, g in enumerate(groups):
        for si, s in enumerate(series):
            v = values[gi][si]
            if v != v:  # NaN: absent
                continue
            bh = plot_h * v / (1.1 * vmax)
            bx = x0 + gi * gw + (si + 0.5) * bw
            buf.write(f'<rect x="{bx:.1f}" y="{y0 - bh:.1f}" width="{bw * 0.9:.1f}" '
                      f'height="{bh:.1f}" fill="{PALETTE[si % len(PALETTE)]}"/>\n')
            if errors is not None and errors[gi][si] == errors[gi][si]:
                eh = plot_h * errors[gi][si] / (1.1 * vmax)
                cx = bx + bw * 0.45
                buf.write(f'<line x1="{cx:.1f}" y1="{y0 - bh - eh:.1f}" '
                          f'x2="{cx:.1f}" y2="{y0 - bh + min(eh, bh):.1f}" '
                          f'stroke="#333"/>\n')
        buf.write(f'<text x="{x0 + (gi + 0.5) * gw:.1f}" y="{y0 + 16}" '
                  f'text-anchor="middle" font-size="11" '
                  f'font-family="sans-serif">{g}</text>\n')
    ly = 30
    for si, s in enumerate(series):
        buf.write(f'<rect x="{width - 150}" y="{ly - 9}" width="10" height="10" '
                  f'fill="{PALETTE[si % len(PALETTE)]}"/>\n')
        buf.write(f'<text x="{width - 136}" y="{ly}" font-size="11" '
                  f'font-family="sans-serif">{s}</text>\n')
        ly += 16
    buf.write('</svg>\n')
    return buf.getvalue()
