"""CSV tables and standalone SVG charts for ensembles and sweeps."""

from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .experiment import EnsembleStats, TrialOutcome
from .landscape import CellGrid, CellKind

TRIALS_COLUMNS = (
    "trial_index", "x0", "y0", "x_end", "y_end", "cell_i", "cell_j",
    "bin", "steps_taken", "final_grad_norm", "final_value",
)
SUMMARY_COLUMNS = (
    "tau", "eps", "trials", "steps", "n_deep", "n_shallow", "n_hill",
    "n_near_critical", "n_out", "r", "r_ci_lo", "r_ci_hi", "phi",
)
HISTOGRAM_COLUMNS = ("cell_i", "cell_j", "x_lo", "x_hi", "y_lo", "y_hi", "cell_class", "count")

_INT_COLUMNS = {
    "trial_index", "cell_i", "cell_j", "steps_taken", "trials", "steps", "n_deep",
    "n_shallow", "n_hill", "n_near_critical", "n_out", "count",
}
_TEXT_COLUMNS = {"bin", "cell_class"}


def fmt_real(v: float) -> str:
    """17 significant digits: parses back to the identical double."""
    return format(float(v), ".17g")


def _write(path, columns, rows):
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            w.writerows(rows)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_trials_csv(outcomes: list[TrialOutcome], path):
    rows = []
    for o in outcomes:
        ci, cj = ("", "") if o.cell is None else o.cell
        rows.append([
            o.trial_index, fmt_real(o.start.x), fmt_real(o.start.y), fmt_real(o.end.x), fmt_real(o.end.y),
            ci, cj, o.bin.value, o.steps_taken, fmt_real(o.final_grad_norm), fmt_real(o.final_value),
        ])
    return _write(path, TRIALS_COLUMNS, rows)


def summary_row(s: EnsembleStats) -> list:
    return [
        fmt_real(s.tau), fmt_real(s.eps), s.trials, s.steps, s.n_deep, s.n_shallow, s.n_hill,
        s.n_near_critical, s.n_out, fmt_real(s.r), fmt_real(s.r_ci[0]), fmt_real(s.r_ci[1]), fmt_real(s.phi),
    ]


def write_summary_csv(stats: EnsembleStats | list[EnsembleStats], path):
    if isinstance(stats, EnsembleStats):
        stats = [stats]
    return _write(path, SUMMARY_COLUMNS, [summary_row(s) for s in stats])


def write_histogram_csv(grid: CellGrid, counts, path):
    counts = np.asarray(counts)
    rows = []
    for i, j, cell in grid.iter_cells():
        x_lo, x_hi, y_lo, y_hi = grid.bounds(i, j)
        rows.append([i, j, fmt_real(x_lo), fmt_real(x_hi), fmt_real(y_lo), fmt_real(y_hi),
                     cell.kind.value, int(counts[i, j])])
    return _write(path, HISTOGRAM_COLUMNS, rows)


def read_csv(path) -> list[dict]:
    """Read any of the three tables back with typed values (None for empty cells)."""

    def conv(col, v):
        if v == "":
            return None
        if col in _TEXT_COLUMNS:
            return v
        if col in _INT_COLUMNS:
            return int(v)
        return float(v)

    with Path(path).open(newline="", encoding="utf-8") as fh:
        return [{k: conv(k, v) for k, v in row.items()} for row in csv.DictReader(fh)]


# --- SVG -------------------------------------------------------------------

_SVG_HEAD = '<?xml version="1.0" encoding="UTF-8" standalone="no"?>\n'
_FONT = 'font-family="sans-serif"'

_OUTLINE = {
    CellKind.DEEP_WELL: 'stroke="#08306b" stroke-width="2.5"',
    CellKind.SHALLOW_WELL: 'stroke="#08306b" stroke-width="1.5" stroke-dasharray="6,3"',
    CellKind.HILL: 'stroke="#999999" stroke-width="0.75" stroke-dasharray="2,2"',
}


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if v != int(v) else str(int(v))


def intensity_fill(t: float) -> str:
    """White at 0, dark blue at 1."""
    t = min(max(t, 0.0), 1.0)
    lo, hi = (255, 255, 255), (33, 102, 172)
    r, g, b = (round(a + (c - a) * t) for a, c in zip(lo, hi))
    return f"rgb({r},{g},{b})"


def render_histogram_svg(grid: CellGrid, counts, title: str = "") -> str:
    """Heatmap of endpoint counts over the cell grid, one rectangle per cell."""
    counts = np.asarray(counts)
    if counts.shape != grid.shape:
        raise ValueError(f"counts shape {counts.shape} does not match grid {grid.shape}")
    reg = grid.region
    scale = 400.0 / max(reg.x_max - reg.x_min, reg.y_max - reg.y_min)
    ml, mt = 60.0, 40.0
    w = (reg.x_max - reg.x_min) * scale
    h = (reg.y_max - reg.y_min) * scale
    width, height = ml + w + 170, mt + h + 50
    peak = int(counts.max()) if counts.size else 0

    def sx(x):
        return ml + (x - reg.x_min) * scale

    def sy(y):
        return mt + (reg.y_max - y) * scale

    out = [_SVG_HEAD, f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" '
           f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">\n']
    out.append(f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>\n')
    if title:
        out.append(f'<text x="{ml:.1f}" y="22" {_FONT} font-size="14">{escape(title)}</text>\n')
    out.append('<g id="cells">\n')
    for i, j, cell in grid.iter_cells():
        x_lo, x_hi, y_lo, y_hi = grid.bounds(i, j)
        c = int(counts[i, j])
        fill = intensity_fill(c / peak if peak else 0.0)
        x, y = sx(x_lo), sy(y_hi)
        cw, ch = (x_hi - x_lo) * scale, (y_hi - y_lo) * scale
        out.append(
            f'<rect class="cell" data-kind="{cell.kind.value}" data-count="{c}" x="{x:.2f}" y="{y:.2f}" '
            f'width="{cw:.2f}" height="{ch:.2f}" fill="{fill}" {_OUTLINE[cell.kind]}/>\n'
        )
        colour = "white" if peak and c / peak > 0.6 else "black"
        out.append(
            f'<text x="{x + cw / 2:.2f}" y="{y + ch / 2 + 4:.2f}" text-anchor="middle" {_FONT} '
            f'font-size="11" fill="{colour}">{c}</text>\n'
        )
    out.append("</g>\n")

    # axis labels at the grid lines
    for xl in grid.x_lines:
        out.append(f'<text x="{sx(xl):.2f}" y="{mt + h + 16:.2f}" text-anchor="middle" {_FONT} '
                   f'font-size="10">{_num(xl)}</text>\n')
    for yl in grid.y_lines:
        out.append(f'<text x="{ml - 6:.2f}" y="{sy(yl) + 3:.2f}" text-anchor="end" {_FONT} '
                   f'font-size="10">{_num(yl)}</text>\n')
    out.append(f'<text x="{ml + w / 2:.2f}" y="{mt + h + 36:.2f}" text-anchor="middle" {_FONT} font-size="12">x</text>\n')
    out.append(f'<text x="{ml - 40:.2f}" y="{mt + h / 2:.2f}" {_FONT} font-size="12">y</text>\n')

    lx = ml + w + 20
    out.append('<g id="legend">\n')
    for k, kind in enumerate(CellKind):
        ly = mt + 10 + 28 * k
        out.append(f'<rect x="{lx:.1f}" y="{ly:.1f}" width="22" height="16" fill="white" {_OUTLINE[kind]}/>\n')
        out.append(f'<text x="{lx + 30:.1f}" y="{ly + 12:.1f}" {_FONT} font-size="11">{kind.value}</text>\n')
    out.append(f'<text x="{lx:.1f}" y="{mt + 110:.1f}" {_FONT} font-size="11">max count {peak}</text>\n')
    out.append("</g>\n</svg>\n")
    return "".join(out)


def nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def render_sweep_svg(rows: list[EnsembleStats], eps_range: tuple[float, float] = (0.0, 0.3)) -> str:
    """One r-vs-eps panel per step size, in order of first appearance."""
    if not rows:
        raise ValueError("empty sweep table")
    taus: list[float] = []
    for s in rows:
        if s.tau not in taus:
            taus.append(s.tau)
    e_lo = min(eps_range[0], min(s.eps for s in rows))
    e_hi = max(eps_range[1], max(s.eps for s in rows))
    defined = [s.r for s in rows if s.r_defined]
    r_hi = max([1.0] + [v * 1.05 for v in defined])

    pw, ph = 220.0, 180.0
    ml, mt, gap = 50.0, 40.0, 30.0
    width = ml + len(taus) * (pw + gap) + 10
    height = mt + ph + 80
    out = [_SVG_HEAD, f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" '
           f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">\n']
    out.append(f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>\n')
    omitted = 0
    xt = nice_ticks(e_lo, e_hi, 3)
    yt = nice_ticks(0.0, r_hi, 4)
    for p, tau in enumerate(taus):
        ox = ml + p * (pw + gap)

        def px(e):
            return ox + (e - e_lo) / (e_hi - e_lo or 1.0) * pw

        def py(r):
            return mt + ph - r / r_hi * ph

        out.append(f'<g class="panel" data-tau="{fmt_real(tau)}">\n')
        out.append(f'<rect x="{ox:.2f}" y="{mt:.2f}" width="{pw:.2f}" height="{ph:.2f}" fill="none" stroke="black"/>\n')
        out.append(f'<text x="{ox + pw / 2:.2f}" y="{mt - 12:.2f}" text-anchor="middle" {_FONT} '
                   f'font-size="13">tau = {tau:g}</text>\n')
        for t in xt:
            out.append(f'<line x1="{px(t):.2f}" y1="{mt + ph:.2f}" x2="{px(t):.2f}" y2="{mt + ph + 4:.2f}" stroke="black"/>\n')
            out.append(f'<text x="{px(t):.2f}" y="{mt + ph + 16:.2f}" text-anchor="middle" {_FONT} font-size="10">{t:g}</text>\n')
        for t in yt:
            out.append(f'<line x1="{ox - 4:.2f}" y1="{py(t):.2f}" x2="{ox:.2f}" y2="{py(t):.2f}" stroke="black"/>\n')
            out.append(f'<text x="{ox - 6:.2f}" y="{py(t) + 3:.2f}" text-anchor="end" {_FONT} font-size="10">{t:g}</text>\n')
        out.append(f'<text x="{ox + pw / 2:.2f}" y="{mt + ph + 32:.2f}" text-anchor="middle" {_FONT} font-size="11">eps</text>\n')

        series = sorted((s for s in rows if s.tau == tau), key=lambda s: s.eps)
        pts = [(px(s.eps), py(s.r)) for s in series if s.r_defined]
        omitted += sum(1 for s in series if not s.r_defined)
        if len(pts) > 1:
            coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="#2166ac" stroke-width="1.5"/>\n')
        for x, y in pts:
            out.append(f'<circle class="point" cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="#2166ac"/>\n')
        out.append("</g>\n")

    out.append(f'<text x="{ml - 38:.2f}" y="{mt + ph / 2:.2f}" {_FONT} font-size="12">r</text>\n')
    note = "r = P(shallow) / P(deep)"
    if omitted:
        note += f"; {omitted} point(s) omitted: no deep-well endpoints"
    out.append(f'<text id="legend" x="{ml:.2f}" y="{mt + ph + 58:.2f}" {_FONT} font-size="11">{escape(note)}</text>\n')
    out.append("</svg>\n")
    return "".join(out)


def write_text(path, text: str):
    path = Path(path)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
