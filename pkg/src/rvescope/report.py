"""CSV, SVG and plain-text outputs for an RVE sweep."""
from __future__ import annotations

import csv
import io
from xml.sax.saxutils import escape

from .window import SizeStatistics

__all__ = ["CSV_HEADER", "curve_csv", "write_csv", "read_csv", "curve_svg", "report_text"]

CSV_HEADER = ("w_px", "w_um", "D_bar", "N_k", "D_min", "D_median", "D_max")


def curve_csv(curve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for s in curve.stats:
        writer.writerow([s.w, repr(s.w * curve.scale), repr(s.d_bar), s.n_positions,
                         repr(s.d_min), repr(s.d_median), repr(s.d_max)])
    return buf.getvalue()


def write_csv(path, curve):
    with open(path, "w", newline="") as fh:
        fh.write(curve_csv(curve))


def read_csv(path):
    """Parse a curve CSV back into (stats, scale); scale is inferred from w_um/w_px."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
    stats, scale = [], None
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
        w, w_um, d_bar, n_k, d_min, d_med, d_max = row
        stats.append(SizeStatistics(int(w), int(n_k), float(d_bar), float(d_min),
                                    float(d_med), float(d_max)))
        if scale is None:
            scale = float(w_um) / int(w)
    if not stats:
        raise ValueError(f"{path}: no data rows")
    return stats, scale


def curve_svg(curve, width=640, height=400) -> str:
    """Line plot of D-bar against window size with a vertical line at the selected size."""
    left, right, top, bottom = 70, 20, 30, 50
    xs, ys = curve.sizes, curve.d_bar
    x0, x1 = xs[0], xs[-1]
    y0, y1 = 0.0, max(ys) or 1.0

    def px(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def py(y):
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom)

    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    xr = px(curve.rve_pixels)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    for x in (x0, (x0 + x1) / 2, x1):
        out.append(f'<text x="{px(x):.2f}" y="{height - bottom + 18}" text-anchor="middle">{x:g}</text>')
    for y in (y0, y1 / 2, y1):
        out.append(f'<text x="{left - 6}" y="{py(y) + 4:.2f}" text-anchor="end">{y:.3g}</text>')
    out += [
        f'<text x="{(left + width - right) / 2}" y="{height - 10}" text-anchor="middle">window size w (px)</text>',
        f'<text x="16" y="{(top + height - bottom) / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(top + height - bottom) / 2})">mean D</text>',
        f'<polyline class="curve" fill="none" stroke="#1f4e9c" stroke-width="2" points="{pts}"/>',
    ]
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="#1f4e9c"/>')
    out += [
        f'<line class="rve-marker" x1="{xr:.2f}" y1="{top}" x2="{xr:.2f}" y2="{height - bottom}" '
        f'stroke="#c0392b" stroke-dasharray="6,4" stroke-width="1.5"/>',
        f'<text x="{xr + 4:.2f}" y="{top + 12}" fill="#c0392b">{escape(f"RVE {curve.rve_pixels} px")}</text>',
        "</svg>",
    ]
    return "\n".join(out) + "\n"


def _fmt(v, spec=".6g"):
    return "n/a" if v is None else format(v, spec)


def report_text(curve, config_text="", volume_fraction=None) -> str:
    e = curve.elbow
    lines = ["rve-scope report", "================", ""]
    if config_text:
        lines += ["resolved configuration", "----------------------", config_text.rstrip("\n"), ""]
    lines += ["input", "-----"]
    if curve.micrograph_shape:
        h, w = curve.micrograph_shape
        lines.append(f"micrograph: {h} x {w} px, {curve.scale:g} um/px")
    if curve.field_shape:
        lines.append(f"score field: {curve.field_shape[0]} x {curve.field_shape[1]} px")
    if volume_fraction is not None:
        lines.append(f"volume fraction: {volume_fraction:.6g}")
    lines += ["", "model", "-----", f"kind: {curve.model_kind}"]
    if curve.fit is not None:
        f = curve.fit
        lines += [
            f"mean negative log-likelihood: {f.nll:.6g}",
            f"gradient inf-norm: {f.grad_norm:.3e} ({'converged' if f.converged else 'NOT converged'}, {f.n_iter} polish steps)",
            f"CV balanced accuracy: {_fmt(f.cv_balanced_accuracy, '.4%') if f.cv_balanced_accuracy is not None else 'not computed'}",
        ]
        if f.learning_rate is not None:
            lines.append(f"learning rate: {f.learning_rate:g}")
    if curve.mean_score_norm is not None:
        lines.append(f"global mean score inf-norm: {curve.mean_score_norm:.3e}")
    lines += ["", f"window sweep (A = {curve.a_mode})", "-------------------------",
              f"{'w_px':>6} {'w_um':>10} {'D_bar':>12} {'N_k':>9}"]
    for s in curve.stats:
        lines.append(f"{s.w:>6} {s.w * curve.scale:>10.4g} {s.d_bar:>12.6g} {s.n_positions:>9}")
    lines += [
        "",
        "selection",
        "---------",
        f"elbow (max chord distance): w = {curve.elbow_pixels} px, distance {e.max_distance:.3f}",
        f"RVE size (first size right of the elbow): {curve.rve_pixels} px = {curve.rve_physical:.6g} um",
        f"cross-check (first D_bar <= 10% of max): {curve.threshold_pixels} px",
        f"confidence: {e.confidence}",
    ]
    lines += [f"  note: {n}" for n in e.notes]
    if curve.size_warning:
        lines.append(
            "size warning: selected RVE exceeds a quarter of the micrograph side; "
            "use an input 5-8 times larger than the RVE"
        )
    else:
        lines.append("size warning: none")
    return "\n".join(lines) + "\n"
