"""Accuracy metrics, trial aggregation, and boundary rendering.

The headline similarity metric is the size-weighted mean accuracy across
the train, test, and sampled splits; absent splits drop out of both the
numerator and denominator. Aggregation rows mirror the repair run tables:
per group, accuracy statistics over SAT trials plus verdict counts.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .datagen import Dataset, LabeledPoint, Rect, points_array
from .network import Network, decide_batch, forward_batch


def accuracy(net: Network, points: Sequence[LabeledPoint]) -> float:
    if not points:
        raise ValueError("cannot score an empty point set")
    xs, ys = points_array(points)
    return float(np.mean(decide_batch(net, xs) == ys))


@dataclass
class AccuracyReport:
    per_split: dict  # split -> (size, accuracy)
    weighted: float


def weighted_accuracy(net: Network, dataset: Dataset) -> AccuracyReport:
    """Size-weighted mean accuracy over the non-empty splits.

    Computed from correct counts, so the weighted figure equals
    total-correct / total-size exactly.
    """
    per_split = {}
    correct = 0
    total = 0
    for split in ("train", "test", "sampled"):
        points = getattr(dataset, split)
        if not points:
            continue
        xs, ys = points_array(points)
        hits = int(np.sum(decide_batch(net, xs) == ys))
        per_split[split] = (len(points), hits / len(points))
        correct += hits
        total += len(points)
    if total == 0:
        raise ValueError("dataset has no points in any split")
    return AccuracyReport(per_split, correct / total)


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class AggregateRow:
    group: str
    accuracy_before: float | None
    max_accuracy: float | None
    min_accuracy: float | None
    avg_accuracy: float | None
    trials: int
    sat: int
    unsat: int
    timeout: int
    skipped: int
    error: int
    total_solver_time_s: float


def aggregate_trials(
    records: Sequence,
    group_by: str = "threshold",
    accuracy_before: float | None = None,
) -> list[AggregateRow]:
    """Group trial records by threshold, selection size, or a custom key.

    Rows are ordered by group key; accuracy statistics cover SAT trials only
    and stay None (printed NA) for groups without any SAT.
    """
    def key(rec) -> str:
        if group_by == "threshold":
            return str(rec.threshold)
        if group_by == "size":
            return str(rec.size)
        return str(getattr(rec, group_by))

    groups: dict[str, list] = {}
    for rec in records:
        groups.setdefault(key(rec), []).append(rec)

    rows = []
    for group in sorted(groups, key=lambda g: (len(g), g)):
        recs = groups[group]
        accs = [r.accuracy for r in recs if r.status == "SAT" and r.accuracy is not None]
        rows.append(
            AggregateRow(
                group=group,
                accuracy_before=accuracy_before,
                max_accuracy=max(accs) if accs else None,
                min_accuracy=min(accs) if accs else None,
                avg_accuracy=sum(accs) / len(accs) if accs else None,
                trials=len(recs),
                sat=sum(r.status == "SAT" for r in recs),
                unsat=sum(r.status == "UNSAT" for r in recs),
                timeout=sum(r.status == "TIMEOUT" for r in recs),
                skipped=sum(r.skipped for r in recs),
                error=sum(r.status in ("ERROR", "UNKNOWN") for r in recs),
                total_solver_time_s=sum(r.solver_time_s for r in recs),
            )
        )
    return rows


def _fmt_acc(value: float | None) -> str:
    return "NA" if value is None else f"{100.0 * value:.5f}%"


AGGREGATE_HEADER = [
    "group", "accuracy_before", "max_accuracy", "min_accuracy", "avg_accuracy",
    "trials", "sat", "unsat", "timeout", "skipped", "error", "total_solver_time_s",
]


def aggregate_csv(rows: Sequence[AggregateRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(AGGREGATE_HEADER)
    for r in rows:
        writer.writerow(
            [
                r.group,
                _fmt_acc(r.accuracy_before),
                _fmt_acc(r.max_accuracy),
                _fmt_acc(r.min_accuracy),
                _fmt_acc(r.avg_accuracy),
                r.trials,
                r.sat,
                r.unsat,
                r.timeout,
                r.skipped,
                r.error,
                f"{r.total_solver_time_s:.1f}",
            ]
        )
    return buf.getvalue()


TRIAL_HEADER = [
    "selection", "size", "threshold", "status", "skipped",
    "accuracy", "solver_time_s", "weight_values",
]


def trials_csv(records: Sequence) -> str:
    """One row per trial, selections and model values in readable form."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(TRIAL_HEADER)
    for r in records:
        sel = ";".join(f"{w.layer}:{w.kind}:{w.row}:{w.col}" for w in r.selection)
        vals = ""
        if r.weight_values:
            vals = ";".join(
                f"{w.layer}:{w.kind}:{w.row}:{w.col}={float(v):.12g}"
                for w, v in r.weight_values.items()
            )
        writer.writerow(
            [
                sel,
                r.size,
                r.threshold,
                r.status,
                int(r.skipped),
                "" if r.accuracy is None else f"{r.accuracy:.7f}",
                f"{r.solver_time_s:.3f}",
                vals,
            ]
        )
    return buf.getvalue()


# ---------------------------------------------------------------------------
# deterministic SVG boundary rendering

_CLASS_COLORS = ((214, 69, 65), (65, 105, 225), (60, 179, 113), (238, 130, 238))
_MARKERS = {"train": "circle", "test": "triangle", "sampled": "square"}


def _color(class_index: int, margin: float) -> str:
    r, g, b = _CLASS_COLORS[class_index % len(_CLASS_COLORS)]
    # fade toward white near the boundary; quantized so output is stable
    fade = 1.0 - 0.7 * max(0.0, 1.0 - margin)
    fr = int(255 - (255 - r) * fade)
    fg = int(255 - (255 - g) * fade)
    fb = int(255 - (255 - b) * fade)
    return f"rgb({fr},{fg},{fb})"


def boundary_svg(
    net: Network,
    bounds: Rect,
    resolution: int = 64,
    datasets: dict | None = None,
    properties: Sequence = (),
    size_px: int = 480,
    l1_as_square: bool = False,
) -> str:
    """Rasterize the decision regions into an SVG string.

    Cells are colored by predicted class and shaded by output margin.
    Dataset overlays use circles for train, triangles for test, squares for
    sampled points. Property balls are outlined: diamonds for L1 (their true
    shape) unless ``l1_as_square``, squares for Linf. Output is byte-stable
    for identical inputs.
    """
    if resolution < 16:
        raise ValueError("resolution must be at least 16")
    (x_lo, y_lo), (x_hi, y_hi) = bounds.lo, bounds.hi

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = (x - x_lo) / (x_hi - x_lo) * size_px
        py = size_px - (y - y_lo) / (y_hi - y_lo) * size_px
        return px, py

    xs = np.linspace(x_lo, x_hi, resolution, endpoint=False) + (x_hi - x_lo) / resolution / 2
    ys = np.linspace(y_lo, y_hi, resolution, endpoint=False) + (y_hi - y_lo) / resolution / 2
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    outs = forward_batch(net, grid)
    preds = np.argmax(outs, axis=1)
    part = np.partition(outs, -2, axis=1)
    margins = part[:, -1] - part[:, -2]
    scale = margins.max() if margins.max() > 0 else 1.0

    cell_w = size_px / resolution
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size_px}" height="{size_px}" '
        f'viewBox="0 0 {size_px} {size_px}">'
    ]
    for idx in range(len(grid)):
        i, j = divmod(idx, resolution)
        px = i * cell_w
        py = size_px - (j + 1) * cell_w
        margin = round(float(margins[idx] / scale) * 8) / 8  # quantized shading
        lines.append(
            f'<rect x="{px:.2f}" y="{py:.2f}" width="{cell_w:.2f}" height="{cell_w:.2f}" '
            f'fill="{_color(int(preds[idx]), margin)}"/>'
        )

    for split, points in (datasets or {}).items():
        marker = _MARKERS.get(split, "circle")
        for p in points:
            px, py = to_px(p.x[0], p.x[1])
            color = _CLASS_COLORS[p.label % len(_CLASS_COLORS)]
            fill = f"rgb({color[0]},{color[1]},{color[2]})"
            if marker == "circle":
                lines.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.5" fill="{fill}" stroke="black" stroke-width="0.4"/>')
            elif marker == "triangle":
                pts = f"{px:.2f},{py - 3:.2f} {px - 2.6:.2f},{py + 2.2:.2f} {px + 2.6:.2f},{py + 2.2:.2f}"
                lines.append(f'<polygon points="{pts}" fill="{fill}" stroke="black" stroke-width="0.4"/>')
            else:
                lines.append(f'<rect x="{px - 2.2:.2f}" y="{py - 2.2:.2f}" width="4.4" height="4.4" fill="{fill}" stroke="black" stroke-width="0.4"/>')

    for prop in properties:
        cx, cy = prop.center
        d = prop.delta
        color = _CLASS_COLORS[prop.target_class % len(_CLASS_COLORS)]
        stroke = f"rgb({color[0]},{color[1]},{color[2]})"
        if prop.norm == "l1" and not l1_as_square:
            corners = [(cx + d, cy), (cx, cy + d), (cx - d, cy), (cx, cy - d)]
        else:
            corners = [(cx - d, cy - d), (cx + d, cy - d), (cx + d, cy + d), (cx - d, cy + d)]
        pts = " ".join(f"{to_px(x, y)[0]:.2f},{to_px(x, y)[1]:.2f}" for x, y in corners)
        lines.append(f'<polygon points="{pts}" fill="none" stroke="{stroke}" stroke-width="2"/>')

    lines.append("</svg>")
    return "\n".join(lines) + "\n"
