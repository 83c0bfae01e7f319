"""Matplotlib figures for the report path: decision boundaries with data
and property overlays, and before/after comparisons."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Polygon

from .datagen import Dataset, Rect, points_array
from .network import Network, decide_batch

_CMAPS = ["#d64541", "#4169e1", "#3cb371", "#ee82ee"]
_MARKERS = {"train": "o", "test": "^", "sampled": "s"}


def _draw_boundary(ax, net: Network, bounds: Rect, resolution: int = 300):
    (x_lo, y_lo), (x_hi, y_hi) = bounds.lo, bounds.hi
    xs = np.linspace(x_lo, x_hi, resolution)
    ys = np.linspace(y_lo, y_hi, resolution)
    gx, gy = np.meshgrid(xs, ys)
    grid = np.stack([gx.ravel(), gy.ravel()], axis=1)
    preds = decide_batch(net, grid).reshape(gx.shape)
    ax.contourf(gx, gy, preds, levels=np.arange(-0.5, preds.max() + 1),
                colors=_CMAPS[: int(preds.max()) + 1], alpha=0.25)
    ax.set_xlim(x_lo, x_hi)
    ax.set_ylim(y_lo, y_hi)


def _draw_points(ax, dataset: Dataset, max_points: int = 800):
    for split, marker in _MARKERS.items():
        points = getattr(dataset, split)
        if not points:
            continue
        points = points[:max_points]
        xs, ys = points_array(points)
        for label in sorted(set(ys)):
            mask = ys == label
            ax.scatter(
                xs[mask, 0], xs[mask, 1], c=_CMAPS[label % len(_CMAPS)],
                marker=marker, s=12, edgecolors="black", linewidths=0.3,
                label=f"{split} class {label}",
            )


def _draw_properties(ax, properties):
    for prop in properties:
        cx, cy = prop.center
        d = prop.delta
        if prop.norm == "l1":
            corners = [(cx + d, cy), (cx, cy + d), (cx - d, cy), (cx, cy - d)]
        else:
            corners = [(cx - d, cy - d), (cx + d, cy - d), (cx + d, cy + d), (cx - d, cy + d)]
        ax.add_patch(
            Polygon(corners, closed=True, fill=False, linewidth=2,
                    edgecolor=_CMAPS[prop.target_class % len(_CMAPS)])
        )
        ax.annotate(prop.name, (cx, cy), fontsize=7, ha="center")


def boundary_figure(
    net: Network,
    bounds: Rect,
    dataset: Dataset | None = None,
    properties=(),
    title: str = "",
    out_path: str | None = None,
):
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_boundary(ax, net, bounds)
    if dataset is not None:
        _draw_points(ax, dataset)
    _draw_properties(ax, properties)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    if out_path:
        fig.savefig(out_path, dpi=150)
        plt.close(fig)
        return None
    return fig


def before_after_figure(
    original: Network,
    repaired: Network,
    bounds: Rect,
    dataset: Dataset | None = None,
    properties=(),
    out_path: str | None = None,
):
    fig, axes = plt.subplots(1, 2, figsize=(12, 6))
    for ax, net, title in ((axes[0], original, "before repair"), (axes[1], repaired, "after repair")):
        _draw_boundary(ax, net, bounds)
        if dataset is not None:
            _draw_points(ax, dataset)
        _draw_properties(ax, properties)
        ax.set_title(title)
    fig.tight_layout()
    if out_path:
        fig.savefig(out_path, dpi=150)
        plt.close(fig)
        return None
    return fig
