"""Synthetic dataset generation and persistence.

Three benchmark families: two XOR-style Gaussian mixtures (the second one
class-imbalanced by down-sampling label 1) and an eight-cluster "blobs"
mixture. A dataset carries train and test splits plus an optional
uniformly-sampled split whose labels come from a reference network's own
decisions, not from ground truth.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .network import Network, decide_batch

XOR_MINI = (((10.0, 10.0), 0), ((-10.0, -10.0), 0), ((-10.0, 10.0), 1), ((10.0, -10.0), 1))

BLOBS_CENTROIDS = XOR_MINI + (
    ((30.0, -30.0), 0),
    ((-30.0, -30.0), 1),
    ((-30.0, 30.0), 0),
    ((30.0, 30.0), 1),
)

DEFAULT_STDDEV = 3.0
XOR_B_KEEP_PROB = 0.65  # down-sampling keep probability for label 1


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledPoint:
    x: tuple[float, ...]
    label: int


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, used for sampling bounds and cell clipping."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise DatasetError("rectangle corners must have equal dimension")
        if any(l >= h for l, h in zip(self.lo, self.hi)):
            raise DatasetError("rectangle must have positive extent on every axis")

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, x: Sequence[float]) -> bool:
        return all(l <= v <= h for l, v, h in zip(self.lo, x, self.hi))


@dataclass(frozen=True)
class MixtureSpec:
    """Gaussian mixture: centroids with labels, one shared isotropic stddev.

    ``per_class_sampling_weights`` maps a label to a keep probability in
    (0, 1]; draws of that label are rejected with the complementary
    probability, which skews the class balance without changing the total
    count (draws continue until the requested size is reached).
    """

    centroids: tuple[tuple[tuple[float, ...], int], ...]
    stddev: float = DEFAULT_STDDEV
    per_class_sampling_weights: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if not self.centroids:
            raise DatasetError("mixture needs at least one centroid")
        for _, p in self.per_class_sampling_weights:
            if not 0 < p <= 1:
                raise DatasetError("sampling weights must be in (0, 1]")

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(sorted({lab for _, lab in self.centroids}))


def xor_a_spec(stddev: float = DEFAULT_STDDEV) -> MixtureSpec:
    return MixtureSpec(tuple((tuple(c), l) for c, l in XOR_MINI), stddev)


def xor_b_spec(stddev: float = DEFAULT_STDDEV) -> MixtureSpec:
    return MixtureSpec(
        tuple((tuple(c), l) for c, l in XOR_MINI),
        stddev,
        per_class_sampling_weights=((1, XOR_B_KEEP_PROB),),
    )


def blobs_spec(stddev: float = DEFAULT_STDDEV) -> MixtureSpec:
    return MixtureSpec(tuple((tuple(c), l) for c, l in BLOBS_CENTROIDS), stddev)


NAMED_SPECS = {"xor-a": xor_a_spec, "xor-b": xor_b_spec, "blobs": blobs_spec}


@dataclass
class Dataset:
    train: list[LabeledPoint]
    test: list[LabeledPoint]
    sampled: list[LabeledPoint] = field(default_factory=list)
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        if "num_classes" in self.meta:
            return int(self.meta["num_classes"])
        labels = {p.label for p in self.train + self.test + self.sampled}
        return max(labels) + 1 if labels else 0


def _draw_points(spec: MixtureSpec, n: int, rng: np.random.Generator) -> list[LabeledPoint]:
    keep = dict(spec.per_class_sampling_weights)
    out: list[LabeledPoint] = []
    while len(out) < n:
        center, label = spec.centroids[rng.integers(len(spec.centroids))]
        if label in keep and rng.random() > keep[label]:
            continue
        x = tuple(float(c + rng.normal(0.0, spec.stddev)) if spec.stddev > 0 else float(c) for c in center)
        out.append(LabeledPoint(x, label))
    return out


def generate_mixture(spec: MixtureSpec, n_train: int, n_test: int, seed: int) -> Dataset:
    """Draw i.i.d. train/test splits. Deterministic for a given seed."""
    if n_train <= 0 or n_test <= 0:
        raise DatasetError("split sizes must be positive")
    rng = np.random.default_rng(seed)
    train = _draw_points(spec, n_train, rng)
    test = _draw_points(spec, n_test, rng)
    meta = {
        "stddev": spec.stddev,
        "centroids": [[list(c), l] for c, l in spec.centroids],
        "per_class_sampling_weights": [list(kv) for kv in spec.per_class_sampling_weights],
        "num_classes": len(spec.labels),
    }
    return Dataset(train, test, seed=seed, meta=meta)


def sample_uniform_labeled(net: Network, bounds: Rect, n: int, seed: int) -> list[LabeledPoint]:
    """Uniform points in the rectangle, labeled by the network's decisions."""
    if n <= 0:
        raise DatasetError("sample count must be positive")
    rng = np.random.default_rng(seed)
    lo = np.array(bounds.lo)
    hi = np.array(bounds.hi)
    xs = rng.uniform(lo, hi, size=(n, bounds.dim))
    labels = decide_batch(net, xs)
    return [LabeledPoint(tuple(map(float, x)), int(l)) for x, l in zip(xs, labels)]


def points_array(points: Sequence[LabeledPoint]) -> tuple[np.ndarray, np.ndarray]:
    xs = np.array([p.x for p in points], dtype=float)
    ys = np.array([p.label for p in points], dtype=int)
    return xs, ys


def data_bounds(points: Sequence[LabeledPoint], expand: float = 0.10) -> Rect:
    """Bounding box of the points, inflated by a relative margin per axis."""
    xs, _ = points_array(points)
    lo = xs.min(axis=0)
    hi = xs.max(axis=0)
    pad = (hi - lo) * expand
    return Rect(tuple(map(float, lo - pad)), tuple(map(float, hi + pad)))


# ---------------------------------------------------------------------------
# persistence: one CSV per split plus a JSON manifest

_SPLITS = ("train", "test", "sampled")


def save_dataset(ds: Dataset, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    sizes = {}
    for split in _SPLITS:
        points = getattr(ds, split)
        sizes[split] = len(points)
        if not points and split == "sampled":
            continue
        with open(os.path.join(out_dir, f"{split}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["x1", "x2", "label"])
            for p in points:
                writer.writerow([repr(v) for v in p.x] + [p.label])
    manifest = {"seed": ds.seed, "sizes": sizes, **ds.meta}
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def _load_split(path: str, num_classes: int) -> list[LabeledPoint]:
    points = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DatasetError(f"{path}: empty file")
        for lineno, row in enumerate(reader, start=2):
            try:
                *coords, label = row
                x = tuple(float(v) for v in coords)
                lab = int(label)
            except (ValueError, IndexError) as exc:
                raise DatasetError(f"{path}: malformed row at line {lineno}: {row!r}") from exc
            if not 0 <= lab < num_classes:
                raise DatasetError(
                    f"{path}: label {lab} out of range for {num_classes} classes at line {lineno}"
                )
            points.append(LabeledPoint(x, lab))
    return points


def load_dataset(in_dir: str) -> Dataset:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    num_classes = int(manifest.get("num_classes", 2))
    splits = {}
    for split in _SPLITS:
        path = os.path.join(in_dir, f"{split}.csv")
        splits[split] = _load_split(path, num_classes) if os.path.exists(path) else []
    meta = {k: v for k, v in manifest.items() if k not in ("seed", "sizes")}
    ds = Dataset(splits["train"], splits["test"], splits["sampled"], seed=int(manifest["seed"]), meta=meta)
    for split in _SPLITS:
        expected = manifest.get("sizes", {}).get(split)
        if expected is not None and expected != len(getattr(ds, split)):
            raise DatasetError(f"{split} size {len(getattr(ds, split))} != manifest {expected}")
    return ds
