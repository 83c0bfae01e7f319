"""Small feed-forward ReLU classifiers with individually addressable parameters.

Hidden layers apply ReLU, the output layer is affine (no softmax). Parameters
are addressed by (layer, kind, row, col) so single scalars can be freed or
replaced without touching the rest of the model.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

WEIGHT = "weight"
BIAS = "bias"


class AddressError(ValueError):
    """A WeightId does not point at an existing parameter."""


@dataclass(frozen=True, order=True)
class WeightId:
    """Address of one scalar parameter. ``layer`` is 1-based, indices 0-based.

    For biases ``col`` is unused and fixed to 0.
    """

    layer: int
    kind: str
    row: int
    col: int = 0

    def __post_init__(self):
        if self.kind not in (WEIGHT, BIAS):
            raise AddressError(f"unknown parameter kind {self.kind!r}")
        if self.kind == BIAS and self.col != 0:
            raise AddressError("bias addresses must have col=0")


@dataclass(frozen=True)
class LayerParams:
    """One affine layer: ``weights`` has shape (out_width, in_width)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        b = np.asarray(self.biases, dtype=float)
        if w.ndim != 2 or b.ndim != 1:
            raise ValueError("weights must be a matrix and biases a vector")
        if w.shape[0] != b.shape[0]:
            raise ValueError(
                f"bias length {b.shape[0]} does not match output width {w.shape[0]}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def out_width(self) -> int:
        return self.weights.shape[0]

    @property
    def in_width(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Network:
    """Layered ReLU multilayer perceptron. Immutable once constructed."""

    layers: tuple[LayerParams, ...]
    input_dim: int
    output_dim: int

    def __post_init__(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        object.__setattr__(self, "layers", tuple(self.layers))
        width = self.input_dim
        for i, layer in enumerate(self.layers, start=1):
            if layer.in_width != width:
                raise ValueError(
                    f"layer {i} expects input width {layer.in_width}, got {width}"
                )
            width = layer.out_width
        if width != self.output_dim:
            raise ValueError(
                f"last layer outputs {width}, expected output_dim={self.output_dim}"
            )

    @property
    def topology(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(l.out_width for l in self.layers)


def make_network(layer_params: Sequence[tuple]) -> Network:
    """Build a Network from [(weights, biases), ...] matrices."""
    layers = tuple(LayerParams(np.asarray(w, float), np.asarray(b, float)) for w, b in layer_params)
    return Network(layers, layers[0].in_width, layers[-1].out_width)


def forward(net: Network, x: Sequence[float]) -> np.ndarray:
    """Evaluate the network on one input vector."""
    a = np.asarray(x, dtype=float)
    if a.shape != (net.input_dim,):
        raise ValueError(f"input must have length {net.input_dim}, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("input entries must be finite")
    for i, layer in enumerate(net.layers):
        a = layer.weights @ a + layer.biases
        if i < len(net.layers) - 1:
            a = np.maximum(a, 0.0)
    return a


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Evaluate a batch of inputs, shape (n, input_dim) -> (n, output_dim)."""
    a = np.asarray(xs, dtype=float)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"batch must have shape (n, {net.input_dim})")
    for i, layer in enumerate(net.layers):
        a = a @ layer.weights.T + layer.biases
        if i < len(net.layers) - 1:
            a = np.maximum(a, 0.0)
    return a


def decide(net: Network, x: Sequence[float]) -> int:
    """Predicted class: argmax of the outputs, ties broken by lowest index."""
    return int(np.argmax(forward(net, x)))


def decide_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    return np.argmax(forward_batch(net, xs), axis=1)


def forward_exact(net: Network, x: Sequence[Fraction]) -> list[Fraction]:
    """Forward pass in exact rational arithmetic.

    Parameters are taken at their exact binary-float values, so this agrees
    bit-for-bit with what the SMT encoding asserts about the same network.
    """
    a = [Fraction(v) for v in x]
    if len(a) != net.input_dim:
        raise ValueError(f"input must have length {net.input_dim}")
    for i, layer in enumerate(net.layers):
        nxt = []
        for r in range(layer.out_width):
            acc = Fraction(layer.biases[r])
            for c in range(layer.in_width):
                w = layer.weights[r, c]
                if w != 0.0:
                    acc += Fraction(w) * a[c]
            nxt.append(acc)
        if i < len(net.layers) - 1:
            nxt = [v if v > 0 else Fraction(0) for v in nxt]
        a = nxt
    return a


def decide_exact(net: Network, x: Sequence[Fraction]) -> int:
    out = forward_exact(net, x)
    best = 0
    for j in range(1, len(out)):
        if out[j] > out[best]:
            best = j
    return best


def param_count(net: Network) -> int:
    return sum(l.out_width * l.in_width + l.out_width for l in net.layers)


def enumerate_weight_ids(
    net: Network,
    layers: Iterable[int] | None = None,
    kinds: Iterable[str] | None = None,
) -> list[WeightId]:
    """All parameter addresses in a fixed order: layer-major, weights before
    biases, row-major. Optional restriction to given 1-based layers or kinds."""
    layer_set = set(layers) if layers is not None else None
    kind_set = set(kinds) if kinds is not None else None
    ids: list[WeightId] = []
    for li, layer in enumerate(net.layers, start=1):
        if layer_set is not None and li not in layer_set:
            continue
        if kind_set is None or WEIGHT in kind_set:
            for r in range(layer.out_width):
                for c in range(layer.in_width):
                    ids.append(WeightId(li, WEIGHT, r, c))
        if kind_set is None or BIAS in kind_set:
            for r in range(layer.out_width):
                ids.append(WeightId(li, BIAS, r))
    return ids


def get_param(net: Network, wid: WeightId) -> float:
    _check_address(net, wid)
    layer = net.layers[wid.layer - 1]
    if wid.kind == WEIGHT:
        return float(layer.weights[wid.row, wid.col])
    return float(layer.biases[wid.row])


def _check_address(net: Network, wid: WeightId) -> None:
    if not 1 <= wid.layer <= len(net.layers):
        raise AddressError(f"layer {wid.layer} out of range")
    layer = net.layers[wid.layer - 1]
    if wid.kind == WEIGHT:
        if not (0 <= wid.row < layer.out_width and 0 <= wid.col < layer.in_width):
            raise AddressError(f"weight index {wid} out of range")
    else:
        if not 0 <= wid.row < layer.out_width:
            raise AddressError(f"bias index {wid} out of range")


def substitute(net: Network, assignment: dict[WeightId, float | Fraction]) -> Network:
    """Return a copy of the network with the addressed parameters replaced."""
    for wid in assignment:
        _check_address(net, wid)
    new_layers = []
    for li, layer in enumerate(net.layers, start=1):
        w = layer.weights.copy()
        b = layer.biases.copy()
        for wid, value in assignment.items():
            if wid.layer != li:
                continue
            if wid.kind == WEIGHT:
                w[wid.row, wid.col] = float(value)
            else:
                b[wid.row] = float(value)
        new_layers.append(LayerParams(w, b))
    return Network(tuple(new_layers), net.input_dim, net.output_dim)


def to_json(net: Network) -> str:
    """Serialize with reals as decimal strings that round-trip exactly."""
    doc = {
        "input_dim": net.input_dim,
        "output_dim": net.output_dim,
        "layers": [
            {
                "weights": [[repr(float(v)) for v in row] for row in layer.weights],
                "biases": [repr(float(v)) for v in layer.biases],
            }
            for layer in net.layers
        ],
    }
    return json.dumps(doc, indent=2)


def from_json(text: str) -> Network:
    doc = json.loads(text)
    layers = tuple(
        LayerParams(
            np.array([[float(v) for v in row] for row in layer["weights"]], dtype=float),
            np.array([float(v) for v in layer["biases"]], dtype=float),
        )
        for layer in doc["layers"]
    )
    return Network(layers, int(doc["input_dim"]), int(doc["output_dim"]))


def save(net: Network, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(net))


def load(path) -> Network:
    with open(path) as fh:
        return from_json(fh.read())
