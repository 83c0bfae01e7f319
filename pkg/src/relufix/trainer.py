"""Minimal gradient training for the small MLPs.

The model itself has an identity output layer; softmax is applied only
inside the cross-entropy loss, never in the network. Gradients are computed
by hand with numpy. Everything is deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import LabeledPoint, points_array
from .network import LayerParams, Network


class TrainingError(RuntimeError):
    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


@dataclass
class TrainConfig:
    optimizer: str = "sgd"  # "sgd" | "adam"
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 < self.learning_rate < 1:
            raise ValueError("learning rate must be in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def init_network(topology: tuple[int, ...], seed: int) -> Network:
    """Fresh network with weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    if len(topology) < 2:
        raise ValueError("topology needs at least input and output widths")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in zip(topology, topology[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(LayerParams(w, b))
    return Network(tuple(layers), topology[0], topology[-1])


def _forward_cache(net: Network, X: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    acts = [X]
    pres = []
    a = X
    for i, layer in enumerate(net.layers):
        z = a @ layer.weights.T + layer.biases
        pres.append(z)
        a = np.maximum(z, 0.0) if i < len(net.layers) - 1 else z
        acts.append(a)
    return pres, acts


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def loss(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    """Mean softmax cross-entropy, log-sum-exp stabilized."""
    logits = _forward_cache(net, np.asarray(X, float))[1][-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(len(y)), np.asarray(y, int)]
    return float(np.mean(logz - picked))


def loss_and_grads(net: Network, X: np.ndarray, y: np.ndarray):
    """Loss plus per-layer (dW, db) gradients, matching net.layers order."""
    X = np.asarray(X, float)
    y = np.asarray(y, int)
    n = len(X)
    pres, acts = _forward_cache(net, X)
    logits = acts[-1]
    probs = softmax(logits)

    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    value = float(np.mean(logz - shifted[np.arange(n), y]))

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n

    grads = [None] * len(net.layers)
    for i in reversed(range(len(net.layers))):
        grads[i] = (delta.T @ acts[i], delta.sum(axis=0))
        if i > 0:
            delta = (delta @ net.layers[i].weights) * (pres[i - 1] > 0)
    return value, grads


def train(net0: Network, data: list[LabeledPoint], cfg: TrainConfig) -> Network:
    """Train from net0 on the labeled points. Raises TrainingError with the
    epoch index if the loss goes non-finite."""
    if not data:
        raise TrainingError("empty training set")
    X, y = points_array(data)
    if y.max() >= net0.output_dim:
        raise TrainingError(f"label {y.max()} exceeds output_dim {net0.output_dim}")

    rng = np.random.default_rng(cfg.seed)
    weights = [l.weights.copy() for l in net0.layers]
    biases = [l.biases.copy() for l in net0.layers]

    if cfg.optimizer == "adam":
        m_w = [np.zeros_like(w) for w in weights]
        v_w = [np.zeros_like(w) for w in weights]
        m_b = [np.zeros_like(b) for b in biases]
        v_b = [np.zeros_like(b) for b in biases]
        step = 0

    def current() -> Network:
        return Network(
            tuple(LayerParams(w.copy(), b.copy()) for w, b in zip(weights, biases)),
            net0.input_dim,
            net0.output_dim,
        )

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        for start in range(0, len(X), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            value, grads = loss_and_grads(current(), X[idx], y[idx])
            if not np.isfinite(value):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
            if cfg.optimizer == "sgd":
                for i, (dw, db) in enumerate(grads):
                    weights[i] -= cfg.learning_rate * dw
                    biases[i] -= cfg.learning_rate * db
            else:
                step += 1
                for i, (dw, db) in enumerate(grads):
                    m_w[i] = ADAM_BETA1 * m_w[i] + (1 - ADAM_BETA1) * dw
                    v_w[i] = ADAM_BETA2 * v_w[i] + (1 - ADAM_BETA2) * dw * dw
                    m_b[i] = ADAM_BETA1 * m_b[i] + (1 - ADAM_BETA1) * db
                    v_b[i] = ADAM_BETA2 * v_b[i] + (1 - ADAM_BETA2) * db * db
                    mw_hat = m_w[i] / (1 - ADAM_BETA1**step)
                    vw_hat = v_w[i] / (1 - ADAM_BETA2**step)
                    mb_hat = m_b[i] / (1 - ADAM_BETA1**step)
                    vb_hat = v_b[i] / (1 - ADAM_BETA2**step)
                    weights[i] -= cfg.learning_rate * mw_hat / (np.sqrt(vw_hat) + ADAM_EPS)
                    biases[i] -= cfg.learning_rate * mb_hat / (np.sqrt(vb_hat) + ADAM_EPS)
    return current()
