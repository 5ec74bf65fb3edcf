"""Small fully-connected encoder with manual forward/backward, plus the SGD
machinery and checkpoint serialization shared with the prototype matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import IdentityPrototypeMatrix, ModalityPrototypeMatrix
from .errors import ContractViolation

CHECKPOINT_MAGIC = "SASMODEL1"


@dataclass
class EncoderParams:
    """Affine layers with rectifier activations between them, linear output."""

    weights: list[np.ndarray]  # layer l: (fan_in, fan_out)
    biases: list[np.ndarray]

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "EncoderParams":
        return EncoderParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class ForwardCache:
    inputs: np.ndarray
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]


def init_encoder(layer_dims: list[int], seed: int) -> EncoderParams:
    """He-style initialization, deterministic per seed; biases zero.

    layer_dims = [D_in, h1, ..., d]; needs at least two entries.
    """
    if len(layer_dims) < 2 or any(d <= 0 for d in layer_dims):
        raise ContractViolation("layer_dims needs >= 2 positive entries")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    n_layers = len(layer_dims) - 1
    for l in range(n_layers):
        fan_in, fan_out = layer_dims[l], layer_dims[l + 1]
        # hidden layers feed a rectifier, the output layer is linear
        scale = np.sqrt(2.0 / fan_in) if l < n_layers - 1 else np.sqrt(1.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(weights, biases)


def encoder_forward(params: EncoderParams, inputs: np.ndarray):
    if inputs.ndim != 2 or inputs.shape[1] != params.weights[0].shape[0]:
        raise ContractViolation("input dim does not match first layer")
    a = inputs
    pre, acts = [], []
    last = len(params.weights) - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w + b
        pre.append(z)
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return a, ForwardCache(inputs, pre, acts)


def encoder_backward(params: EncoderParams, cache: ForwardCache, grad_embeddings: np.ndarray):
    """Chain-rule gradients for every weight/bias, given dL/d(embeddings)."""
    if grad_embeddings.shape != cache.activations[-1].shape:
        raise ContractViolation("gradient shape does not match cached forward")
    grad_w = [np.empty_like(w) for w in params.weights]
    grad_b = [np.empty_like(b) for b in params.biases]
    delta = grad_embeddings
    for l in range(len(params.weights) - 1, -1, -1):
        if l != len(params.weights) - 1:
            delta = delta * (cache.pre_activations[l] > 0.0)
        prev = cache.inputs if l == 0 else cache.activations[l - 1]
        grad_w[l] = prev.T @ delta
        grad_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ params.weights[l].T
    return grad_w, grad_b


class SGDState:
    """Velocity buffers for one optimization target (list of arrays)."""

    def __init__(self, arrays: list[np.ndarray]):
        self.velocities = [np.zeros_like(a) for a in arrays]


def sgd_step(
    arrays: list[np.ndarray],
    grads: list[np.ndarray],
    state: SGDState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 5e-4,
) -> None:
    """In-place heavy-ball update: v <- mu v + g + wd p; p <- p - lr v."""
    if lr <= 0.0:
        raise ContractViolation("learning rate must be positive")
    if len(arrays) != len(grads) or len(arrays) != len(state.velocities):
        raise ContractViolation("parameter / gradient / state length mismatch")
    for p, g, v in zip(arrays, grads, state.velocities):
        if p.shape != g.shape:
            raise ContractViolation("parameter / gradient shape mismatch")
        v *= momentum
        v += g + weight_decay * p
        p -= lr * v


def lr_schedule(base_lr: float, epoch: int, milestones: list[int], factor: float = 0.1) -> float:
    if list(milestones) != sorted(milestones):
        raise ContractViolation("milestones must be ascending")
    drops = sum(1 for m in milestones if epoch >= m)
    return base_lr * factor**drops


def _write_array(fh, name: str, arr: np.ndarray) -> None:
    fh.write(f"{name} {' '.join(str(s) for s in arr.shape)}\n")
    fh.write(" ".join(repr(float(v)) for v in arr.ravel()) + "\n")


def _read_array(fh, expect: str) -> np.ndarray:
    header = fh.readline().split()
    if not header or header[0] != expect:
        raise ContractViolation(f"checkpoint corrupt: expected {expect}")
    shape = tuple(int(s) for s in header[1:])
    flat = np.array([float(v) for v in fh.readline().split()])
    return flat.reshape(shape)


def save_checkpoint(
    path,
    params: EncoderParams,
    modality_prototypes: ModalityPrototypeMatrix,
    identity_prototypes: IdentityPrototypeMatrix,
) -> None:
    """Versioned text checkpoint: magic header, layer dims, then row-major arrays."""
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n")
        fh.write(" ".join(str(d) for d in params.layer_dims) + "\n")
        for l, (w, b) in enumerate(zip(params.weights, params.biases)):
            _write_array(fh, f"W{l}", w)
            _write_array(fh, f"b{l}", b)
        _write_array(fh, "modality_prototypes", modality_prototypes.W)
        _write_array(fh, "identity_prototypes", identity_prototypes.W)


def load_checkpoint(path):
    with open(path) as fh:
        if fh.readline().strip() != CHECKPOINT_MAGIC:
            raise ContractViolation(f"{path} is not a {CHECKPOINT_MAGIC} checkpoint")
        dims = [int(d) for d in fh.readline().split()]
        weights, biases = [], []
        for l in range(len(dims) - 1):
            weights.append(_read_array(fh, f"W{l}"))
            biases.append(_read_array(fh, f"b{l}"))
        w_mod = _read_array(fh, "modality_prototypes")
        w_id = _read_array(fh, "identity_prototypes")
    return (
        EncoderParams(weights, biases),
        ModalityPrototypeMatrix(w_mod),
        IdentityPrototypeMatrix(w_id),
    )
