"""Feedforward encoder with explicit forward/backward passes.

Hidden layers use ReLU; the output layer is linear. The training loop injects
the gradient of the hashing objective at the output and calls :func:`backward`.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError
from .numerics import SeededRng, as_matrix, check_finite, matmul

CHECKPOINT_MAGIC = b"DSAHNET1"
DEFAULT_WEIGHT_DECAY = 5e-4


@dataclass(frozen=True)
class EncoderParams:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    activation: str = "relu"

    def __post_init__(self):
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("layer count does not match layer_dims")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_dims[l], self.layer_dims[l + 1])
            if W.shape != expect or b.shape != (expect[1],):
                raise DimensionError(f"layer {l}: weight {W.shape}, bias {b.shape}, expected {expect}")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def same_as(self, other: "EncoderParams") -> bool:
        """Bit-level equality of every weight and bias."""
        return self.layer_dims == other.layer_dims and all(
            np.array_equal(a, b)
            for a, b in zip(self.weights + self.biases, other.weights + other.biases)
        )


@dataclass(frozen=True)
class ForwardTrace:
    inputs: np.ndarray
    pre_activations: tuple[np.ndarray, ...]
    activations: tuple[np.ndarray, ...]

    @property
    def outputs(self) -> np.ndarray:
        return self.activations[-1]


@dataclass(frozen=True)
class Gradients:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]


def init_params(layer_dims: Sequence[int], rng: SeededRng) -> EncoderParams:
    """Glorot-uniform weights, zero biases."""
    dims = tuple(int(v) for v in layer_dims)
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"need at least two positive layer dims, got {dims}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(dims, tuple(weights), tuple(biases))


def forward(params: EncoderParams, batch) -> ForwardTrace:
    x = as_matrix(batch)
    if x.shape[1] != params.input_dim:
        raise DimensionError(f"batch has {x.shape[1]} columns, encoder expects {params.input_dim}")
    pre, act = [], []
    h = x
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = matmul(h, W) + b
        h = z if l == params.n_layers - 1 else np.maximum(z, 0.0)
        pre.append(z)
        act.append(h)
    return ForwardTrace(x, tuple(pre), tuple(act))


def backward(params: EncoderParams, trace: ForwardTrace, grad_output) -> Gradients:
    """Chain rule from an injected ``dL/d(outputs)`` to every weight and bias."""
    delta = as_matrix(grad_output)
    if delta.shape != trace.outputs.shape:
        raise DimensionError(
            f"grad_output shape {delta.shape} does not match outputs {trace.outputs.shape}"
        )
    gw = [None] * params.n_layers
    gb = [None] * params.n_layers
    for l in range(params.n_layers - 1, -1, -1):
        below = trace.activations[l - 1] if l > 0 else trace.inputs
        gw[l] = matmul(below.T, delta)
        gb[l] = delta.sum(axis=0)
        if l > 0:
            delta = matmul(delta, params.weights[l].T) * (trace.pre_activations[l - 1] > 0)
    return Gradients(tuple(gw), tuple(gb))


def sgd_step(
    params: EncoderParams, grads: Gradients, lr: float, weight_decay: float = DEFAULT_WEIGHT_DECAY
) -> EncoderParams:
    """Plain SGD; weight decay applies to weights only."""
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    weights = tuple(
        check_finite(W - lr * (g + weight_decay * W), "updated weights")
        for W, g in zip(params.weights, grads.weights)
    )
    biases = tuple(
        check_finite(b - lr * g, "updated biases") for b, g in zip(params.biases, grads.biases)
    )
    return EncoderParams(params.layer_dims, weights, biases, params.activation)


def sign_codes(values) -> np.ndarray:
    """Elementwise sign into {-1, +1} as int8, with sign(0) = +1."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


def encode_binary(params: EncoderParams, features) -> np.ndarray:
    return sign_codes(forward(params, features).outputs)


def save_checkpoint(path, params: EncoderParams) -> None:
    """Header ``DSAHNET1``, u32 layer count, u32 dims, then per layer the
    row-major weights followed by the biases as little-endian doubles."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", params.n_layers))
        fh.write(struct.pack(f"<{len(params.layer_dims)}I", *params.layer_dims))
        for W, b in zip(params.weights, params.biases):
            fh.write(W.astype("<f8").tobytes())
            fh.write(b.astype("<f8").tobytes())


def load_checkpoint(path) -> EncoderParams:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not an encoder checkpoint")
    try:
        (n_layers,) = struct.unpack_from("<I", raw, 8)
        dims = struct.unpack_from(f"<{n_layers + 1}I", raw, 12)
    except struct.error:
        raise DataError(f"{path}: truncated checkpoint header") from None
    offset = 12 + 4 * (n_layers + 1)
    expected = offset + 8 * sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))
    if len(raw) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(raw)}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        W = np.frombuffer(raw, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(raw, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(W.astype(np.float64).reshape(fan_in, fan_out))
        biases.append(b.astype(np.float64))
    return EncoderParams(tuple(dims), tuple(weights), tuple(biases))
