"""Encoder-decoder-encoder pipeline and checkpoint serialization.

The pipeline maps x -> z -> x_hat -> z_hat through three separate MLPs. The
second encoder shares the first encoder's architecture but never its weights;
both are drawn independently at initialization and trained independently.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ndcore import (
    Activation,
    ForwardCache,
    MlpStack,
    ShapeError,
    StackGrads,
    backward,
    forward,
    init_stack,
)


class CheckpointError(ValueError):
    """Raised when a checkpoint file is malformed or truncated."""


def default_rep_dim(input_dim: int) -> int:
    """Latent width for a given input width: min(d, 32), at least 2."""
    if input_dim < 1:
        raise ShapeError(f"input_dim must be positive, got {input_dim}")
    return max(2, min(input_dim, 32))


def default_hidden_dim(input_dim: int, rep_dim: int) -> int:
    """Hidden width: max(32, 2 * rep_dim)."""
    del input_dim  # width depends only on the latent size
    return max(32, 2 * rep_dim)


@dataclass
class EsadModel:
    """Three stacks: encoder (d->h->r), decoder (r->h->d), second encoder."""

    enc1: MlpStack
    dec: MlpStack
    enc2: MlpStack

    def __post_init__(self):
        d, r = self.enc1.in_dim, self.enc1.out_dim
        if (self.dec.in_dim, self.dec.out_dim) != (r, d):
            raise ShapeError(
                f"decoder {self.dec.in_dim}->{self.dec.out_dim} does not "
                f"mirror encoder {d}->{r}"
            )
        if (self.enc2.in_dim, self.enc2.out_dim) != (d, r):
            raise ShapeError(
                f"second encoder {self.enc2.in_dim}->{self.enc2.out_dim} "
                f"does not match encoder {d}->{r}"
            )

    @property
    def input_dim(self) -> int:
        return self.enc1.in_dim

    @property
    def rep_dim(self) -> int:
        return self.enc1.out_dim

    def stacks(self) -> list[tuple[str, MlpStack]]:
        return [("enc1", self.enc1), ("dec", self.dec), ("enc2", self.enc2)]


def new_model(
    input_dim: int,
    hidden_dim: int | None = None,
    rep_dim: int | None = None,
    seed: int = 0,
) -> EsadModel:
    """Initialize a fresh pipeline; identical seeds give identical weights.

    The three stacks draw from one seeded stream in a fixed order, so the two
    encoders start from different weights despite equal shapes.
    """
    r = default_rep_dim(input_dim) if rep_dim is None else rep_dim
    h = default_hidden_dim(input_dim, r) if hidden_dim is None else hidden_dim
    if r < 1 or h < 1:
        raise ShapeError(f"hidden/rep dims must be positive, got h={h} r={r}")
    rng = np.random.default_rng(seed)
    enc1 = init_stack([input_dim, h, r], rng)
    dec = init_stack([r, h, input_dim], rng)
    enc2 = init_stack([input_dim, h, r], rng)
    return EsadModel(enc1, dec, enc2)


@dataclass
class PipelineOutput:
    """Forward results plus the caches backward needs."""

    z: np.ndarray
    x_hat: np.ndarray
    z_hat: np.ndarray
    cache_enc1: ForwardCache
    cache_dec: ForwardCache
    cache_enc2: ForwardCache


def forward_pipeline(model: EsadModel, x) -> PipelineOutput:
    """Run x through enc1, dec, enc2. Accepts a vector or a batch matrix."""
    z, c1 = forward(model.enc1, x)
    x_hat, cd = forward(model.dec, z)
    z_hat, c2 = forward(model.enc2, x_hat)
    return PipelineOutput(z, x_hat, z_hat, c1, cd, c2)


@dataclass
class PipelineGrads:
    enc1: StackGrads
    dec: StackGrads
    enc2: StackGrads


def backward_pipeline(
    model: EsadModel,
    out: PipelineOutput,
    grad_z=None,
    grad_x_hat=None,
    grad_z_hat=None,
) -> PipelineGrads:
    """Backpropagate loss gradients taken at z, x_hat and z_hat.

    Any of the three gradients may be omitted (treated as zero). Gradients
    flowing into x_hat combine the direct term with the chain through the
    second encoder; likewise z combines the direct term with the chain
    through the decoder.
    """
    gz_hat = np.zeros_like(out.z_hat) if grad_z_hat is None else grad_z_hat
    g2, g_xhat_chain = backward(model.enc2, out.cache_enc2, gz_hat)
    g_xhat = g_xhat_chain if grad_x_hat is None else g_xhat_chain + grad_x_hat
    gd, g_z_chain = backward(model.dec, out.cache_dec, g_xhat)
    g_z = g_z_chain if grad_z is None else g_z_chain + grad_z
    g1, _ = backward(model.enc1, out.cache_enc1, g_z)
    return PipelineGrads(g1, gd, g2)


def model_param_arrays(model: EsadModel) -> tuple[list[np.ndarray], list[str]]:
    """Views of every parameter across all three stacks, with names."""
    params, names = [], []
    for stack_name, stack in model.stacks():
        for i, layer in enumerate(stack.layers):
            params.append(layer.weight)
            names.append(f"{stack_name}.layer{i}.weight")
            params.append(layer.bias)
            names.append(f"{stack_name}.layer{i}.bias")
    return params, names


def flatten_pipeline_grads(grads: PipelineGrads) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for stack_grads in (grads.enc1, grads.dec, grads.enc2):
        for gw, gb in stack_grads:
            out.append(gw)
            out.append(gb)
    return out


# Checkpoint layout (all little-endian):
#   magic "EDEMLP01" (8 bytes)
#   u32 n_stacks, then per stack: u32 n_layers, then per layer:
#     u32 out_dim, u32 in_dim, u8 activation (0=relu, 1=identity),
#     out*in f64 weights row-major, out f64 biases.
_MAGIC = b"EDEMLP01"
_ACT_CODE = {Activation.RELU: 0, Activation.IDENTITY: 1}
_CODE_ACT = {v: k for k, v in _ACT_CODE.items()}


def _write_stack(fh, stack: MlpStack) -> None:
    fh.write(struct.pack("<I", len(stack.layers)))
    for layer in stack.layers:
        fh.write(
            struct.pack(
                "<IIB", layer.out_dim, layer.in_dim, _ACT_CODE[layer.activation]
            )
        )
        fh.write(np.ascontiguousarray(layer.weight, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())


def _read_exact(fh, n: int) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: wanted {n} bytes, got {len(buf)}")
    return buf


def _read_stack(fh) -> MlpStack:
    (n_layers,) = struct.unpack("<I", _read_exact(fh, 4))
    if n_layers == 0 or n_layers > 1024:
        raise CheckpointError(f"implausible layer count {n_layers}")
    from .ndcore import DenseLayer

    layers = []
    for _ in range(n_layers):
        out_dim, in_dim, code = struct.unpack("<IIB", _read_exact(fh, 9))
        if code not in _CODE_ACT:
            raise CheckpointError(f"unknown activation code {code}")
        w = np.frombuffer(
            _read_exact(fh, 8 * out_dim * in_dim), dtype="<f8"
        ).reshape(out_dim, in_dim)
        b = np.frombuffer(_read_exact(fh, 8 * out_dim), dtype="<f8")
        layers.append(
            DenseLayer(w.astype(np.float64), b.astype(np.float64), _CODE_ACT[code])
        )
    return MlpStack(layers)


def save_model(model: EsadModel, path) -> None:
    """Write the model to a binary checkpoint. Round-trips bit-exactly."""
    with open(Path(path), "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", 3))
        for _, stack in model.stacks():
            _write_stack(fh, stack)


def load_model(path) -> EsadModel:
    with open(Path(path), "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        (n_stacks,) = struct.unpack("<I", _read_exact(fh, 4))
        if n_stacks != 3:
            raise CheckpointError(f"expected 3 stacks, found {n_stacks}")
        enc1 = _read_stack(fh)
        dec = _read_stack(fh)
        enc2 = _read_stack(fh)
        trailing = fh.read(1)
        if trailing:
            raise CheckpointError("trailing bytes after model data")
    return EsadModel(enc1, dec, enc2)
