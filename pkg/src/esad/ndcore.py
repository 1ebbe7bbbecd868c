"""Dense-layer primitives: float64 arrays, forward/backward passes, SGD.

Everything here is deterministic. Given the same inputs (and the same rng for
initialization) every function returns bit-identical results across calls.
Batch rows are independent samples; `backward` sums gradients over rows, so
callers bake any 1/n averaging weights into the incoming gradient rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operands have incompatible or malformed shapes."""


class Activation(enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


def as_matrix(a, name: str = "array") -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains non-finite entries")
    return out


def matmul(a, b) -> np.ndarray:
    """Matrix product of two 2-D arrays with explicit shape checking."""
    am = as_matrix(a, "left operand")
    bm = as_matrix(b, "right operand")
    if am.shape[1] != bm.shape[0]:
        raise ShapeError(
            f"inner dimensions differ: {am.shape} @ {bm.shape}"
        )
    return am @ bm


def _apply_activation(pre: np.ndarray, act: Activation) -> np.ndarray:
    if act is Activation.RELU:
        return np.maximum(pre, 0.0)
    return pre


def _activation_grad(pre: np.ndarray, act: Activation) -> np.ndarray:
    # ReLU subgradient at exactly 0 is taken as 0.
    if act is Activation.RELU:
        return (pre > 0.0).astype(np.float64)
    return np.ones_like(pre)


@dataclass
class DenseLayer:
    """Affine map plus activation: out = act(x @ weight.T + bias).

    weight has shape (out_dim, in_dim), bias has shape (out_dim,).
    """

    weight: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.RELU

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2:
            raise ShapeError(f"weight must be 2-D, got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[0],):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weight rows "
                f"{self.weight.shape[0]}"
            )

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


@dataclass
class MlpStack:
    """A sequence of dense layers applied in order."""

    layers: list[DenseLayer]

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("stack needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise ShapeError(
                    f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def init_stack(
    dims: list[int],
    rng: np.random.Generator,
    hidden_activation: Activation = Activation.RELU,
    output_activation: Activation = Activation.IDENTITY,
) -> MlpStack:
    """Build a stack with Glorot-uniform weights and zero biases.

    dims lists layer widths input-first, e.g. [6, 32, 4] gives two layers.
    Weight entries are drawn uniformly from +-sqrt(6 / (in + out)) in a fixed
    order, so the same rng state always yields the same stack.
    """
    if len(dims) < 2:
        raise ShapeError("need at least an input and an output width")
    if any(d < 1 for d in dims):
        raise ShapeError(f"layer widths must be positive, got {dims}")
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims, dims[1:])):
        limit = np.sqrt(6.0 / (d_in + d_out))
        weight = rng.uniform(-limit, limit, size=(d_out, d_in))
        act = output_activation if i == len(dims) - 2 else hidden_activation
        layers.append(DenseLayer(weight, np.zeros(d_out), act))
    return MlpStack(layers)


@dataclass
class ForwardCache:
    """Intermediates needed by backward: per-layer inputs and pre-activations."""

    inputs: list[np.ndarray]
    pres: list[np.ndarray]
    batched: bool


# Per-layer gradients, aligned with stack.layers: [(dW, db), ...]
StackGrads = list[tuple[np.ndarray, np.ndarray]]


def forward(stack: MlpStack, x) -> tuple[np.ndarray, ForwardCache]:
    """Run the stack on a single vector (in_dim,) or a batch (b, in_dim)."""
    arr = np.asarray(x, dtype=np.float64)
    batched = arr.ndim == 2
    if not batched:
        if arr.ndim != 1:
            raise ShapeError(f"input must be 1-D or 2-D, got {arr.shape}")
        arr = arr[None, :]
    if arr.shape[1] != stack.in_dim:
        raise ShapeError(
            f"input width {arr.shape[1]} does not match stack in_dim "
            f"{stack.in_dim}"
        )
    inputs, pres = [], []
    cur = arr
    for layer in stack.layers:
        inputs.append(cur)
        pre = cur @ layer.weight.T + layer.bias
        pres.append(pre)
        cur = _apply_activation(pre, layer.activation)
    out = cur if batched else cur[0]
    return out, ForwardCache(inputs, pres, batched)


def backward(
    stack: MlpStack, cache: ForwardCache, grad_out
) -> tuple[StackGrads, np.ndarray]:
    """Backpropagate grad_out through the stack.

    grad_out matches the forward output shape. Returns per-layer parameter
    gradients and the gradient with respect to the stack input. Gradients are
    summed over batch rows.
    """
    g = np.asarray(grad_out, dtype=np.float64)
    if not cache.batched:
        g = g[None, :]
    if g.shape != cache.pres[-1].shape:
        raise ShapeError(
            f"grad shape {g.shape} does not match output {cache.pres[-1].shape}"
        )
    grads: StackGrads = [None] * len(stack.layers)  # type: ignore[list-item]
    for i in range(len(stack.layers) - 1, -1, -1):
        layer = stack.layers[i]
        g_pre = g * _activation_grad(cache.pres[i], layer.activation)
        grads[i] = (g_pre.T @ cache.inputs[i], g_pre.sum(axis=0))
        g = g_pre @ layer.weight
    return grads, (g if cache.batched else g[0])


def add_grads(a: StackGrads, b: StackGrads) -> StackGrads:
    return [(aw + bw, ab + bb) for (aw, ab), (bw, bb) in zip(a, b)]


def scale_grads(g: StackGrads, factor: float) -> StackGrads:
    return [(factor * gw, factor * gb) for gw, gb in g]


def zero_grads(stack: MlpStack) -> StackGrads:
    return [
        (np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in stack.layers
    ]


@dataclass
class SgdConfig:
    """Plain SGD with a stepped learning-rate schedule.

    The rate at a given epoch is initial_lr * decay_factor ** (epoch //
    decay_every). No momentum, no weight decay.
    """

    initial_lr: float = 0.1
    decay_every: int = 50
    decay_factor: float = 0.5
    batch_size: int = 32
    epochs: int = 200

    def __post_init__(self):
        if self.initial_lr <= 0:
            raise ValueError(f"initial_lr must be positive, got {self.initial_lr}")
        if self.decay_every < 1:
            raise ValueError(f"decay_every must be >= 1, got {self.decay_every}")
        if not 0 < self.decay_factor <= 1:
            raise ValueError(
                f"decay_factor must be in (0, 1], got {self.decay_factor}"
            )
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")


def lr_at_epoch(cfg: SgdConfig, epoch: int) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return cfg.initial_lr * cfg.decay_factor ** (epoch // cfg.decay_every)


def global_grad_norm(grads_list: list[StackGrads]) -> float:
    """L2 norm of all gradients across stacks viewed as one vector."""
    total = 0.0
    for stack_grads in grads_list:
        for gw, gb in stack_grads:
            total += float(np.sum(gw * gw)) + float(np.sum(gb * gb))
    return float(np.sqrt(total))


def clip_global_norm(
    grads_list: list[StackGrads], max_norm: float
) -> list[StackGrads]:
    """Rescale gradients so their joint L2 norm is at most max_norm.

    Identity whenever the norm is already within bounds or max_norm <= 0.
    Caps the step size without changing the step direction; a batch whose
    labeled-group average runs over one or two samples can otherwise produce
    steps large enough to destabilize plain SGD.
    """
    if max_norm <= 0:
        return grads_list
    total = global_grad_norm(grads_list)
    if total <= max_norm:
        return grads_list
    scale = max_norm / total
    return [scale_grads(g, scale) for g in grads_list]


def sgd_step(stack: MlpStack, grads: StackGrads, lr: float) -> None:
    """In-place parameter update: param -= lr * grad."""
    if len(grads) != len(stack.layers):
        raise ShapeError(
            f"got {len(grads)} gradient pairs for {len(stack.layers)} layers"
        )
    for layer, (gw, gb) in zip(stack.layers, grads):
        if gw.shape != layer.weight.shape or gb.shape != layer.bias.shape:
            raise ShapeError(
                f"gradient shapes {gw.shape}/{gb.shape} do not match layer "
                f"{layer.weight.shape}/{layer.bias.shape}"
            )
        layer.weight -= lr * gw
        layer.bias -= lr * gb


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against central differences."""

    max_rel_err: float
    n_params: int
    n_flagged: int
    worst_param: str
    flagged: list[tuple[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.n_flagged == 0


def check_gradients_arrays(
    params: list[np.ndarray],
    analytic: list[np.ndarray],
    eval_loss,
    names: list[str] | None = None,
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Central-difference check of analytic gradients for arbitrary arrays.

    params are mutated in place during probing and restored afterwards.
    eval_loss() recomputes the scalar loss from the current parameter values.
    Relative error per entry is |a - n| / max(|a|, |n|, 1e-6).
    """
    if len(params) != len(analytic):
        raise ShapeError("params and analytic gradients must align")
    if names is None:
        names = [f"param[{i}]" for i in range(len(params))]
    max_rel = 0.0
    worst = ""
    flagged: list[tuple[str, float]] = []
    for arr, grad, name in zip(params, analytic, names):
        if arr.shape != grad.shape:
            raise ShapeError(
                f"{name}: gradient shape {grad.shape} != param {arr.shape}"
            )
        flat = arr.reshape(-1)
        gflat = np.asarray(grad, dtype=np.float64).reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = eval_loss()
            flat[idx] = orig - step
            down = eval_loss()
            flat[idx] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise ValueError(f"loss non-finite while probing {name}[{idx}]")
            numeric = (up - down) / (2.0 * step)
            a = gflat[idx]
            rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
            label = f"{name}[{idx}]"
            if rel > max_rel:
                max_rel, worst = rel, label
            if rel > tolerance:
                flagged.append((label, rel))
    n_params = sum(p.size for p in params)
    return GradCheckReport(max_rel, n_params, len(flagged), worst, flagged)


def stack_param_arrays(stack: MlpStack) -> tuple[list[np.ndarray], list[str]]:
    """Views of all parameters in a stack, with human-readable names."""
    params, names = [], []
    for i, layer in enumerate(stack.layers):
        params.append(layer.weight)
        names.append(f"layer{i}.weight")
        params.append(layer.bias)
        names.append(f"layer{i}.bias")
    return params, names


def flatten_stack_grads(grads: StackGrads) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for gw, gb in grads:
        out.append(gw)
        out.append(gb)
    return out


def grad_check(
    stack: MlpStack,
    loss_fn,
    tolerance: float = 1e-4,
    step: float = 1e-5,
) -> GradCheckReport:
    """Check loss_fn's analytic gradients for one stack.

    loss_fn(stack) returns (loss, StackGrads). The analytic gradients are
    taken once at the current parameters; finite differences then probe each
    parameter entry with the rest frozen.
    """
    loss, grads = loss_fn(stack)
    if not np.isfinite(loss):
        raise ValueError("loss is non-finite at the evaluation point")
    params, names = stack_param_arrays(stack)
    return check_gradients_arrays(
        params,
        flatten_stack_grads(grads),
        lambda: loss_fn(stack)[0],
        names,
        tolerance,
        step,
    )
