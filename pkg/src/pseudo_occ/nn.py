"""Dense MLP engine: forward/backward passes, MSE loss, Adam and a gradient checker.

Batches are plain 2-D ``float64`` numpy arrays, rows are samples. Parameters
live in :class:`MlpParams`; the heavy lifting is delegated to
:mod:`pseudo_occ.kernels`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import kernels


class NonFiniteError(FloatingPointError):
    """A loss or activation became NaN/Inf."""


@dataclass(frozen=True)
class Activation:
    name: str
    slope: float = 0.0

    _CODES = {
        "identity": kernels.IDENTITY,
        "tanh": kernels.TANH,
        "tanh2": kernels.TANH2,
        "sigmoid": kernels.SIGMOID,
        "leaky_relu": kernels.LEAKY_RELU,
        "relu": kernels.RELU,
    }

    def __post_init__(self):
        if self.name not in self._CODES:
            raise ValueError(f"unknown activation {self.name!r}")

    @property
    def code(self) -> int:
        return self._CODES[self.name]

    def __str__(self):
        if self.name == "leaky_relu":
            return f"leaky_relu({self.slope!r})"
        return self.name


IDENTITY = Activation("identity")
TANH = Activation("tanh")
TANH2 = Activation("tanh2")  # 2 * tanh, range (-2, 2)
SIGMOID = Activation("sigmoid")
RELU = Activation("relu")


def leaky_relu(slope: float = 0.01) -> Activation:
    return Activation("leaky_relu", float(slope))


def parse_activation(text: str) -> Activation:
    """Inverse of ``str(Activation)``."""
    text = text.strip()
    if text.startswith("leaky_relu(") and text.endswith(")"):
        return leaky_relu(float(text[len("leaky_relu("):-1]))
    return Activation(text)


@dataclass(frozen=True)
class MlpSpec:
    layer_dims: tuple[int, ...]
    activations: tuple[Activation, ...]

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        object.__setattr__(self, "activations", tuple(self.activations))
        if len(self.layer_dims) < 2:
            raise ValueError("an MLP needs at least input and output dims")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"all layer dims must be >= 1, got {self.layer_dims}")
        if len(self.activations) != len(self.layer_dims) - 1:
            raise ValueError(
                f"{len(self.layer_dims) - 1} affine layers but {len(self.activations)} activations"
            )

    @property
    def n_layers(self) -> int:
        return len(self.activations)

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def final_activation(self) -> Activation:
        return self.activations[-1]


@dataclass
class MlpParams:
    weights: list[np.ndarray]  # each (out_dim, in_dim)
    biases: list[np.ndarray]

    def arrays(self) -> list[np.ndarray]:
        """Weights and biases interleaved, layer by layer."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def zeros_like(self) -> "MlpParams":
        return MlpParams([np.zeros_like(w) for w in self.weights],
                         [np.zeros_like(b) for b in self.biases])

    def tobytes(self) -> bytes:
        return b"".join(a.astype("<f8").tobytes() for a in self.arrays())

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def check_shapes(self, spec: MlpSpec):
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise ValueError("parameter count does not match spec")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (spec.layer_dims[k + 1], spec.layer_dims[k])
            if w.shape != expect or b.shape != (expect[0],):
                raise ValueError(
                    f"layer {k}: weight {w.shape}/bias {b.shape}, expected {expect}/({expect[0]},)"
                )


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; same seed gives the same stream."""
    return np.random.Generator(np.random.Philox(int(seed)))


def as_batch(x, cols: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a C-contiguous float64 matrix, checking width and finiteness."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D batch, got shape {x.shape}")
    if cols is not None and x.shape[1] != cols:
        raise ValueError(f"expected {cols} columns, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise NonFiniteError("batch contains NaN or Inf")
    return x


def init_params(spec: MlpSpec, rng: np.random.Generator) -> MlpParams:
    """Weights uniform in +-1/sqrt(fan_in), biases zero."""
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(np.ascontiguousarray(rng.uniform(-bound, bound, size=(fan_out, fan_in))))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


class ForwardCache(NamedTuple):
    inputs: list[np.ndarray]  # input to each affine layer
    pre: list[np.ndarray]     # z = x W^T + b
    post: list[np.ndarray]    # act(z)


def forward(params: MlpParams, spec: MlpSpec, x) -> tuple[np.ndarray, ForwardCache]:
    x = as_batch(x, spec.input_dim)
    inputs, pre, post = [], [], []
    h = x
    for w, b, act in zip(params.weights, params.biases, spec.activations):
        z, a = kernels.dense_forward(h, w, b, act.code, act.slope)
        inputs.append(h)
        pre.append(z)
        post.append(a)
        h = a
    if not np.isfinite(h).all():
        raise NonFiniteError("forward pass produced NaN or Inf")
    return h, ForwardCache(inputs, pre, post)


def predict(params: MlpParams, spec: MlpSpec, x) -> np.ndarray:
    return forward(params, spec, x)[0]


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch mean of the per-sample ``(1/d) * ||pred - target||^2`` and its gradient."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    n, d = pred.shape
    diff = pred - target
    loss = float(kernels.row_sq_norms(diff).sum() / (n * d))
    if not np.isfinite(loss):
        raise NonFiniteError("MSE loss is not finite")
    return loss, diff * (2.0 / (n * d))


def backward(params: MlpParams, spec: MlpSpec, cache: ForwardCache,
             grad_output: np.ndarray) -> tuple[MlpParams, np.ndarray]:
    """Backpropagate ``grad_output`` (dL/d output); returns parameter grads and dL/d input."""
    if len(cache.pre) != spec.n_layers:
        raise ValueError("cache does not come from a forward pass of this spec")
    g = np.ascontiguousarray(grad_output, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ValueError(f"grad_output shape {g.shape} != output shape {cache.post[-1].shape}")
    gws = [None] * spec.n_layers
    gbs = [None] * spec.n_layers
    for k in reversed(range(spec.n_layers)):
        act = spec.activations[k]
        gws[k], gbs[k], g = kernels.dense_backward(
            cache.inputs[k], params.weights[k], cache.pre[k], cache.post[k], g,
            act.code, act.slope)
    return MlpParams(gws, gbs), g


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: MlpParams | None = field(default=None, repr=False)
    v: MlpParams | None = field(default=None, repr=False)

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in (0, 1)")
        if self.lr < 0 or self.eps <= 0:
            raise ValueError("Adam needs lr >= 0 and eps > 0")

    @classmethod
    def for_params(cls, params: MlpParams, lr: float, **kw) -> "AdamState":
        return cls(lr=lr, m=params.zeros_like(), v=params.zeros_like(), **kw)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """Bias-corrected Adam update. Mutates ``params`` and ``state`` in place and returns both."""
    if state.m is None:
        state.m, state.v = params.zeros_like(), params.zeros_like()
    ps, gs = params.arrays(), grads.arrays()
    ms, vs = state.m.arrays(), state.v.arrays()
    if len(ps) != len(gs) or any(p.shape != g.shape for p, g in zip(ps, gs)):
        raise ValueError("gradient shapes do not match parameters")
    if any(p.shape != m.shape for p, m in zip(ps, ms)):
        raise ValueError("optimizer state does not match parameters")
    state.t += 1
    for p, g, m, v in zip(ps, gs, ms, vs):
        kernels.adam_update(p, g, m, v, state.lr, state.beta1, state.beta2, state.eps, state.t)
    return params, state


LossBuilder = Callable[[MlpParams], "tuple[float, MlpParams]"]

# denominators below this are treated as this, so near-zero gradient entries
# are judged on absolute error instead of blowing up the ratio
REL_ERROR_FLOOR = 1e-4


def check_gradients(params: MlpParams, loss_builder: LossBuilder, h: float = 1e-5) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``loss_builder(params)`` must return ``(loss, grads)``. Parameters are
    perturbed in place and restored afterwards.
    """
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    loss, grads = loss_builder(params)
    if not np.isfinite(loss):
        raise NonFiniteError("loss is not finite")
    worst = 0.0
    for p, g in zip(params.arrays(), grads.arrays()):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_builder(params)[0]
            flat[i] = orig - h
            down = loss_builder(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NonFiniteError("loss is not finite under perturbation")
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(numeric), abs(gflat[i]), REL_ERROR_FLOOR)
            worst = max(worst, abs(numeric - gflat[i]) / denom)
    return worst


def grad_check(spec: MlpSpec, loss_builder: LossBuilder, rng: np.random.Generator,
               h: float = 1e-5) -> float:
    """Initialise parameters for ``spec`` from ``rng`` and run :func:`check_gradients`."""
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    return check_gradients(init_params(spec, rng), loss_builder, h)


def mse_builder(spec: MlpSpec, x: np.ndarray, target: np.ndarray) -> LossBuilder:
    """Loss builder for ``mse(forward(x), target)``."""
    def build(params):
        out, cache = forward(params, spec, x)
        loss, g = mse_loss(out, target)
        return loss, backward(params, spec, cache, g)[0]
    return build

