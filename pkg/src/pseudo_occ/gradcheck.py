"""Finite-difference checks of every training loss on small F/G pairs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import DataRange
from .nn import (IDENTITY, SIGMOID, TANH, TANH2, MlpParams, MlpSpec, check_gradients, init_params,
                 leaky_relu, make_rng, mse_builder)
from .trainer import g_loss_and_grads

TOLERANCE = 1e-6
LAMBDAS = (0.0, 0.1, 1.0)
PRESETS = {"tiny-fg": ((4, 3, 4), (4, 2, 4))}

_HIDDEN_ACTS = (TANH, SIGMOID, TANH2, leaky_relu(0.1))


@dataclass
class CheckResult:
    pair: int
    loss: str
    max_rel_error: float

    @property
    def ok(self) -> bool:
        return self.max_rel_error < TOLERANCE


def simple_spec(dims) -> MlpSpec:
    """Tanh hidden layers, linear output."""
    dims = tuple(dims)
    return MlpSpec(dims, (TANH,) * (len(dims) - 2) + (IDENTITY,))


def random_pair(rng: np.random.Generator, max_layers=4, max_units=8) -> tuple[MlpSpec, MlpSpec]:
    d = int(rng.integers(2, max_units + 1))

    def one():
        n_layers = int(rng.integers(1, max_layers + 1))
        hidden = [int(rng.integers(1, max_units + 1)) for _ in range(n_layers - 1)]
        acts = [_HIDDEN_ACTS[rng.integers(len(_HIDDEN_ACTS))] for _ in hidden]
        return MlpSpec(tuple([d, *hidden, d]), tuple(acts) + (IDENTITY,))

    return one(), one()


def _corrupt(builder, factor=1.0 + 1e-3):
    def build(params):
        loss, grads = builder(params)
        return loss, MlpParams([w * factor for w in grads.weights], grads.biases)
    return build


def check_pair(f_spec: MlpSpec, g_spec: MlpSpec, seed: int, pair: int = 0, h: float = 1e-5,
               corrupt: bool = False, data_range: DataRange = DataRange.unbounded(),
               n_rows: int = 5) -> list[CheckResult]:
    """Check the normal, pseudo and generator losses (one per lambda) for one pair."""
    rng = make_rng(seed)
    d = f_spec.input_dim
    x = rng.uniform(0.1, 0.9, size=(n_rows, d)) if data_range.bounded else rng.normal(size=(n_rows, d))
    f_params = init_params(f_spec, rng)
    g_params = init_params(g_spec, rng)
    wrap = _corrupt if corrupt else (lambda b: b)

    results = [CheckResult(pair, "normal", check_gradients(
        f_params, wrap(mse_builder(f_spec, x, x)), h))]
    x_pseudo = x + 0.3 * rng.normal(size=x.shape)
    results.append(CheckResult(pair, "pseudo", check_gradients(
        f_params, wrap(mse_builder(f_spec, x_pseudo, x)), h)))
    for lam in LAMBDAS:
        def g_builder(gp, lam=lam):
            loss, grads, _, _ = g_loss_and_grads(gp, g_spec, f_params, f_spec, x, lam, data_range)
            return loss, grads
        results.append(CheckResult(pair, f"generator(lambda={lam})",
                                   check_gradients(g_params, wrap(g_builder), h)))
    return results


def run_suite(pairs: list[tuple[MlpSpec, MlpSpec]], seed: int, h: float = 1e-5,
              corrupt: bool = False) -> list[CheckResult]:
    out = []
    for i, (f_spec, g_spec) in enumerate(pairs):
        out.extend(check_pair(f_spec, g_spec, seed + i, i, h, corrupt))
    return out


def random_pairs(n: int, seed: int) -> list[tuple[MlpSpec, MlpSpec]]:
    rng = make_rng(seed)
    return [random_pair(rng) for _ in range(n)]
