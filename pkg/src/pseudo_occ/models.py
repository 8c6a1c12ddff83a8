"""Architectures for the main autoencoder F and the noise generator G."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .nn import IDENTITY, SIGMOID, TANH, TANH2, MlpSpec

KDDCUP_INPUT_DIM = 118
KDDCUP_LATENT_DIM = 3


@dataclass(frozen=True)
class DataRange:
    """Value range of the model inputs; ``lo``/``hi`` are None when unbounded."""

    lo: float | None = None
    hi: float | None = None

    def __post_init__(self):
        if (self.lo is None) != (self.hi is None):
            raise ValueError("give both bounds or neither")
        if self.lo is not None:
            object.__setattr__(self, "lo", float(self.lo))
            object.__setattr__(self, "hi", float(self.hi))
        if self.bounded and not self.lo < self.hi:
            raise ValueError(f"need lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def unbounded(cls) -> "DataRange":
        return cls()

    @classmethod
    def parse(cls, text: str) -> "DataRange":
        """Parse ``unbounded`` or ``lo:hi``."""
        text = text.strip()
        if text == "unbounded":
            return cls()
        lo, hi = text.split(":")
        return cls(float(lo), float(hi))

    @property
    def bounded(self) -> bool:
        return self.lo is not None

    def limits(self) -> tuple[float, float]:
        if self.bounded:
            return float(self.lo), float(self.hi)
        return -np.inf, np.inf

    def __str__(self):
        return f"{self.lo!r}:{self.hi!r}" if self.bounded else "unbounded"


class Role(Enum):
    MAIN_F = "F"
    NOISE_G = "G"


def _final_activation(rng: DataRange, role: Role):
    if not rng.bounded:
        return IDENTITY
    if (rng.lo, rng.hi) == (-1.0, 1.0):
        return TANH if role is Role.MAIN_F else TANH2
    if (rng.lo, rng.hi) == (0.0, 1.0):
        # G spans (-1, 1): enough to push any [0, 1] value to either end
        return SIGMOID if role is Role.MAIN_F else TANH
    raise ValueError(f"no output activation matches range {rng}; use [-1,1], [0,1] or unbounded")


@dataclass(frozen=True)
class AeConfig:
    f_spec: MlpSpec
    g_spec: MlpSpec
    data_range: DataRange

    def __post_init__(self):
        d = self.f_spec.input_dim
        dims = (self.f_spec.output_dim, self.g_spec.input_dim, self.g_spec.output_dim)
        if any(x != d for x in dims):
            raise ValueError(f"F and G must map {d} -> {d}; got F {self.f_spec.layer_dims}, "
                             f"G {self.g_spec.layer_dims}")
        want_f = _final_activation(self.data_range, Role.MAIN_F)
        want_g = _final_activation(self.data_range, Role.NOISE_G)
        if self.f_spec.final_activation != want_f or self.g_spec.final_activation != want_g:
            raise ValueError(
                f"range {self.data_range} needs final activations F={want_f}, G={want_g}; "
                f"got F={self.f_spec.final_activation}, G={self.g_spec.final_activation}")

    @property
    def dim(self) -> int:
        return self.f_spec.input_dim


def build_kddcup_f() -> tuple[MlpSpec, int]:
    """118-60-30-10-3-10-30-60-118 tanh autoencoder with a linear output layer."""
    dims = (KDDCUP_INPUT_DIM, 60, 30, 10, KDDCUP_LATENT_DIM, 10, 30, 60, KDDCUP_INPUT_DIM)
    acts = (TANH,) * (len(dims) - 2) + (IDENTITY,)
    return MlpSpec(dims, acts), KDDCUP_LATENT_DIM


def build_kddcup_g() -> MlpSpec:
    dims = (KDDCUP_INPUT_DIM, 60, 30, 10, 30, 60, KDDCUP_INPUT_DIM)
    acts = (TANH,) * (len(dims) - 2) + (IDENTITY,)
    return MlpSpec(dims, acts)


def build_generic_ae(input_dim: int, hidden_dims, data_range: DataRange, role: Role,
                     hidden_activation=TANH) -> MlpSpec:
    """Symmetric autoencoder ``input -> hidden... -> input``.

    ``hidden_dims`` lists the encoder widths down to the bottleneck; the
    decoder mirrors them. The output activation follows from the role and
    the data range.
    """
    hidden_dims = [int(h) for h in hidden_dims]
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if not hidden_dims:
        raise ValueError("hidden_dims must not be empty")
    dims = [input_dim] + hidden_dims + hidden_dims[-2::-1] + [input_dim]
    acts = [hidden_activation] * (len(dims) - 2) + [_final_activation(data_range, role)]
    return MlpSpec(tuple(dims), tuple(acts))


def kddcup_config() -> AeConfig:
    return AeConfig(build_kddcup_f()[0], build_kddcup_g(), DataRange.unbounded())


def generic_config(input_dim: int, f_hidden, g_hidden, data_range: DataRange) -> AeConfig:
    return AeConfig(
        build_generic_ae(input_dim, f_hidden, data_range, Role.MAIN_F),
        build_generic_ae(input_dim, g_hidden, data_range, Role.NOISE_G),
        data_range,
    )
