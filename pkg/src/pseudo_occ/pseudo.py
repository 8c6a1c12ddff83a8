"""Pseudo-anomaly construction: learned noise from G, or Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .models import DataRange
from .nn import ForwardCache, MlpParams, MlpSpec, as_batch, forward


@dataclass(frozen=True)
class GaussianNoiseConfig:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


@dataclass
class PseudoBatch:
    """Normal batch, its pseudo-anomalous version and the noise actually applied.

    ``delta`` is recomputed after clipping, and ``x_pseudo`` is rebuilt as
    ``x_normal + delta`` so the identity holds bit for bit.
    """

    x_normal: np.ndarray
    x_pseudo: np.ndarray
    delta: np.ndarray


def apply_noise(x_normal: np.ndarray, raw: np.ndarray,
                data_range: DataRange) -> tuple[PseudoBatch, np.ndarray]:
    """Add ``raw`` noise, clip to ``data_range`` and recompute the noise.

    Returns the batch and a boolean mask of entries that clipping changed.
    """
    if raw.shape != x_normal.shape:
        raise ValueError(f"noise shape {raw.shape} != data shape {x_normal.shape}")
    lo, hi = data_range.limits()
    x_pseudo, delta, saturated = kernels.clip_recompute(x_normal, raw, lo, hi)
    return PseudoBatch(x_normal, x_pseudo, delta), saturated


def generate_noise(g_params: MlpParams, g_spec: MlpSpec, x_normal,
                   data_range: DataRange) -> tuple[PseudoBatch, np.ndarray, ForwardCache]:
    """Like :func:`make_pseudo_learned` but also returns G's forward cache."""
    x_normal = as_batch(x_normal, g_spec.input_dim)
    raw, cache = forward(g_params, g_spec, x_normal)
    batch, saturated = apply_noise(x_normal, raw, data_range)
    return batch, saturated, cache


def make_pseudo_learned(g_params: MlpParams, g_spec: MlpSpec, x_normal,
                        data_range: DataRange) -> tuple[PseudoBatch, np.ndarray]:
    """Pseudo anomalies ``x + G(x)``, clipped to the data range when bounded."""
    batch, saturated, _ = generate_noise(g_params, g_spec, x_normal, data_range)
    return batch, saturated


def make_pseudo_gaussian(x_normal, cfg: GaussianNoiseConfig, data_range: DataRange,
                         rng: np.random.Generator) -> PseudoBatch:
    """Pseudo anomalies with i.i.d. N(0, sigma^2) noise per entry."""
    x_normal = as_batch(x_normal)
    raw = rng.normal(0.0, cfg.sigma, size=x_normal.shape)
    return apply_noise(x_normal, raw, data_range)[0]
