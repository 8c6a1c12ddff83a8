"""Alternating training of the main autoencoder F and the noise generator G."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import kernels
from .models import AeConfig, DataRange
from .nn import (AdamState, MlpParams, MlpSpec, NonFiniteError, adam_step, as_batch,
                 backward, forward, init_params, mse_loss)
from .pseudo import GaussianNoiseConfig, PseudoBatch, generate_noise, make_pseudo_gaussian

log = logging.getLogger(__name__)

NORMAL, PSEUDO = "normal", "pseudo"


@dataclass(frozen=True)
class PseudoMode:
    """``learned`` (noise from G), ``gaussian`` (fixed sigma) or ``none`` (baseline)."""

    kind: str = "learned"
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in ("learned", "gaussian", "none"):
            raise ValueError(f"unknown pseudo mode {self.kind!r}")
        if self.kind == "gaussian":
            GaussianNoiseConfig(self.sigma)
        elif self.sigma is not None:
            raise ValueError("sigma only applies to gaussian mode")

    @classmethod
    def parse(cls, text: str) -> "PseudoMode":
        """Accepts ``learned``, ``baseline``/``none`` and ``gaussian:SIGMA``."""
        text = text.strip().lower()
        if text in ("baseline", "none"):
            return cls("none")
        if text.startswith("gaussian:"):
            return cls("gaussian", float(text.split(":", 1)[1]))
        if text == "learned":
            return cls("learned")
        raise ValueError(f"bad mode {text!r}; expected learned, baseline or gaussian:SIGMA")

    def __str__(self):
        if self.kind == "gaussian":
            return f"gaussian:{self.sigma!r}"
        return "baseline" if self.kind == "none" else self.kind


LEARNED = PseudoMode("learned")
BASELINE = PseudoMode("none")


@dataclass(frozen=True)
class TrainConfig:
    p: float = 0.5
    lambda_: float = 1.0
    batch_size: int = 1024
    lr_f: float = 1e-4
    lr_g: float = 1e-4
    epochs: int = 20
    seed: int = 0
    pseudo_mode: PseudoMode = LEARNED
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be in [0, 1], got {self.p}")
        if self.lambda_ < 0:
            raise ValueError("lambda_ must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.lr_f < 0 or self.lr_g < 0:
            raise ValueError("learning rates must be >= 0")

    @property
    def pseudo_probability(self) -> float:
        """``p``, except that baseline mode never uses pseudo anomalies."""
        return 0.0 if self.pseudo_mode.kind == "none" else self.p


@dataclass
class TelemetryRow:
    iteration: int
    batch_kind: str
    loss_f: float
    loss_g: float | None = None
    noise_norm: float | None = None


TELEMETRY_COLUMNS = ("iteration", "batch_kind", "loss_f", "loss_g", "noise_norm")


def _fmt(v):
    return "" if v is None else repr(v)


class TelemetryWriter:
    """Append-only CSV sink for telemetry rows."""

    def __init__(self, fh):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(TELEMETRY_COLUMNS)
        self._fh = fh

    def __call__(self, row: TelemetryRow):
        self._w.writerow([row.iteration, row.batch_kind, _fmt(row.loss_f),
                          _fmt(row.loss_g), _fmt(row.noise_norm)])
        self._fh.flush()


def read_telemetry_csv(path) -> list[TelemetryRow]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append(TelemetryRow(
                int(rec["iteration"]), rec["batch_kind"], float(rec["loss_f"]),
                float(rec["loss_g"]) if rec["loss_g"] else None,
                float(rec["noise_norm"]) if rec["noise_norm"] else None))
    return rows


@dataclass
class Net:
    """Parameters of one network together with its optimizer state."""

    spec: MlpSpec
    params: MlpParams
    opt: AdamState

    @classmethod
    def create(cls, spec: MlpSpec, rng: np.random.Generator, lr: float,
               beta1=0.9, beta2=0.999, eps=1e-8) -> "Net":
        params = init_params(spec, rng)
        return cls(spec, params, AdamState.for_params(params, lr, beta1=beta1, beta2=beta2, eps=eps))


@dataclass
class TrainedModel:
    f_params: MlpParams
    g_params: MlpParams | None
    ae_config: AeConfig
    train_config: TrainConfig
    telemetry: list[TelemetryRow] = field(default_factory=list)


class TrainingError(RuntimeError):
    """Training aborted; ``telemetry`` holds the rows recorded so far."""

    def __init__(self, msg, telemetry=()):
        super().__init__(msg)
        self.telemetry = list(telemetry)


def _check(loss, what):
    if not math.isfinite(loss):
        raise NonFiniteError(f"{what} loss is not finite ({loss})")


def _f_update(f: Net, x_in: np.ndarray, target: np.ndarray) -> float:
    out, cache = forward(f.params, f.spec, x_in)
    loss, g = mse_loss(out, target)
    _check(loss, "F")
    grads, _ = backward(f.params, f.spec, cache, g)
    adam_step(f.params, grads, f.opt)
    return loss


def f_step_normal(f: Net, x_normal) -> float:
    """One Adam step on F reconstructing normal data."""
    x = as_batch(x_normal, f.spec.input_dim)
    return _f_update(f, x, x)


def f_step_pseudo(f: Net, pseudo: PseudoBatch) -> float:
    """One Adam step on F mapping pseudo anomalies back to their normal source.

    ``pseudo.x_pseudo`` enters as a constant; nothing flows back into G.
    """
    return _f_update(f, as_batch(pseudo.x_pseudo, f.spec.input_dim), pseudo.x_normal)


def g_loss_and_grads(g_params: MlpParams, g_spec: MlpSpec, f_params: MlpParams, f_spec: MlpSpec,
                     x_normal, lambda_: float, data_range: DataRange):
    """Generator objective and its gradient w.r.t. G's parameters.

    loss = mean_i (1/d) (||F(xp_i) - xp_i||^2 - lambda * ||delta_i||^2)
    with xp = clip(x + G(x)) and delta = xp - x. Clipped entries pass no
    gradient to G. Returns ``(loss, grads, noise_norm, batch)``.
    """
    batch, saturated, g_cache = generate_noise(g_params, g_spec, x_normal, data_range)
    xp, delta = batch.x_pseudo, batch.delta
    n, d = xp.shape
    recon, f_cache = forward(f_params, f_spec, xp)
    resid = recon - xp
    delta_sq = kernels.row_sq_norms(delta)
    loss = float((kernels.row_sq_norms(resid).sum() - lambda_ * delta_sq.sum()) / (n * d))
    scale = 2.0 / (n * d)
    _, grad_through_f = backward(f_params, f_spec, f_cache, resid * scale)
    # xp appears as F's input, as the target, and inside delta
    grad_xp = grad_through_f - resid * scale - (lambda_ * scale) * delta
    grad_xp[saturated] = 0.0
    grads, _ = backward(g_params, g_spec, g_cache, grad_xp)
    noise_norm = float(np.sqrt(delta_sq).mean())
    return loss, grads, noise_norm, batch


def g_step(g: Net, f_frozen: Net, x_normal, lambda_: float,
           data_range: DataRange) -> tuple[float, float]:
    """One Adam step on G against a frozen F; returns ``(loss_g, noise_norm)``."""
    loss, grads, noise_norm, _ = g_loss_and_grads(
        g.params, g.spec, f_frozen.params, f_frozen.spec, x_normal, lambda_, data_range)
    _check(loss, "G")
    adam_step(g.params, grads, g.opt)
    return loss, noise_norm


def _streams(seed: int):
    """Independent generators: F init, G init, shuffling, batch-kind coin, Gaussian noise."""
    children = np.random.SeedSequence(int(seed)).spawn(5)
    return [np.random.Generator(np.random.Philox(c)) for c in children]


def train(x_train, ae_config: AeConfig, cfg: TrainConfig,
          sink: Callable[[TelemetryRow], None] | None = None) -> TrainedModel:
    """Train F (and G in learned mode) on normal data ``x_train``.

    Each iteration is a pseudo iteration with probability ``cfg.p``: in
    learned mode G takes one step first, then F trains on noise from the
    updated G. Otherwise F takes a plain reconstruction step.
    """
    x_train = np.ascontiguousarray(x_train, dtype=np.float64)
    if x_train.ndim != 2 or x_train.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if x_train.shape[1] != ae_config.dim:
        raise ValueError(f"data has {x_train.shape[1]} features, model expects {ae_config.dim}")
    as_batch(x_train)

    rng_f, rng_g, rng_shuffle, rng_coin, rng_noise = _streams(cfg.seed)
    betas = dict(beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    f = Net.create(ae_config.f_spec, rng_f, cfg.lr_f, **betas)
    mode = cfg.pseudo_mode.kind
    g = Net.create(ae_config.g_spec, rng_g, cfg.lr_g, **betas) if mode == "learned" else None
    gauss = GaussianNoiseConfig(cfg.pseudo_mode.sigma) if mode == "gaussian" else None
    rng = ae_config.data_range

    p = cfg.pseudo_probability
    telemetry: list[TelemetryRow] = []
    n = x_train.shape[0]
    it = 0
    try:
        for epoch in range(cfg.epochs):
            order = rng_shuffle.permutation(n)
            for start in range(0, n, cfg.batch_size):
                x = x_train[order[start:start + cfg.batch_size]]
                it += 1
                if rng_coin.random() < p:
                    loss_g = noise_norm = None
                    if g is not None:
                        loss_g, noise_norm = g_step(g, f, x, cfg.lambda_, rng)
                        batch = generate_noise(g.params, g.spec, x, rng)[0]
                    else:
                        batch = make_pseudo_gaussian(x, gauss, rng, rng_noise)
                    row = TelemetryRow(it, PSEUDO, f_step_pseudo(f, batch), loss_g, noise_norm)
                else:
                    row = TelemetryRow(it, NORMAL, f_step_normal(f, x))
                telemetry.append(row)
                if sink is not None:
                    sink(row)
            log.debug("epoch %d done, last F loss %.6g", epoch + 1, telemetry[-1].loss_f)
    except NonFiniteError as exc:
        raise TrainingError(f"iteration {it}: {exc}", telemetry) from exc

    return TrainedModel(f.params, g.params if g is not None else None, ae_config, cfg, telemetry)


def epoch_means(telemetry: Iterable[TelemetryRow], iters_per_epoch: int, kind: str = NORMAL):
    """Mean F loss of ``kind`` rows per epoch (NaN for epochs without such rows)."""
    rows = list(telemetry)
    out = []
    for s in range(0, len(rows), iters_per_epoch):
        vals = [r.loss_f for r in rows[s:s + iters_per_epoch] if r.batch_kind == kind]
        out.append(float(np.mean(vals)) if vals else float("nan"))
    return out

