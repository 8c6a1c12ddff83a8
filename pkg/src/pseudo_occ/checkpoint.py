"""Binary checkpoint format.

All integers and floats are little-endian; floats are IEEE-754 binary64.

    magic            4s   b"PAOC"
    format_version   u32
    data range       u8 bounded, f64 lo, f64 hi
    F spec, G spec   u32 n_dims, n_dims * u32, then per layer u8 act code, f64 slope
    train config     f64 p, f64 lambda, u32 batch, f64 lr_f, f64 lr_g, u32 epochs,
                     u64 seed, u8 mode (0 learned, 1 gaussian, 2 none), f64 sigma,
                     f64 beta1, f64 beta2, f64 eps
    F params         per layer: weights (row-major), biases
    u8 has_g, then G params when set
    summary          u64 iterations, f64 final loss_f, f64 final loss_g,
                     f64 final noise_norm (NaN when absent)
"""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass

import numpy as np

from .models import AeConfig, DataRange
from .nn import Activation, MlpParams, MlpSpec
from .trainer import PseudoMode, TelemetryRow, TrainConfig, TrainedModel

MAGIC = b"PAOC"
FORMAT_VERSION = 1

_CODE_TO_NAME = {a.code: a.name for a in (Activation(n) for n in Activation._CODES)}
_MODES = ("learned", "gaussian", "none")


class CheckpointError(ValueError):
    pass


@dataclass
class TelemetrySummary:
    iterations: int = 0
    loss_f: float = math.nan
    loss_g: float = math.nan
    noise_norm: float = math.nan

    @classmethod
    def from_rows(cls, rows: list[TelemetryRow]) -> "TelemetrySummary":
        if not rows:
            return cls()
        last_g = next((r for r in reversed(rows) if r.loss_g is not None), None)
        return cls(len(rows), rows[-1].loss_f,
                   last_g.loss_g if last_g else math.nan,
                   last_g.noise_norm if last_g else math.nan)


@dataclass
class Checkpoint:
    ae_config: AeConfig
    train_config: TrainConfig
    f_params: MlpParams
    g_params: MlpParams | None
    summary: TelemetrySummary

    @classmethod
    def from_model(cls, model: TrainedModel) -> "Checkpoint":
        return cls(model.ae_config, model.train_config, model.f_params, model.g_params,
                   TelemetrySummary.from_rows(model.telemetry))


def _pack(fmt, *vals):
    return struct.pack("<" + fmt, *vals)


def _spec_bytes(spec: MlpSpec) -> bytes:
    out = [_pack("I", len(spec.layer_dims)), _pack(f"{len(spec.layer_dims)}I", *spec.layer_dims)]
    for act in spec.activations:
        out.append(_pack("Bd", act.code, act.slope))
    return b"".join(out)


def _params_bytes(params: MlpParams) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays())


def dumps(ckpt: Checkpoint) -> bytes:
    cfg, tc = ckpt.ae_config, ckpt.train_config
    rng = cfg.data_range
    lo, hi = (rng.lo, rng.hi) if rng.bounded else (0.0, 0.0)
    mode = tc.pseudo_mode
    parts = [
        MAGIC, _pack("I", FORMAT_VERSION),
        _pack("Bdd", int(rng.bounded), lo, hi),
        _spec_bytes(cfg.f_spec), _spec_bytes(cfg.g_spec),
        _pack("ddIddIQBdddd", tc.p, tc.lambda_, tc.batch_size, tc.lr_f, tc.lr_g, tc.epochs,
              tc.seed, _MODES.index(mode.kind),
              mode.sigma if mode.sigma is not None else 0.0, tc.beta1, tc.beta2, tc.eps),
        _params_bytes(ckpt.f_params),
        _pack("B", ckpt.g_params is not None),
    ]
    if ckpt.g_params is not None:
        parts.append(_params_bytes(ckpt.g_params))
    s = ckpt.summary
    parts.append(_pack("Qddd", s.iterations, s.loss_f, s.loss_g, s.noise_norm))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self._buf = io.BytesIO(data)

    def read(self, fmt):
        size = struct.calcsize("<" + fmt)
        chunk = self._buf.read(size)
        if len(chunk) != size:
            raise CheckpointError("checkpoint is truncated")
        return struct.unpack("<" + fmt, chunk)

    def array(self, shape):
        n = int(np.prod(shape))
        chunk = self._buf.read(8 * n)
        if len(chunk) != 8 * n:
            raise CheckpointError("checkpoint is truncated")
        return np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(shape)

    def at_end(self):
        return self._buf.read(1) == b""


def _read_spec(r: _Reader) -> MlpSpec:
    (n,) = r.read("I")
    if not 2 <= n <= 1024:
        raise CheckpointError(f"implausible layer count {n}")
    dims = r.read(f"{n}I")
    acts = []
    for _ in range(n - 1):
        code, slope = r.read("Bd")
        if code not in _CODE_TO_NAME:
            raise CheckpointError(f"unknown activation code {code}")
        acts.append(Activation(_CODE_TO_NAME[code], slope))
    return MlpSpec(dims, tuple(acts))


def _read_params(r: _Reader, spec: MlpSpec) -> MlpParams:
    ws, bs = [], []
    for fan_in, fan_out in zip(spec.layer_dims[:-1], spec.layer_dims[1:]):
        ws.append(r.array((fan_out, fan_in)))
        bs.append(r.array((fan_out,)))
    return MlpParams(ws, bs)


def loads(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if data[:4] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    r.read("4s")
    (version,) = r.read("I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})")
    bounded, lo, hi = r.read("Bdd")
    data_range = DataRange(lo, hi) if bounded else DataRange.unbounded()
    f_spec, g_spec = _read_spec(r), _read_spec(r)
    (p, lam, batch, lr_f, lr_g, epochs, seed, mode, sigma,
     beta1, beta2, eps) = r.read("ddIddIQBdddd")
    if mode >= len(_MODES):
        raise CheckpointError(f"unknown pseudo mode code {mode}")
    kind = _MODES[mode]
    tc = TrainConfig(p=p, lambda_=lam, batch_size=batch, lr_f=lr_f, lr_g=lr_g, epochs=epochs,
                     seed=seed, pseudo_mode=PseudoMode(kind, sigma if kind == "gaussian" else None),
                     beta1=beta1, beta2=beta2, eps=eps)
    f_params = _read_params(r, f_spec)
    (has_g,) = r.read("B")
    g_params = _read_params(r, g_spec) if has_g else None
    summary = TelemetrySummary(*r.read("Qddd"))
    if not r.at_end():
        raise CheckpointError("trailing bytes after checkpoint")
    return Checkpoint(AeConfig(f_spec, g_spec, data_range), tc, f_params, g_params, summary)


def save(ckpt: Checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads(fh.read())
