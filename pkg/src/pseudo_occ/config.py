"""Flat ``key = value`` run configuration files.

Recognised keys (unknown keys are an error)::

    p, lambda, batch_size, lr_f, lr_g, epochs, seed, mode,
    beta1, beta2, eps,
    arch        kddcup | generic
    f_hidden    comma-separated encoder widths for a generic F, e.g. 32,16
    g_hidden    same for G
    data_range  unbounded | lo:hi

Defaults are the network-intrusion settings: p=0.5, lambda=1, batch 1024,
both learning rates 1e-4, 20 epochs, KDDCUP architectures.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .models import AeConfig, DataRange, build_kddcup_f, build_kddcup_g, generic_config
from .trainer import PseudoMode, TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ArchConfig:
    arch: str = "kddcup"
    f_hidden: tuple[int, ...] = (32, 16)
    g_hidden: tuple[int, ...] = (32, 16)
    data_range: DataRange = field(default_factory=DataRange.unbounded)

    def build(self, dim: int) -> AeConfig:
        if self.arch == "kddcup":
            f_spec, _ = build_kddcup_f()
            if dim != f_spec.input_dim:
                raise ConfigError(f"kddcup architecture needs {f_spec.input_dim} features, data has {dim}")
            return AeConfig(f_spec, build_kddcup_g(), self.data_range)
        return generic_config(dim, self.f_hidden, self.g_hidden, self.data_range)


_FLOATS = {"p": "p", "lambda": "lambda_", "lr_f": "lr_f", "lr_g": "lr_g",
           "beta1": "beta1", "beta2": "beta2", "eps": "eps"}
_INTS = {"batch_size": "batch_size", "epochs": "epochs", "seed": "seed"}


def _dims(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def parse_config(text: str) -> tuple[TrainConfig, ArchConfig]:
    train_kw, arch_kw = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key in _FLOATS:
                train_kw[_FLOATS[key]] = float(value)
            elif key in _INTS:
                train_kw[_INTS[key]] = int(value)
            elif key == "mode":
                train_kw["pseudo_mode"] = PseudoMode.parse(value)
            elif key == "arch":
                if value not in ("kddcup", "generic"):
                    raise ConfigError(f"line {lineno}: arch must be kddcup or generic")
                arch_kw["arch"] = value
            elif key in ("f_hidden", "g_hidden"):
                arch_kw[key] = _dims(value)
            elif key == "data_range":
                arch_kw["data_range"] = DataRange.parse(value)
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        return TrainConfig(**train_kw), ArchConfig(**arch_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> tuple[TrainConfig, ArchConfig]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def override(cfg: TrainConfig, seed=None, mode: PseudoMode | None = None) -> TrainConfig:
    kw = {}
    if seed is not None:
        kw["seed"] = seed
    if mode is not None:
        kw["pseudo_mode"] = mode
    cfg = replace(cfg, **kw)
    if cfg.pseudo_mode.kind == "none":
        cfg = replace(cfg, p=0.0)
    return cfg
