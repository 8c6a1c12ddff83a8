"""Tabular data loading, one-hot encoding, min-max scaling, splits and synthetic sets.

Schema files are plain UTF-8 text, one column per line, in file order::

    # comment
    @width 118
    duration numeric
    protocol_type categorical icmp,tcp,udp
    label label normal.

``@width`` is optional and asserts the encoded feature count. A ``label``
line lists the raw values that map to 1 (the anomalous class); every other
value maps to 0. Columns named ``-`` with kind ``skip`` are ignored.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .nn import make_rng


class DataError(ValueError):
    """Malformed input data or schema."""


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # numeric | categorical | label | skip
    values: tuple[str, ...] = ()

    @property
    def width(self) -> int:
        if self.kind == "numeric":
            return 1
        if self.kind == "categorical":
            return len(self.values)
        return 0


@dataclass(frozen=True)
class SchemaSpec:
    columns: tuple[Column, ...]
    expected_width: int | None = None

    def __post_init__(self):
        labels = [c for c in self.columns if c.kind == "label"]
        if len(labels) != 1:
            raise DataError(f"schema needs exactly one label column, found {len(labels)}")
        for c in self.columns:
            if c.kind in ("categorical", "label"):
                if not c.values:
                    raise DataError(f"column {c.name!r}: empty value list")
                if len(set(c.values)) != len(c.values):
                    raise DataError(f"column {c.name!r}: duplicate values")
        if self.expected_width is not None and self.width != self.expected_width:
            raise DataError(f"schema encodes {self.width} features, expected {self.expected_width}")

    @property
    def width(self) -> int:
        return sum(c.width for c in self.columns)

    @property
    def label_column(self) -> Column:
        return next(c for c in self.columns if c.kind == "label")

    def feature_names(self) -> list[str]:
        names = []
        for c in self.columns:
            if c.kind == "numeric":
                names.append(c.name)
            elif c.kind == "categorical":
                names.extend(f"{c.name}={v}" for v in c.values)
        return names


def parse_schema(text: str) -> SchemaSpec:
    columns, width = [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "@width":
            width = int(parts[1])
            continue
        if len(parts) < 2:
            raise DataError(f"schema line {lineno}: expected '<name> <kind> [values]'")
        name, kind = parts[0], parts[1]
        if kind not in ("numeric", "categorical", "label", "skip"):
            raise DataError(f"schema line {lineno}: unknown kind {kind!r}")
        values = tuple(v for v in " ".join(parts[2:]).split(",") if v) if len(parts) > 2 else ()
        if kind in ("numeric", "skip") and values:
            raise DataError(f"schema line {lineno}: {kind} columns take no values")
        columns.append(Column(name, kind, values))
    return SchemaSpec(tuple(columns), width)


def load_schema(path) -> SchemaSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


def kddcup_schema() -> SchemaSpec:
    """The shipped KDDCUP99 (10%) schema: 38 numeric + 80 one-hot columns."""
    text = resources.files("pseudo_occ.data").joinpath("kddcup99.schema").read_text("utf-8")
    return parse_schema(text)


@dataclass(frozen=True)
class NormStats:
    min: np.ndarray
    max: np.ndarray

    @property
    def constant(self) -> np.ndarray:
        return self.max == self.min


@dataclass
class EncodedDataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    norm_stats: NormStats | None = None

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError("features must be 2-D")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]
        if len(self.feature_names) != self.features.shape[1]:
            raise DataError("feature_names length does not match feature count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int8)
            if self.labels.shape != (self.features.shape[0],):
                raise DataError("labels length does not match row count")

    def __len__(self):
        return self.features.shape[0]

    def subset(self, idx) -> "EncodedDataset":
        return replace(self, features=self.features[idx],
                       labels=None if self.labels is None else self.labels[idx])


def load_csv(path, schema: SchemaSpec, header: bool = False) -> EncodedDataset:
    """Read a raw CSV and encode it with ``schema``. Errors carry row and column."""
    cats = {c.name: {v: i for i, v in enumerate(c.values)} for c in schema.columns
            if c.kind == "categorical"}
    positive = set(schema.label_column.values)
    n_cols = len(schema.columns)
    rows, labels = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for rowno, rec in enumerate(reader, 1):
            if header and rowno == 1:
                continue
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if len(rec) != n_cols:
                raise DataError(f"row {rowno}: {len(rec)} fields, schema has {n_cols}")
            out = []
            for col, val in zip(schema.columns, rec):
                val = val.strip()
                if col.kind == "numeric":
                    try:
                        x = float(val)
                    except ValueError:
                        raise DataError(f"row {rowno}, column {col.name!r}: "
                                        f"not a number: {val!r}") from None
                    if not math.isfinite(x):
                        raise DataError(f"row {rowno}, column {col.name!r}: non-finite value")
                    out.append(x)
                elif col.kind == "categorical":
                    idx = cats[col.name].get(val)
                    if idx is None:
                        raise DataError(f"row {rowno}, column {col.name!r}: "
                                        f"unknown category {val!r}")
                    hot = [0.0] * len(col.values)
                    hot[idx] = 1.0
                    out.extend(hot)
                elif col.kind == "label":
                    labels.append(1 if val in positive else 0)
            rows.append(out)
    features = np.array(rows, dtype=np.float64).reshape(len(rows), schema.width)
    return EncodedDataset(features, np.array(labels, dtype=np.int8), schema.feature_names())


@dataclass(frozen=True)
class SplitSpec:
    train_fraction_normal: float = 0.5
    test_anomaly_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for f in (self.train_fraction_normal, self.test_anomaly_fraction):
            if not 0 < f < 1:
                raise DataError("split fractions must be in (0, 1)")


def kddcup_split(ds: EncodedDataset, spec: SplitSpec) -> tuple[EncodedDataset, EncodedDataset]:
    """Train on a random share of normal rows; test on the other normal rows
    plus a random share of the anomalous rows. Row order follows the input."""
    if ds.labels is None:
        raise DataError("split needs labels")
    normal = np.flatnonzero(ds.labels == 0)
    anomalous = np.flatnonzero(ds.labels == 1)
    if normal.size == 0 or anomalous.size == 0:
        raise DataError("split needs both normal and anomalous rows")
    rng = make_rng(spec.seed)
    n_train = int(math.floor(spec.train_fraction_normal * normal.size))
    n_anom = int(math.floor(spec.test_anomaly_fraction * anomalous.size))
    perm = rng.permutation(normal)
    train_idx = np.sort(perm[:n_train])
    test_normal = perm[n_train:]
    test_anom = rng.permutation(anomalous)[:n_anom]
    test_idx = np.sort(np.concatenate([test_normal, test_anom]))
    return ds.subset(train_idx), ds.subset(test_idx)


def fit_minmax(train: EncodedDataset) -> NormStats:
    if len(train) == 0:
        raise DataError("cannot fit normalisation on an empty dataset")
    return NormStats(train.features.min(axis=0), train.features.max(axis=0))


def apply_minmax(ds: EncodedDataset, stats: NormStats) -> EncodedDataset:
    """``(x - min) / (max - min)`` per feature, unclipped; constant features become 0."""
    if stats.min.shape != (ds.features.shape[1],):
        raise DataError("normalisation stats do not match feature count")
    span = np.where(stats.constant, 1.0, stats.max - stats.min)
    scaled = (ds.features - stats.min) / span
    scaled[:, stats.constant] = 0.0
    return replace(ds, features=scaled, norm_stats=stats)


def write_csv(ds: EncodedDataset, path):
    """Write features (and a trailing ``label`` column when labels exist) with a header."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.feature_names + (["label"] if ds.labels is not None else []))
        for i, row in enumerate(ds.features):
            out = [repr(float(v)) for v in row]
            if ds.labels is not None:
                out.append(str(int(ds.labels[i])))
            w.writerow(out)


def read_numeric_csv(path) -> EncodedDataset:
    """Read a CSV written by :func:`write_csv` (header row, optional ``label`` column)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            names = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_label = names[-1] == "label"
        feats, labels = [], []
        for rowno, rec in enumerate(reader, 2):
            if not rec:
                continue
            if len(rec) != len(names):
                raise DataError(f"{path}: row {rowno} has {len(rec)} fields, header has {len(names)}")
            try:
                vals = [float(v) for v in rec]
            except ValueError as exc:
                raise DataError(f"{path}: row {rowno}: {exc}") from None
            if has_label:
                labels.append(int(vals.pop()))
            feats.append(vals)
    width = len(names) - has_label
    features = np.array(feats, dtype=np.float64).reshape(len(feats), width)
    if not np.isfinite(features).all():
        raise DataError(f"{path}: non-finite feature values")
    return EncodedDataset(features, np.array(labels, dtype=np.int8) if has_label else None,
                          names[:width])


def write_stats(stats: NormStats, names, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "min", "max", "constant"])
        for name, lo, hi, c in zip(names, stats.min, stats.max, stats.constant):
            w.writerow([name, repr(float(lo)), repr(float(hi)), int(c)])


SYNTH_KINDS = ("ring", "gaussian_blob", "two_blobs")
RING_JITTER = 0.05


def _orthonormal_frame(rng, dim, k):
    q, _ = np.linalg.qr(rng.normal(size=(dim, k)))
    return q


def synth_generate(kind: str, n_normal: int, n_anomalous: int, dim: int,
                   seed: int) -> EncodedDataset:
    """Labelled synthetic data (label 1 = anomalous), rows shuffled.

    ring: normal points on a unit circle lying in a random 2-D plane of
    R^dim, with N(0, 0.05^2) jitter in every coordinate; anomalies fill the
    disc of radius 0.5 inside the circle, same plane and jitter.
    gaussian_blob: normal N(0, 0.5^2 I); anomalies uniform in [-2, 2]^dim.
    two_blobs: normal blobs at +-1.5 along a random direction (sd 0.25);
    anomalies in a blob of the same spread midway between them.
    """
    if kind not in SYNTH_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    if dim < 2 or n_normal < 1 or n_anomalous < 1:
        raise DataError("need dim >= 2 and at least one row of each class")
    rng = make_rng(seed)
    if kind == "ring":
        frame = _orthonormal_frame(rng, dim, 2) if dim > 2 else np.eye(2)
        theta = rng.uniform(0.0, 2 * np.pi, n_normal)
        ring = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        phi = rng.uniform(0.0, 2 * np.pi, n_anomalous)
        rad = 0.5 * np.sqrt(rng.uniform(0.0, 1.0, n_anomalous))
        disc = np.stack([rad * np.cos(phi), rad * np.sin(phi)], axis=1)
        normal = ring @ frame.T + rng.normal(0.0, RING_JITTER, (n_normal, dim))
        anomalous = disc @ frame.T + rng.normal(0.0, RING_JITTER, (n_anomalous, dim))
    elif kind == "gaussian_blob":
        normal = rng.normal(0.0, 0.5, (n_normal, dim))
        anomalous = rng.uniform(-2.0, 2.0, (n_anomalous, dim))
    else:
        u = _orthonormal_frame(rng, dim, 1)[:, 0]
        sign = np.where(rng.random(n_normal) < 0.5, -1.0, 1.0)
        normal = 1.5 * sign[:, None] * u + rng.normal(0.0, 0.25, (n_normal, dim))
        anomalous = rng.normal(0.0, 0.25, (n_anomalous, dim))
    x = np.concatenate([normal, anomalous])
    y = np.concatenate([np.zeros(n_normal, np.int8), np.ones(n_anomalous, np.int8)])
    order = rng.permutation(x.shape[0])
    return EncodedDataset(x[order], y[order])
