"""Anomaly scores and detection metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import rankdata

from . import kernels
from .models import DataRange
from .nn import MlpParams, MlpSpec, as_batch, predict
from .pseudo import make_pseudo_learned

PSNR_MSE_FLOOR = 1e-12
METRICS = ("auc", "f1", "precision", "recall")


class GeneratorTestMode(Enum):
    WITHOUT_G = "off"
    WITH_G_CLEAN_TARGET = "clean"
    WITH_G_NOISY_TARGET = "noisy"


def _labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be a 1-D array of 0/1")
    return labels.astype(np.int8)


def _pair(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = _labels(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.size} scores but {labels.size} labels")
    return scores, labels


def recon_score(f_params: MlpParams, f_spec: MlpSpec, x) -> np.ndarray:
    """Per-sample sum of squared reconstruction errors."""
    x = as_batch(x, f_spec.input_dim)
    return kernels.row_sq_norms(predict(f_params, f_spec, x) - x)


def psnr_score(x_hat, x, m_max: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample PSNR ``10 log10(m_max^2 / mse)``.

    The MSE is floored at ``PSNR_MSE_FLOOR``; the second return value flags
    the samples where the floor was hit.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape or x.ndim != 2:
        raise ValueError(f"shape mismatch: {x_hat.shape} vs {x.shape}")
    if not m_max > 0:
        raise ValueError("m_max must be positive")
    mse = kernels.row_sq_norms(np.ascontiguousarray(x_hat - x)) / x.shape[1]
    capped = mse < PSNR_MSE_FLOOR
    mse = np.maximum(mse, PSNR_MSE_FLOOR)
    return 10.0 * np.log10(m_max * m_max / mse), capped


def minmax_normalize(values) -> tuple[np.ndarray, bool]:
    """Scale to [0, 1]. A constant input maps to zeros and sets the flag."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot normalise an empty array")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v), True
    return (v - lo) / (hi - lo), False


def anomaly_from_normalcy(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if ((q < 0) | (q > 1)).any() or np.isnan(q).any():
        raise ValueError("normalcy scores must lie in [0, 1]")
    return 1.0 - q


def roc_auc(scores, labels) -> float:
    """ROC AUC from average ranks (Mann-Whitney U); ties count one half."""
    scores, labels = _pair(scores, labels)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def topk_threshold_metrics(scores, labels, fraction: float = 0.2) -> tuple[float, float, float]:
    """F1, precision, recall when the top ``floor(fraction * N)`` scores are flagged.

    Equal scores are ranked by ascending sample index.
    """
    scores, labels = _pair(scores, labels)
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise ValueError("recall is undefined without positive labels")
    k = int(math.floor(fraction * scores.size))
    order = np.lexsort((np.arange(scores.size), -scores))
    tp = int(labels[order[:k]].sum())
    precision = tp / k if k else 0.0
    recall = tp / n_pos
    f1 = 2 * precision * recall / (precision + recall) if tp else 0.0
    return f1, precision, recall


def reconstruct_for_mode(f_params: MlpParams, f_spec: MlpSpec, g_params: MlpParams | None,
                         g_spec: MlpSpec | None, x, mode: GeneratorTestMode,
                         data_range: DataRange) -> tuple[np.ndarray, np.ndarray]:
    """``(reconstruction, target)`` for a test mode; scores compare the two."""
    x = as_batch(x, f_spec.input_dim)
    if mode is GeneratorTestMode.WITHOUT_G:
        return predict(f_params, f_spec, x), x
    if g_params is None:
        raise ValueError(f"test mode {mode.value!r} needs generator parameters")
    batch, _ = make_pseudo_learned(g_params, g_spec, x, data_range)
    recon = predict(f_params, f_spec, batch.x_pseudo)
    target = batch.x_normal if mode is GeneratorTestMode.WITH_G_CLEAN_TARGET else batch.x_pseudo
    return recon, target


def score_with_generator(f_params: MlpParams, f_spec: MlpSpec, g_params: MlpParams,
                         g_spec: MlpSpec, x, mode: GeneratorTestMode,
                         data_range: DataRange) -> np.ndarray:
    """Scores with G's noise added before F; the target is either x or the noisy x'."""
    if mode is GeneratorTestMode.WITHOUT_G:
        raise ValueError("WITHOUT_G scoring is recon_score")
    recon, target = reconstruct_for_mode(f_params, f_spec, g_params, g_spec, x, mode, data_range)
    return kernels.row_sq_norms(recon - target)


@dataclass
class MetricsReport:
    auc: float | None = None
    f1: float | None = None
    precision: float | None = None
    recall: float | None = None
    threshold_fraction: float = 0.2
    n_runs: int = 1
    per_run: list[dict] = field(default_factory=list)
    maxima: dict = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    def values(self) -> dict:
        return {k: getattr(self, k) for k in METRICS if getattr(self, k) is not None}

    def to_text(self) -> str:
        lines = [f"runs: {self.n_runs}", f"threshold_fraction: {self.threshold_fraction!r}"]
        for k, v in self.values().items():
            line = f"{k}: {v:.6f}"
            if k in self.maxima and self.n_runs > 1:
                line += f" (max {self.maxima[k]:.6f})"
            lines.append(line)
        lines.extend(f"flag: {f}" for f in self.flags)
        return "\n".join(lines) + "\n"

    def write_csv(self, path):
        """One row per run plus ``mean`` and ``max`` rows."""
        keys = [k for k in METRICS if getattr(self, k) is not None]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", *keys, "threshold_fraction", "flags"])
            runs = self.per_run or [self.values()]
            for i, run in enumerate(runs):
                w.writerow([f"run{i}", *(repr(run[k]) for k in keys), repr(self.threshold_fraction), ""])
            w.writerow(["mean", *(repr(getattr(self, k)) for k in keys),
                        repr(self.threshold_fraction), ";".join(self.flags)])
            maxima = self.maxima or self.values()
            w.writerow(["max", *(repr(maxima[k]) for k in keys), repr(self.threshold_fraction), ""])


def evaluate_scores(scores, labels, fraction: float = 0.2) -> MetricsReport:
    scores, labels = _pair(scores, labels)
    rep = MetricsReport(threshold_fraction=fraction)
    if 0 < labels.sum() < labels.size:
        rep.auc = roc_auc(scores, labels)
    if labels.sum() > 0:
        rep.f1, rep.precision, rep.recall = topk_threshold_metrics(scores, labels, fraction)
    rep.per_run = [rep.values()]
    rep.maxima = rep.values()
    return rep


def aggregate_runs(reports: list[MetricsReport]) -> MetricsReport:
    """Mean of each metric over runs; maxima kept alongside."""
    if not reports:
        raise ValueError("nothing to aggregate")
    present = [tuple(r.values()) for r in reports]
    if len(set(present)) != 1:
        raise ValueError("reports disagree on which metrics are present")
    out = MetricsReport(threshold_fraction=reports[0].threshold_fraction, n_runs=len(reports))
    out.per_run = [r.values() for r in reports]
    for k in present[0]:
        vals = [getattr(r, k) for r in reports]
        setattr(out, k, float(np.mean(vals)))
        out.maxima[k] = float(max(vals))
    out.flags = sorted({f for r in reports for f in r.flags})
    return out


def histogram_rows(scores, labels, bins: int = 50):
    """Rows ``(bin_left, bin_right, count_normal, count_anomalous)`` spanning [min, max]."""
    scores, labels = _pair(scores, labels)
    edges = np.histogram_bin_edges(scores, bins=bins)
    normal, _ = np.histogram(scores[labels == 0], bins=edges)
    anomalous, _ = np.histogram(scores[labels == 1], bins=edges)
    return [(float(edges[i]), float(edges[i + 1]), int(normal[i]), int(anomalous[i]))
            for i in range(len(edges) - 1)]


def write_histogram_csv(path, scores, labels, bins: int = 50):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count_normal", "count_anomalous"])
        for left, right, cn, ca in histogram_rows(scores, labels, bins):
            w.writerow([repr(left), repr(right), cn, ca])
