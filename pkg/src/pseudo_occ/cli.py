"""``pseudo-occ`` command line: prep, train, eval, multirun, gradcheck, synth.

Exit codes: 0 success, 1 runtime or numeric failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checkpoint as ckpt_io
from . import datapipe, evalkit, gradcheck, kernels
from .config import ArchConfig, ConfigError, load_config, override
from .evalkit import GeneratorTestMode, MetricsReport
from .models import DataRange
from .trainer import PseudoMode, TelemetryWriter, TrainConfig, TrainingError, train

log = logging.getLogger("pseudo_occ")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- prep ------------------------------------------------------------------

def cmd_prep(args) -> int:
    schema = datapipe.kddcup_schema() if args.schema == "kddcup" else datapipe.load_schema(args.schema)
    ds = datapipe.load_csv(args.input, schema, header=args.header)
    split = datapipe.SplitSpec(args.train_fraction, args.test_anomaly_fraction, args.seed)
    train_ds, test_ds = datapipe.kddcup_split(ds, split)
    stats = datapipe.fit_minmax(train_ds)
    train_ds = datapipe.apply_minmax(train_ds, stats)
    test_ds = datapipe.apply_minmax(test_ds, stats)
    datapipe.write_csv(train_ds, args.out_train)
    datapipe.write_csv(test_ds, args.out_test)
    stats_path = args.stats or f"{args.out_train}.stats.csv"
    datapipe.write_stats(stats, train_ds.feature_names, stats_path)
    n_const = int(stats.constant.sum())
    print(f"train: {len(train_ds)} rows, test: {len(test_ds)} rows "
          f"({int(test_ds.labels.sum())} anomalous), {schema.width} features"
          + (f", {n_const} constant features mapped to 0" if n_const else ""))
    return EXIT_OK


# -- train -----------------------------------------------------------------

def _read_train_config(args) -> tuple[TrainConfig, ArchConfig]:
    if args.config:
        cfg, arch = load_config(args.config)
    else:
        cfg, arch = TrainConfig(), ArchConfig()
    mode = PseudoMode.parse(args.mode) if args.mode else None
    return override(cfg, seed=args.seed, mode=mode), arch


def _normal_rows(ds: datapipe.EncodedDataset) -> np.ndarray:
    if ds.labels is None:
        return ds.features
    keep = ds.labels == 0
    if not keep.all():
        log.warning("dropping %d anomalous rows from the training data", int((~keep).sum()))
    return ds.features[keep]


def run_training(data, cfg: TrainConfig, arch: ArchConfig, telemetry_path=None):
    x = _normal_rows(data)
    ae = arch.build(x.shape[1])
    if telemetry_path:
        with open(telemetry_path, "w", newline="", encoding="utf-8") as fh:
            return train(x, ae, cfg, sink=TelemetryWriter(fh))
    return train(x, ae, cfg)


def cmd_train(args) -> int:
    cfg, arch = _read_train_config(args)
    data = datapipe.read_numeric_csv(args.data)
    model = run_training(data, cfg, arch, args.telemetry)
    ckpt_io.save(ckpt_io.Checkpoint.from_model(model), args.out)
    s = ckpt_io.TelemetrySummary.from_rows(model.telemetry)
    print(f"iterations: {s.iterations}")
    print(f"final loss_f: {s.loss_f!r}")
    if model.g_params is not None:
        print(f"final loss_g: {s.loss_g!r}")
        print(f"final noise_norm: {s.noise_norm!r}")
    return EXIT_OK


# -- eval ------------------------------------------------------------------

def compute_scores(ck: ckpt_io.Checkpoint, x: np.ndarray, gen_mode: GeneratorTestMode,
                   score: str, psnr_peak: float | None = None):
    """Normalised anomaly scores in [0, 1] plus any flags raised on the way."""
    ae = ck.ae_config
    if gen_mode is not GeneratorTestMode.WITHOUT_G and ck.g_params is None:
        raise UsageError("checkpoint has no generator; --with-generator needs a learned-noise model")
    recon, target = evalkit.reconstruct_for_mode(ck.f_params, ae.f_spec, ck.g_params, ae.g_spec,
                                                 x, gen_mode, ae.data_range)
    flags = []
    if score == "psnr":
        peak = psnr_peak if psnr_peak is not None else _default_peak(ae.data_range)
        psnr, capped = evalkit.psnr_score(recon, target, peak)
        if capped.any():
            flags.append(f"psnr_capped:{int(capped.sum())}")
        # high PSNR means normal: normalise to a normalcy score, then invert
        normalcy, degenerate = evalkit.minmax_normalize(psnr)
        scores = evalkit.anomaly_from_normalcy(normalcy)
    else:
        scores, degenerate = evalkit.minmax_normalize(kernels.row_sq_norms(recon - target))
    if degenerate:
        flags.append("degenerate_minmax")
    return scores, flags


def _default_peak(rng: DataRange) -> float:
    if rng.bounded:
        return max(abs(rng.lo), abs(rng.hi))
    return 1.0


def evaluate_checkpoint(ck, data: datapipe.EncodedDataset, gen_mode, score, fraction,
                        psnr_peak=None) -> tuple[MetricsReport, np.ndarray]:
    if data.labels is None:
        raise UsageError("evaluation data needs a label column")
    scores, flags = compute_scores(ck, data.features, gen_mode, score, psnr_peak)
    rep = evalkit.evaluate_scores(scores, data.labels, fraction)
    rep.flags = flags
    return rep, scores


def cmd_eval(args) -> int:
    ck = ckpt_io.load(args.ckpt)
    data = datapipe.read_numeric_csv(args.data)
    gen_mode = GeneratorTestMode(args.with_generator)
    rep, scores = evaluate_checkpoint(ck, data, gen_mode, args.score, args.threshold_fraction,
                                      args.psnr_peak)
    text = rep.to_text()
    Path(args.report).write_text(text, encoding="utf-8")
    if args.report_csv:
        rep.write_csv(args.report_csv)
    if args.histogram:
        evalkit.write_histogram_csv(args.histogram, scores, data.labels, args.bins)
    sys.stdout.write(text)
    return EXIT_OK


# -- multirun --------------------------------------------------------------

def _one_run(seed, train_data, test_data, cfg, arch, args):
    run_cfg = replace(cfg, seed=seed)
    model = run_training(train_data, run_cfg, arch)
    ck = ckpt_io.Checkpoint.from_model(model)
    if args.out_dir and args.keep_checkpoints:
        ckpt_io.save(ck, Path(args.out_dir) / f"run_{seed}.ckpt")
    rep, _ = evaluate_checkpoint(ck, test_data, GeneratorTestMode(args.with_generator),
                                 args.score, args.threshold_fraction, args.psnr_peak)
    return rep


def cmd_multirun(args) -> int:
    if args.runs < 1:
        raise UsageError("--runs must be >= 1")
    cfg, arch = _read_train_config(args)
    train_data = datapipe.read_numeric_csv(args.train)
    test_data = datapipe.read_numeric_csv(args.test)
    seeds = [cfg.seed + k for k in range(args.runs)]
    workers = max(1, int(os.environ.get("PSEUDO_OCC_THREADS", "1") or 1))

    def guarded(seed):
        try:
            return _one_run(seed, train_data, test_data, cfg, arch, args), None
        except (TrainingError, FloatingPointError, ValueError) as exc:
            return None, f"{type(exc).__name__}: {exc}"

    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, len(seeds))) as pool:
            outcomes = list(pool.map(guarded, seeds))
    else:
        outcomes = [guarded(s) for s in seeds]

    ok = [rep for rep, err in outcomes if rep is not None]
    failed = [(s, err) for s, (_, err) in zip(seeds, outcomes) if err]
    agg = evalkit.aggregate_runs(ok) if ok else None

    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_manifest(out_dir / "manifest.csv", seeds, outcomes, agg)
        if agg is not None:
            (out_dir / "summary.txt").write_text(agg.to_text(), encoding="utf-8")
    for s, (rep, err) in zip(seeds, outcomes):
        vals = " ".join(f"{k}={v:.4f}" for k, v in rep.values().items()) if rep else f"FAILED {err}"
        print(f"seed {s}: {vals}")
    if agg is not None:
        sys.stdout.write(agg.to_text())
    return EXIT_RUNTIME if failed else EXIT_OK


def _write_manifest(path, seeds, outcomes, agg):
    keys = list(agg.values()) if agg else list(evalkit.METRICS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "status", *keys, "error"])
        for s, (rep, err) in zip(seeds, outcomes):
            if rep is None:
                w.writerow([s, "failed", *[""] * len(keys), err])
            else:
                vals = rep.values()
                w.writerow([s, "ok", *(repr(vals.get(k)) for k in keys), ""])
        if agg is not None:
            w.writerow(["mean", f"n={agg.n_runs}", *(repr(getattr(agg, k)) for k in keys), ""])
            w.writerow(["max", f"n={agg.n_runs}", *(repr(agg.maxima[k]) for k in keys), ""])


# -- gradcheck -------------------------------------------------------------

def _parse_pairs(args):
    if args.spec in gradcheck.PRESETS:
        f_dims, g_dims = gradcheck.PRESETS[args.spec]
        return [(gradcheck.simple_spec(f_dims), gradcheck.simple_spec(g_dims))]
    if args.spec == "random":
        return gradcheck.random_pairs(args.pairs, args.seed)
    try:
        f_text, g_text = args.spec.split("/")
        f_dims = [int(v) for v in f_text.split(",")]
        g_dims = [int(v) for v in g_text.split(",")]
        return [(gradcheck.simple_spec(f_dims), gradcheck.simple_spec(g_dims))]
    except ValueError:
        raise UsageError(f"--spec must be a preset ({', '.join(gradcheck.PRESETS)}), 'random', "
                         "or F_DIMS/G_DIMS such as 4,3,4/4,2,4") from None


def cmd_gradcheck(args) -> int:
    pairs = _parse_pairs(args)
    results = gradcheck.run_suite(pairs, args.seed, args.h, corrupt=args.corrupt_gradient)
    worst = {}
    for r in results:
        worst[r.loss] = max(worst.get(r.loss, 0.0), r.max_rel_error)
    for loss, err in worst.items():
        status = "ok" if err < gradcheck.TOLERANCE else "FAIL"
        print(f"{loss:24s} max rel error {err:.3e}  {status}")
    n_bad = sum(not r.ok for r in results)
    print(f"{len(pairs)} pair(s), {len(results)} checks, {n_bad} failed "
          f"(tolerance {gradcheck.TOLERANCE:g})")
    return EXIT_OK if n_bad == 0 else EXIT_RUNTIME


# -- synth -----------------------------------------------------------------

def cmd_synth(args) -> int:
    ds = datapipe.synth_generate(args.kind.replace("-", "_"), args.n_normal, args.n_anomalous,
                                 args.dim, args.seed)
    datapipe.write_csv(ds, args.out)
    print(f"wrote {len(ds)} rows, {args.dim} features + label to {args.out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------

def _add_eval_flags(p):
    p.add_argument("--with-generator", choices=[m.value for m in GeneratorTestMode], default="off")
    p.add_argument("--score", choices=["mse", "psnr"], default="mse")
    p.add_argument("--threshold-fraction", type=float, default=0.2)
    p.add_argument("--psnr-peak", type=float, default=None,
                   help="peak value M for PSNR (default: largest |bound| of the data range, else 1)")


def _add_train_flags(p):
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mode", help="learned | baseline | gaussian:SIGMA")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pseudo-occ", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="encode, split and normalise a raw CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--schema", required=True, help="schema file, or 'kddcup' for the bundled one")
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.add_argument("--stats", help="normalisation stats CSV (default: OUT_TRAIN.stats.csv)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--header", action="store_true", help="input has a header row")
    p.add_argument("--train-fraction", type=float, default=0.5)
    p.add_argument("--test-anomaly-fraction", type=float, default=0.5)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train F (and G) on normal data")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--telemetry", help="telemetry CSV path")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score labelled data with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True, help="text report path")
    p.add_argument("--report-csv", help="also write the report as CSV")
    p.add_argument("--histogram", help="score histogram CSV path")
    p.add_argument("--bins", type=int, default=50)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("multirun", help="train and evaluate over consecutive seeds")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--keep-checkpoints", action="store_true")
    _add_train_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_multirun)

    p = sub.add_parser("gradcheck", help="finite-difference check of all training losses")
    p.add_argument("--spec", default="tiny-fg",
                   help="preset name, 'random', or F_DIMS/G_DIMS (e.g. 4,3,4/4,2,4)")
    p.add_argument("--pairs", type=int, default=20, help="number of pairs for --spec random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a labelled synthetic dataset")
    p.add_argument("--kind", default="ring", choices=["ring", "gaussian-blob", "two-blobs"])
    p.add_argument("--n-normal", type=int, required=True)
    p.add_argument("--n-anomalous", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except TrainingError as exc:
        print(f"error: training failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (UsageError, ConfigError, datapipe.DataError, ckpt_io.CheckpointError,
            OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
