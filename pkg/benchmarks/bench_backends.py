"""Compare the numba and numpy kernel backends.

Kernel timings call both modules directly through ``kernels.load``. The
end-to-end training timing needs the backend fixed at import, so each backend
runs in its own subprocess with ``PSEUDO_OCC_BACKEND`` set.

    python3 benchmarks/bench_backends.py [--repeat 5] [--rows 1024]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pseudo_occ.kernels import TANH, load

TRAIN_SNIPPET = """
import time
from pseudo_occ import TrainConfig, train, kddcup_config
from pseudo_occ.nn import make_rng
x = make_rng(0).uniform(size=({rows}, 118))
cfg = TrainConfig(batch_size=256, epochs=1, seed=0)
ae = kddcup_config()
train(x[:256], ae, cfg)  # warm up / compile
t0 = time.perf_counter()
train(x, ae, cfg)
print(time.perf_counter() - t0)
"""


def best_of(fn, repeat):
    fn()  # warm up (numba compiles on first call)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_cases(mod, rows, rng):
    x = rng.normal(size=(rows, 118))
    w = rng.normal(size=(60, 118)) * 0.1
    b = np.zeros(60)
    z, a = mod.dense_forward(x, w, b, TANH, 0.0)
    grad = rng.normal(size=a.shape)
    p, g = rng.normal(size=(60, 118)), rng.normal(size=(60, 118))
    m, v = np.zeros_like(p), np.zeros_like(p)
    raw = rng.normal(size=x.shape)
    return {
        "dense_forward 118->60": lambda: mod.dense_forward(x, w, b, TANH, 0.0),
        "dense_backward 60->118": lambda: mod.dense_backward(x, w, z, a, grad, TANH, 0.0),
        "adam_update 60x118": lambda: mod.adam_update(p, g, m, v, 1e-4, 0.9, 0.999, 1e-8, 1),
        "clip_recompute": lambda: mod.clip_recompute(x, raw, -1.0, 1.0),
        "row_sq_norms": lambda: mod.row_sq_norms(x),
    }


def train_time(backend, rows):
    env = dict(os.environ, PSEUDO_OCC_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", TRAIN_SNIPPET.format(rows=rows)],
                         env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--rows", type=int, default=1024)
    ap.add_argument("--train-rows", type=int, default=8192)
    args = ap.parse_args(argv)

    mods = {name: load(name) for name in ("numpy", "numba")}
    timings = {}
    for name, mod in mods.items():
        cases = kernel_cases(mod, args.rows, np.random.default_rng(0))
        timings[name] = {k: best_of(fn, args.repeat) for k, fn in cases.items()}

    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for k in timings["numpy"]:
        t_np, t_nb = timings["numpy"][k], timings["numba"][k]
        print(f"{k:28s} {t_np * 1e3:10.3f} {t_nb * 1e3:10.3f} {t_np / t_nb:8.2f}")

    t_np, t_nb = train_time("numpy", args.train_rows), train_time("numba", args.train_rows)
    label = f"train 1 epoch, {args.train_rows} rows"
    print(f"{label:28s} {t_np * 1e3:10.1f} {t_nb * 1e3:10.1f} {t_np / t_nb:8.2f}")


if __name__ == "__main__":
    main()
