"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py            # per-kernel timings
    python benchmarks/bench_kernels.py --e2e      # also one training epoch per backend

Per-kernel numbers call each backend module directly. The end-to-end figures
run a fresh interpreter per backend (``AGD_EVADE_PURE_PYTHON`` selects the
fallback) because the backend is fixed at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from agd_evade import codec
from agd_evade._kernels import available_backends, kernel_sources


def kernel_cases(batch=128, rows=32, units=64, channels=128, seed=0):
    rng = np.random.default_rng(seed)
    names = [("".join(rng.choice(list("abcdefghijklmnopqrstuvwxyz0123456789"), rng.integers(6, 20)))
              + ".com").encode() for _ in range(batch)]
    idx = rng.integers(-1, codec.NUM_SYMBOLS, size=(batch, rows))
    a = rng.standard_normal((batch, 4 * units)).astype(np.float32)
    c = rng.standard_normal((batch, units)).astype(np.float32)
    x = rng.standard_normal((batch, rows, channels)).astype(np.float32)
    return {
        "lookup_indices": lambda k: k.lookup_indices(names, codec._BYTE_TABLE, rows),
        "onehot": lambda k: k.onehot(idx, codec.NUM_SYMBOLS, np.dtype(np.float32)),
        "lstm_pointwise_forward": lambda k: k.lstm_pointwise_forward(a, c),
        "lstm_pointwise_backward": lambda k: k.lstm_pointwise_backward(c, c, *_lstm_state(k, a, c)),
        "maxpool_half_forward": lambda k: k.maxpool_half_forward(x),
        "maxpool_half_backward": lambda k: k.maxpool_half_backward(*_pool_grad(k, x), rows),
        "global_maxpool_forward": lambda k: k.global_maxpool_forward(x),
    }


def _lstm_state(k, a, c):
    gates, _, tanh_c, _ = k.lstm_pointwise_forward(a, c)
    return gates, c, tanh_c


def _pool_grad(k, x):
    y, arg = k.maxpool_half_forward(x)
    return np.ones_like(y), arg


def bench_kernels(repeat=5, number=200):
    backends = available_backends()
    results = {}
    for name, fn in kernel_cases().items():
        row = {}
        for bname, mod in backends.items():
            t = min(timeit.repeat(lambda: fn(mod), repeat=repeat, number=number)) / number
            row[bname] = t * 1e6
        results[name] = row
    return results


E2E_SNIPPET = r"""
import json, time
from agd_evade import _kernels, corpus, models
from agd_evade.nn import training
data = corpus.assemble(corpus.bundled_benign(1500), [(s, 500) for s in corpus.parse_roster("lcg:2,dict:2")], 0)
x, y = data.select("target_train")
out = {"backend": _kernels.BACKEND}
for arch in ("substitute_cnn", "lstm_endgame", "cnn_parallel_invincea"):
    m = models.build(arch, data.classes, seed=0)
    t = time.perf_counter()
    training.train(m, x, y, epochs=1)
    out[arch] = time.perf_counter() - t
print(json.dumps(out))
"""


def bench_end_to_end():
    rows = []
    for pure in ("0", "1"):
        env = dict(os.environ, AGD_EVADE_PURE_PYTHON=pure)
        res = subprocess.run([sys.executable, "-c", E2E_SNIPPET], env=env, capture_output=True,
                             text=True, check=True)
        rows.append(json.loads(res.stdout.strip().splitlines()[-1]))
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--e2e", action="store_true", help="also time one training epoch per backend")
    p.add_argument("--number", type=int, default=200, help="calls per timing sample")
    args = p.parse_args(argv)

    results = bench_kernels(number=args.number)
    names = sorted({b for row in results.values() for b in row})
    served = kernel_sources()
    print(f"{'kernel':<26}" + "".join(f"{n + ' (us)':>16}" for n in names)
          + f"{'speedup':>10}{'dispatched to':>15}")
    for kernel, row in results.items():
        speed = row["python"] / row["cython"] if "cython" in row else float("nan")
        print(f"{kernel:<26}" + "".join(f"{row[n]:>16.1f}" for n in names)
              + f"{speed:>9.1f}x{served.get(kernel, '?'):>15}")
    if "cython" not in names:
        print("compiled backend not built; only the fallback was timed")
    if args.e2e:
        print()
        for row in bench_end_to_end():
            backend = row.pop("backend")
            print(f"{backend:<8} one epoch: " + ", ".join(f"{k} {v:.2f}s" for k, v in row.items()))


if __name__ == "__main__":
    main()
