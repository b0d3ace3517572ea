#!/usr/bin/env python3
"""Compare the compiled kernel backend against the pure-numpy fallback.

Times each elementwise kernel on training-realistic shapes, then a full
adversarial training step end to end under each backend. Run from the
repository root after building the extension in place:

    python setup.py build_ext --inplace
    python benchmarks/bench_kernels.py
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from mtal import kernels
from mtal.data_model import Batch
from mtal.diffcore import init_adam
from mtal.training import TrainConfig, adversarial_step, build_models


def best_of(fn, repeats=5, inner=20):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - start) / inner)
    return min(times)


def kernel_cases(rng):
    shapes = [(100, 50), (100, 150), (600, 100)]
    cases = []
    for shape in shapes:
        z = rng.normal(size=shape)
        g = rng.normal(size=shape)
        cases.append((f"relu {shape}", lambda b, z=z: b.relu(z)))
        cases.append((f"relu_grad {shape}", lambda b, g=g, z=z: b.relu_grad(g, z)))
    for size in (5_000, 50_000):
        p = rng.normal(size=size)
        g = rng.normal(size=size)
        m = np.zeros(size)
        v = np.zeros(size)
        # in-place update on persistent state, as in training
        cases.append((
            f"adam_update ({size},)",
            lambda b, p=p, g=g, m=m, v=v: b.adam_update(
                p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001
            ),
        ))
        w = rng.normal(size=size)
        out = np.empty(size)
        cases.append((
            f"elastic_net_subgrad ({size},)",
            lambda b, w=w, out=out: b.elastic_net_subgrad(w, 1e-3, 1e-3, out),
        ))
    return cases


def end_to_end(backend_name, steps=30):
    rng = np.random.default_rng(0)
    config = TrainConfig(beta=1e-2, lam=1e-3, alpha=1e-3, layers=2, width=100,
                         units_per_group=50, dropout=0.1, seed=0)
    gen, disc = build_models(20, 2, config, rng)
    gen_opt = init_adam(gen.parameters())
    disc_opt = init_adam(disc.parameters())
    batch = Batch(
        covariates=rng.normal(size=(100, 20)),
        group=np.repeat(np.arange(2), 50),
        outcome=rng.normal(size=100),
    )
    with kernels.use_backend(backend_name):
        start = time.perf_counter()
        for _ in range(steps):
            adversarial_step(gen, disc, batch, config, gen_opt, disc_opt, rng)
        return (time.perf_counter() - start) / steps


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--csv", help="also write results to this CSV file")
    args = parser.parse_args()

    available = kernels.available_backends()
    print(f"available backends: {available}")
    if "compiled" not in available:
        print("compiled backend not built; run `python setup.py build_ext --inplace`")
        return 1

    rng = np.random.default_rng(42)
    rows = []
    print(f"\n{'kernel':34} {'python':>12} {'compiled':>12} {'speedup':>9}")
    for name, fn in kernel_cases(rng):
        t_py = best_of(lambda: fn(kernels.get_backend("python")))
        t_c = best_of(lambda: fn(kernels.get_backend("compiled")))
        rows.append((name, t_py, t_c))
        print(f"{name:34} {t_py * 1e6:10.1f}us {t_c * 1e6:10.1f}us {t_py / t_c:8.2f}x")

    t_py = end_to_end("python")
    t_c = end_to_end("compiled")
    rows.append(("adversarial_step (w=100, m=50)", t_py, t_c))
    print(f"{'adversarial_step (w=100, m=50)':34} "
          f"{t_py * 1e3:10.2f}ms {t_c * 1e3:10.2f}ms {t_py / t_c:8.2f}x")

    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write("case,python_seconds,compiled_seconds,speedup\n")
            for name, py, c in rows:
                fh.write(f"{name},{py!r},{c!r},{py / c!r}\n")
        print(f"\nwrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
