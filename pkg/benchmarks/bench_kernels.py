"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 50] [--iterations 200]

Times each kernel at training-sized shapes, then a short training loop with
every kernel routed through one backend.
"""
import argparse
import timeit

import numpy as np

from ilgaco import _kernels_py, kernels
from ilgaco.dataset import DatasetSpec, generate_dataset, incremental_splits
from ilgaco.trainer import TrainConfig, new_model, stage_rng, train_on

try:
    from ilgaco import _ckernels
except ImportError:
    _ckernels = None

NAMES = ("maxpool_forward", "maxpool_backward", "maxpool_relu_backward", "gather_windows", "sq_distances",
         "herding_order")


def kernel_cases(rng, batch=32, frames=28, dim=32, emb=32):
    h = np.maximum(rng.normal(size=(batch, frames, emb)), 0)
    pooled, arg = _kernels_py.maxpool_forward(h)
    grad = rng.normal(size=(batch, emb))
    x = rng.normal(size=(480, frames, dim))
    rows = rng.integers(0, 480, batch)
    src = rng.integers(0, frames, (batch, frames))
    noise = rng.normal(size=(batch, frames, dim))
    sig = rng.normal(size=(24, emb))
    return {
        "maxpool_forward": (h,),
        "maxpool_backward": (grad, arg, frames),
        "maxpool_relu_backward": (grad, arg, pooled, frames),
        "gather_windows": (x, rows, src, noise),
        "sq_distances": (sig, rng.normal(size=(20, emb))),
        "herding_order": (sig, 10),
    }


def time_kernels(repeat):
    cases = kernel_cases(np.random.default_rng(0))
    print(f"{'kernel':24s} {'numpy (us)':>12s} {'cython (us)':>12s} {'speedup':>8s}")
    for name in NAMES:
        args = cases[name]
        py = min(timeit.repeat(lambda: getattr(_kernels_py, name)(*args), number=20, repeat=repeat)) / 20
        line = f"{name:24s} {py * 1e6:12.1f}"
        if _ckernels is not None:
            cy = min(timeit.repeat(lambda: getattr(_ckernels, name)(*args), number=20, repeat=repeat)) / 20
            line += f" {cy * 1e6:12.1f} {py / cy:8.2f}x"
        print(line)


def time_training(iterations):
    ds = generate_dataset(DatasetSpec(seed=0))
    windows = incremental_splits(ds, [2]).train_steps[0]
    cfg = TrainConfig()
    results = {}
    for label, impl in (("numpy", _kernels_py), ("cython", _ckernels)):
        if impl is None:
            continue
        for name in NAMES:
            setattr(kernels, name, getattr(impl, name))
        model = new_model(ds, cfg)
        start = timeit.default_timer()
        train_on(model, windows, np.zeros(len(windows)), iterations, cfg.lr_main, cfg, stage_rng(0, 0, 1))
        results[label] = (timeit.default_timer() - start) / iterations
        print(f"training loop, {label:6s} backend: {results[label] * 1e3:.2f} ms/iteration")
    if len(results) == 2:
        print(f"training speedup: {results['numpy'] / results['cython']:.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=50)
    parser.add_argument("--iterations", type=int, default=200)
    args = parser.parse_args()
    print(f"active backend at import: {kernels.BACKEND}")
    if _ckernels is None:
        print("compiled extension not built; timing the numpy fallback only")
    time_kernels(args.repeat)
    time_training(args.iterations)


if __name__ == "__main__":
    main()
