"""Time each kernel on both backends and print the speedups.

Run as: python3 benchmarks/bench_backends.py [--frames N] [--classes L]
"""

import argparse
import time

import numpy as np

from ltseg import _kernels


def best_of(fn, repeat=5):
    times = []
    fn()  # warm up
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def build_cases(frames, classes, dim, radius):
    rng = np.random.default_rng(0)
    features = rng.normal(size=(dim, frames)).astype(np.float32)
    logits = rng.normal(scale=3.0, size=(frames, classes))
    labels = rng.integers(0, classes, frames)
    weights = rng.uniform(0.2, 4.0, frames)
    truth = rng.integers(0, classes, frames)
    pred = rng.integers(0, classes, frames)
    prev = rng.integers(0, classes + 1, frames)
    seg_a = rng.integers(0, classes, 400).astype(np.int64)
    seg_b = rng.integers(0, classes, 380).astype(np.int64)

    def confusion():
        counts = np.zeros((classes, classes, classes + 1), np.int64)
        _kernels.count_confusion_into(counts, truth, pred, prev)

    return {
        "window_stack": lambda: _kernels.window_stack(features, radius),
        "softmax_xent_grad": lambda: _kernels.softmax_xent_grad(
            logits, labels, weights
        ),
        "count_confusion_into": confusion,
        "levenshtein": lambda: _kernels.levenshtein(seg_a, seg_b),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--frames", type=int, default=20000)
    parser.add_argument("--classes", type=int, default=24)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--radius", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    cases = build_cases(args.frames, args.classes, args.dim, args.radius)
    print(
        f"frames={args.frames} classes={args.classes} dim={args.dim} "
        f"radius={args.radius} backends={backends}"
    )
    header = f"{'kernel':<22}" + "".join(f"{name + ' ms':>14}" for name in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    original = _kernels.backend_name()
    try:
        for kernel, fn in cases.items():
            timings = {}
            for name in backends:
                _kernels.set_backend(name)
                timings[name] = best_of(fn, repeat=args.repeat)
            row = f"{kernel:<22}" + "".join(
                f"{timings[name] * 1e3:>14.3f}" for name in backends
            )
            if "numpy" in timings and "compiled" in timings:
                row += f"{timings['numpy'] / timings['compiled']:>9.2f}x"
            print(row)
    finally:
        _kernels.set_backend(original)


if __name__ == "__main__":
    main()
