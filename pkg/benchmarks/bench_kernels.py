"""Benchmark the compiled kernel backend against the NumPy fallback.

Times the per-pixel hot kernels (bilinear warp, photometric residual with
gradient, sparse L1 scatter, smoothness terms, Gaussian splatting) on a few
grid sizes and prints a speedup table, plus an end-to-end adaptation-window
timing.

Usage:
    python benchmarks/bench_kernels.py [--sizes 128 256 512] [--repeat 20]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from patternflow.kernels import available_backends, get_backend


def _time(fn, repeat: int) -> float:
    fn()  # warm up
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _workload(size: int, rng: np.random.Generator):
    pattern = rng.random((size, size))
    frame = rng.random((size, size))
    disp = rng.uniform(2.0, size / 4.0, (size, size))
    disp_valid = np.ones((size, size), dtype=bool)
    n_pts = 4 * size
    xs = rng.uniform(0, size - 1, n_pts)
    ys = rng.uniform(0, size - 1, n_pts)
    target = rng.uniform(0, size / 4.0, n_pts)
    weight = rng.uniform(0.1, 1.0, n_pts)
    return dict(pattern=pattern, frame=frame, disp=disp,
                disp_valid=disp_valid, xs=xs, ys=ys, target=target,
                weight=weight)


def bench_size(size: int, repeat: int) -> list[tuple[str, dict[str, float]]]:
    rng = np.random.default_rng(0)
    w = _workload(size, rng)
    cases = {
        "bilinear_sample": lambda k: k.bilinear_sample(w["pattern"], w["xs"], w["ys"]),
        "warp_pattern": lambda k: k.warp_pattern(w["pattern"], w["disp"], w["disp_valid"]),
        "photometric_term": lambda k: k.photometric_term(w["frame"], w["pattern"],
                                                         w["disp"], w["disp_valid"]),
        "sparse_l1_term": lambda k: k.sparse_l1_term(w["disp"], w["xs"], w["ys"],
                                                     w["target"], w["weight"]),
        "tv_term": lambda k: k.tv_term(w["disp"]),
        "quad_smooth_term": lambda k: k.quad_smooth_term(w["disp"]),
        "splat_add": lambda k: k.splat_add(np.zeros((size, size)), w["xs"],
                                           w["ys"], 1.0, 1.2, 4.8),
    }
    rows = []
    for name, call in cases.items():
        timings = {}
        for backend in available_backends():
            k = get_backend(backend)
            timings[backend] = _time(lambda: call(k), repeat)
        rows.append((name, timings))
    return rows


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[128, 512])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()

    backends = available_backends()
    if len(backends) < 2:
        print("note: compiled backend not built; timing NumPy only")
    for size in args.sizes:
        print(f"\n== {size}x{size} grid, {4 * size} sparse points "
              f"(best of {args.repeat}) ==")
        header = f"{'kernel':>18s}" + "".join(f"{b:>12s}" for b in backends)
        if len(backends) == 2:
            header += f"{'speedup':>10s}"
        print(header)
        for name, timings in bench_size(size, args.repeat):
            line = f"{name:>18s}"
            for backend in backends:
                line += f"{timings[backend] * 1e3:>10.3f}ms"
            if len(backends) == 2:
                line += f"{timings['numpy'] / timings['native']:>9.1f}x"
            print(line)


if __name__ == "__main__":
    main()
