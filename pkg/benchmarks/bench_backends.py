"""Compare the moment-accumulation backends on realistic problem sizes.

The accumulation step (kernel-weighted moment matrices over all grid
nodes) dominates surface estimation, so this is the number that matters.
Both backends receive identical inputs; the script also checks that
their outputs agree bitwise, which the test suite relies on.

Run:  python benchmarks/bench_backends.py [--repeats 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from roughcov import DesignSpec, KernelSpec, NoiseModel, ProcessSpec
from roughcov import add_noise, make_grid, sample_design, simulate_paths
from roughcov._fast import available_backends, get_backend
from roughcov.smoothers import _moment_matrices, build_pairs, default_bandwidth

SIZES = [
    (100, 20, 51),
    (200, 50, 51),
    (200, 50, 101),
]


def _dataset(n, r, seed):
    design = sample_design(DesignSpec(n=n, r=r, seed=seed))
    paths = simulate_paths(ProcessSpec(kind="brownian_motion"), design, seed=seed + 1)
    return add_noise(design, paths, NoiseModel(std_dev=0.2), seed=seed + 2)


def _time_backend(pairs, spec, grid, backend, repeats):
    bk = get_backend(backend)
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = _moment_matrices(pairs, spec, grid, lower_only=False, backend=bk)
        best = min(best, time.perf_counter() - start)
    return best, result


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3, help="best-of repeats")
    args = parser.parse_args()

    backends = available_backends()
    print(f"available backends: {', '.join(backends)}")
    if "cython" not in backends:
        print("compiled extension not built; timing the numpy fallback only")

    header = f"{'n':>5} {'r':>4} {'M':>5} {'pairs':>9}"
    for name in backends:
        header += f" {name + ' (s)':>12}"
    if len(backends) > 1:
        header += f" {'speedup':>8} {'bitwise':>8}"
    print(header)

    for i, (n, r, m) in enumerate(SIZES):
        ds = _dataset(n, r, seed=1000 + i)
        grid = make_grid(m)
        spec = KernelSpec("exp_sequence", h=default_bandwidth(n, m, float(r)))
        pairs = build_pairs(ds, "lower_triangle_strict")
        row = f"{n:>5} {r:>4} {m:>5} {pairs.n_pairs:>9}"
        times = {}
        results = {}
        for name in backends:
            times[name], results[name] = _time_backend(pairs, spec, grid, name, args.repeats)
            row += f" {times[name]:>12.4f}"
        if len(backends) > 1:
            speedup = times["numpy"] / times["cython"]
            fields = results["numpy"].__dataclass_fields__
            same = all(
                getattr(results["numpy"], f).tobytes()
                == getattr(results["cython"], f).tobytes()
                for f in fields
            )
            row += f" {speedup:>7.2f}x {'yes' if same else 'NO':>8}"
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
