#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the three hot entry points on representative workloads: the training
kernel matrix (the dominant cost of a fit), the prediction cross-kernel,
and the voxel ray-crossing pass behind the overlap metric.

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from lungdeform._kernels import available_backends
from lungdeform.synthgen import GeneratorParams, generate_case


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def workloads():
    rng = np.random.default_rng(0)
    # feature-matrix scale of a 9-case leave-one-out fold (8 cases x 394
    # vertices, 6 landmarks) without augmentation
    xs = rng.normal(size=(3152, 38))
    queries = rng.normal(size=(394, 38))
    mesh = generate_case(GeneratorParams(seed=0), 0).record.inflated
    lo, hi = mesh.bounding_box()
    spacing = float(np.linalg.norm(hi - lo) / 200.0)
    origin = lo - spacing
    ny, nz = (int(np.ceil((hi[d] - lo[d]) / spacing)) + 2 for d in (1, 2))

    def gram(backend):
        return lambda: backend.gaussian_gram(xs, 1.0, 1e-4)

    def cross(backend):
        return lambda: backend.gaussian_cross(queries, xs, 1.0, 1e-4)

    def crossings(backend):
        return lambda: backend.column_crossings(
            mesh.vertices, mesh.triangles, origin[1], origin[2], spacing, ny, nz
        )

    return [
        ("gaussian_gram 3152x38", gram),
        ("gaussian_cross 394x3152", cross),
        (f"column_crossings {ny * nz} cols x {len(mesh.triangles)} tris", crossings),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    if "native" not in backends:
        print("compiled backend not built; benchmarking the fallback only")
    header = f"{'workload':44s}" + "".join(f"{name:>12s}" for name in backends)
    print(header)
    print("-" * len(header))
    for label, make in workloads():
        times = {name: timeit(make(mod), args.repeats) for name, mod in backends.items()}
        row = f"{label:44s}" + "".join(f"{times[name] * 1e3:10.2f}ms" for name in backends)
        if "native" in times and "numpy" in times:
            row += f"   ({times['numpy'] / times['native']:.1f}x)"
        print(row)


if __name__ == "__main__":
    main()
