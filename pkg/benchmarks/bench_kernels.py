"""Timing comparison of the compiled pooling kernels vs the pure-Python
(numpy) fallback on realistic workloads.

Run:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from couplenet.kernels import python_backend
from couplenet.roi import RoI, bin_ranges

try:
    from couplenet.kernels import _cykernels
except ImportError:
    _cykernels = None


def _bounds(roi, g, scale, shape):
    _, _, h, w = shape
    return bin_ranges(roi, scale, g, g, h, w)


def bench(fn, repeats=5):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    rng = np.random.default_rng(0)
    k, nc, n_rois = 3, 5, 64
    features = rng.normal(size=(1, 64, 24, 24))
    score_maps = rng.normal(size=(1, k * k * nc, 24, 24))
    rois = []
    for _ in range(n_rois):
        x1, x2 = sorted(rng.uniform(0, 88, 2))
        y1, y2 = sorted(rng.uniform(0, 88, 2))
        rois.append(RoI(0, x1, y1, x2 + 8.0, y2 + 8.0))

    backends = {"python": python_backend}
    if _cykernels is not None:
        backends["cython"] = _cykernels
    else:
        print("compiled backend unavailable; benchmarking python only")

    print(f"{n_rois} RoIs, features {features.shape}, score maps "
          f"{score_maps.shape}, k={k}, {nc} channels out")
    results = {}
    for name, mod in backends.items():
        def run_max(mod=mod):
            for roi in rois:
                hs, he, ws, we = _bounds(roi, 7, 0.25, features.shape)
                mod.roi_max_pool(features[0], hs, he, ws, we)

        def run_psroi(mod=mod):
            for roi in rois:
                hs, he, ws, we = _bounds(roi, k, 0.25, score_maps.shape)
                mod.psroi_avg_pool(score_maps[0], k, nc, hs, he, ws, we)

        t_max = bench(run_max)
        t_ps = bench(run_psroi)
        results[name] = (t_max, t_ps)
        print(f"{name:8s} roi_max_pool {t_max * 1e3:8.2f} ms   "
              f"psroi_avg_pool {t_ps * 1e3:8.2f} ms")

    if len(results) == 2:
        for i, op in enumerate(("roi_max_pool", "psroi_avg_pool")):
            speedup = results["python"][i] / results["cython"][i]
            print(f"{op}: compiled backend {speedup:.1f}x faster")


if __name__ == "__main__":
    main()
