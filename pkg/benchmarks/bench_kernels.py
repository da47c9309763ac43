"""Compare the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--frames N] [--repeat K]

Times feature extraction (hue LUT + S/V binning) and scoring on a batch of
synthetic histograms, once per backend.
"""

import argparse
import time

import numpy as np

from colorshed import _kernels_py
from colorshed.features import DEFAULT_COLORS, BinGrid, _cell_to_bin
from colorshed.synth import QUANT, make_histogram, positive_mix

try:
    from colorshed import _kernels
except ImportError:
    _kernels = None


def make_batch(n, seed=0):
    rng = np.random.default_rng(seed)
    return [make_histogram(rng, positive_mix(rng, ("red",), {"red"}), 4000) for _ in range(n)]


def bench(impl, hists, grid, repeat):
    lut = DEFAULT_COLORS["red"].lut(QUANT[0])
    smap = _cell_to_bin(QUANT[1], grid.sat_bin_size)
    vmap = _cell_to_bin(QUANT[2], grid.val_bin_size)
    ns, nv = grid.shape
    w = np.random.default_rng(1).random(ns * nv)
    best_feat = best_score = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        pfs = [impl.accumulate_pf(h.cells, h.counts, lut, smap, vmap, ns, nv)[0] for h in hists]
        t1 = time.perf_counter()
        for pf in pfs:
            impl.weighted_sum(w, pf)
        t2 = time.perf_counter()
        best_feat = min(best_feat, t1 - t0)
        best_score = min(best_score, t2 - t1)
    return len(hists) / best_feat, len(hists) / best_score, pfs


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--frames", type=int, default=5000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    grid = BinGrid()
    hists = make_batch(args.frames)
    results = {}
    backends = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])
    for name, impl in backends:
        feat, score, pfs = bench(impl, hists, grid, args.repeat)
        results[name] = pfs
        print(f"{name:9s} features {feat:12.0f} frames/s   scoring {score:12.0f} frames/s")
    if _kernels is None:
        print("compiled extension not built; only the fallback was measured")
    else:
        same = all(np.array_equal(a, b) for a, b in zip(results["python"], results["compiled"]))
        print(f"outputs identical across backends: {same}")


if __name__ == "__main__":
    main()
