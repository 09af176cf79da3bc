"""Compare the compiled and numpy column scorers.

    python3 benchmarks/bench_ulsif.py [--rows 33] [--cols 120] [--repeat 3]

Scores one CP worth of columns (``cols`` comparisons, symmetrized) per
repeat and reports the best wall time per backend, the speedup and the
largest score disagreement.
"""
import argparse
import time

import numpy as np

from symdetect import kernels
from symdetect.ulsif import UlsifConfig


def bench(backend, F, G, cfg, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t = time.perf_counter()
        out = kernels.score_columns(F, G, cfg.sigma_grid, cfg.lambda_grid, cfg.max_centers,
                                    cfg.symmetrize, backend)
        best = min(best, time.perf_counter() - t)
    return best, out.scores


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--rows", type=int, default=33)
    ap.add_argument("--cols", type=int, default=120)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    F = 400 + rng.standard_normal((args.rows, args.cols))
    G = 400 + rng.standard_normal((args.rows, args.cols))
    G[: args.rows // 3] -= 3.0  # some asymmetric columns
    cfg = UlsifConfig()

    results = {b: bench(b, F, G, cfg, args.repeat) for b in kernels.available_backends()}
    for b, (t, _) in results.items():
        print(f"{b:9s} {t * 1e3:9.1f} ms  ({t / args.cols * 1e3:.3f} ms per comparison)")
    if "compiled" in results:
        tc, sc = results["compiled"]
        tp, sp = results["python"]
        print(f"speedup   {tp / tc:9.2f}x")
        print(f"max |diff| {np.max(np.abs(sc - sp)):.3e}")
    else:
        print("compiled backend not built; only the numpy fallback was timed")


if __name__ == "__main__":
    main()
