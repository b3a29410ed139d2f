"""Time the numba loop kernels against the numpy kernels.

    python3 benchmarks/bench_attention.py [--m 512] [--p 512] [--e 64] [--f 64] [--m0 64] [--repeat 5]

The jit column is skipped when numba is unavailable or CASCADESIM_DISABLE_JIT=1.
"""

import argparse
import time

import numpy as np

from cascadesim import _jit
from cascadesim.attention import STABLE_VARIANTS, AttnConfig, max_rel_error, run_variant


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--m", type=int, default=512)
    ap.add_argument("--p", type=int, default=512)
    ap.add_argument("--e", type=int, default=64)
    ap.add_argument("--f", type=int, default=64)
    ap.add_argument("--m0", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    Q = rng.standard_normal((args.e, args.p))
    K = rng.standard_normal((args.e, args.m))
    V = rng.standard_normal((args.f, args.m))
    cfg = AttnConfig(args.m, args.p, args.e, args.f, args.m0)
    with_jit = _jit.use_jit()

    print(f"M={args.m} P={args.p} E={args.e} F={args.f} M0={args.m0} jit={'on' if with_jit else 'off'}")
    print(f"{'variant':<16}{'numpy [ms]':>12}{'jit [ms]':>12}{'speedup':>10}{'max diff':>12}")
    for name in ("naive", *STABLE_VARIANTS):
        ref = run_variant(name, Q, K, V, cfg, backend="numpy")
        t_np = best_of(lambda: run_variant(name, Q, K, V, cfg, backend="numpy"), args.repeat)
        if with_jit:
            out = run_variant(name, Q, K, V, cfg, backend="jit")  # compile outside the timed region
            t_jit = best_of(lambda: run_variant(name, Q, K, V, cfg, backend="jit"), args.repeat)
            diff = max_rel_error(out.output, ref.output)
            print(f"{name:<16}{t_np * 1e3:>12.2f}{t_jit * 1e3:>12.2f}{t_np / t_jit:>10.2f}{diff:>12.1e}")
        else:
            print(f"{name:<16}{t_np * 1e3:>12.2f}{'-':>12}{'-':>10}{'-':>12}")


if __name__ == "__main__":
    main()
