"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 50]

Each pair is first checked for agreement, then timed after a warm-up call
(so jit compilation is excluded).
"""

import argparse
import time

import numpy as np

from cfran import kernels as kn
from cfran._accel import HAVE_NUMBA


def cone_point(rng, nl, qs):
    """Random point in the interior of the product cone."""
    x = np.empty(nl + int(qs.sum()))
    x[:nl] = rng.uniform(0.1, 2.0, nl)
    off = nl
    for q in qs:
        tail = rng.normal(size=q - 1)
        x[off] = np.linalg.norm(tail) + rng.uniform(0.1, 1.0)
        x[off + 1 : off + q] = tail
        off += q
    return x


def cases(rng):
    nl = 300
    qs = np.array([9] * 16 + [129] * 8, dtype=np.int64)
    s, z, dx = cone_point(rng, nl, qs), cone_point(rng, nl, qs), rng.normal(size=nl + int(qs.sum()))
    d, beta, v, _ = kn.np_nt_scaling(s, z, nl, qs)
    M = np.ascontiguousarray(rng.normal(size=(s.size, 150)))
    g = rng.normal(size=(200, 8, 8, 16)) + 1j * rng.normal(size=(200, 8, 8, 16))
    return {
        "nt_scaling": (kn.nb_nt_scaling, kn.np_nt_scaling, (s, z, nl, qs)),
        "scale (matrix)": (kn.nb_scale, kn.np_scale, (d, beta, v, nl, qs, M, False)),
        "jprod": (kn.nb_jprod, kn.np_jprod, (s, z, nl, qs)),
        "jdiv": (kn.nb_jdiv, kn.np_jdiv, (s, z, nl, qs)),
        "max_step": (kn.nb_max_step, kn.np_max_step, (s, dx, nl, qs)),
        "second_moments": (kn.nb_second_moments, kn.np_second_moments, (g,)),
    }


def best_time(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t)
    return min(times)


def agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(np.asarray(x), np.asarray(y), rtol=1e-9, atol=1e-12) for x, y in zip(a, b))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<16} {'numpy (us)':>12} {'numba (us)':>12} {'speedup':>8}  match")
    for name, (nb, npf, a) in cases(rng).items():
        t_np = best_time(npf, a, args.repeat)
        if HAVE_NUMBA:
            t_nb = best_time(nb, a, args.repeat)
            ok = agree(nb(*a), npf(*a))
            print(f"{name:<16} {t_np * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_np / t_nb:8.2f}  {ok}")
        else:
            print(f"{name:<16} {t_np * 1e6:12.1f} {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
