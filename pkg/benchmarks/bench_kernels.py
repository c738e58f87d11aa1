"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--size N] [--repeat R]
"""
import argparse
import timeit

import numpy as np

from regflow import _backend


def cases(size):
    rng = np.random.default_rng(0)
    tau = np.sort(rng.uniform(0.0, 200.0, size))
    t = np.sort(rng.uniform(0.0, 50.0, size))
    lam = rng.uniform(0.0, 4.0, size)
    # eigenvalues at and around the branch point b^2/4 hit the series path
    lam[: size // 10] = 9.0 / 4.0 * (1.0 + rng.uniform(-1e-3, 1e-3, size // 10))
    return [
        ("normalized_bessel nu=2", lambda k: k.normalized_bessel(2.0, tau)),
        ("normalized_bessel nu=0.5", lambda k: k.normalized_bessel(0.5, tau)),
        ("bessel_j nu=7.5", lambda k: k.bessel_j(7.5, tau)),
        ("heavy_ball b=3", lambda k: k.heavy_ball(3.0, t, lam)),
        ("heavy_ball b=1", lambda k: k.heavy_ball(1.0, t, lam)),
        # scalar calls, as issued by root searches and sup scans
        ("normalized_bessel x1000", lambda k: tuple(k.normalized_bessel(2.0, tau[i:i + 1])[0] for i in range(1000))),
        ("heavy_ball x1000", lambda k: tuple(k.heavy_ball(3.0, t[i:i + 1], lam[i:i + 1])[0] for i in range(1000))),
    ]


def _parts(out):
    return [np.asarray(x, dtype=float).ravel() for x in (out if isinstance(out, tuple) else (out,))]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernels not built; only the Python fallback is available")
    names = sorted(backends)
    print(f"size={args.size} repeat={args.repeat} (best of repeats, ms)")
    print(f"{'kernel':28s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(args.size):
        times = {}
        outs = {}
        for n in names:
            k = backends[n]
            outs[n] = fn(k)
            times[n] = min(timeit.repeat(lambda k=k: fn(k), number=1, repeat=args.repeat)) * 1e3
        line = f"{label:28s}" + "".join(f"{times[n]:12.2f}" for n in names)
        if len(names) > 1:
            dev = max(float(np.max(np.abs(a - b))) for a, b in zip(_parts(outs["cython"]), _parts(outs["python"])))
            line += f"{times['python'] / times['cython']:11.1f}x  (max diff {dev:.1e})"
        print(line)


if __name__ == "__main__":
    main()
