"""Compare the compiled kernels against the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``. Prints per-call timings,
the speedup, and the maximum deviation between the two backends.
"""

import argparse
import timeit

import numpy as np

from nanofluxonium import _fallback

try:
    from nanofluxonium import _kernels
except ImportError:  # extension not built
    _kernels = None


def _lindblad_case(d, n_steps, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h0 = 0.5 * (a + a.conj().T)
    b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    hd = (0.05 * (b + b.conj().T))[None]
    t = np.arange(2 * n_steps + 1) * 0.5e-2
    coeff = np.cos(3.0 * t)[None]
    jumps = np.array([(k + 1, k) for k in range(d - 1)])
    rates = np.full(d - 1, 0.02)
    rho0 = np.zeros((d, d), complex)
    rho0[-1, -1] = 1.0
    return (rho0, h0, hd, coeff, jumps, rates, 1e-2, n_steps, n_steps)


def bench(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; only the fallback can run")
        return 1
    rng = np.random.default_rng(args.seed)
    cases = [
        ("displacement_moduli dim=60", "displacement_moduli", (60, 0.9)),
        ("displacement_moduli dim=200", "displacement_moduli", (200, 0.9)),
        ("lindblad_rk4 d=4 x2000", "lindblad_rk4", _lindblad_case(4, 2000, rng)),
        ("lindblad_rk4 d=8 x2000", "lindblad_rk4", _lindblad_case(8, 2000, rng)),
    ]
    print(f"{'case':32s} {'fallback':>12s} {'compiled':>12s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, fn_name, fargs in cases:
        py, cy = getattr(_fallback, fn_name), getattr(_kernels, fn_name)
        diff = float(np.max(np.abs(np.asarray(py(*fargs)) - np.asarray(cy(*fargs)))))
        t_py = bench(py, fargs, args.repeat)
        t_cy = bench(cy, fargs, args.repeat)
        print(f"{name:32s} {t_py * 1e3:10.3f}ms {t_cy * 1e3:10.3f}ms {t_py / t_cy:7.1f}x {diff:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
