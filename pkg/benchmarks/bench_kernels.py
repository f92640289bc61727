"""Time the numba kernels against their numpy fallbacks on realistic inputs.

Run ``python3 benchmarks/bench_kernels.py [--repeat N]``. The first numba call
(compilation or cache load) is excluded from the timings.
"""
import argparse
import time

import numpy as np
import scipy.linalg

from combmem import kernels, presets
from combmem.dynamics import default_step, system_matrices
from combmem.tomography import coherent_state
from combmem.tomography.homodyne import cdf_table


def propagation_inputs():
    dev = presets.chip_device()
    A, B = system_matrices(dev, dev.group_center(0))
    h = default_step(dev)
    P = scipy.linalg.expm(A * h)
    Ph = scipy.linalg.expm(A * h / 2)
    t = np.arange(40_000) * h - 3 * presets.PULSE_FWHM
    pulse = presets.pulse()
    return (P, (h / 6) * (P @ B), (4 * h / 6) * (Ph @ B), (h / 6) * B,
            np.zeros(dev.size + 1, complex), pulse.envelope(t), pulse.envelope(t + h / 2))


def sampler_inputs(count=200_000, seed=0):
    table = cdf_table(coherent_state(1.0, 8).elements)
    rng = np.random.default_rng(seed)
    return (table.x, table.cdf_coef, table.pdf_coef, rng.uniform(0, 2 * np.pi, count),
            rng.random(count))


def best_time(fn, args, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    cases = [
        ("propagate_linear (40k steps, 9 modes)", "propagate_linear", propagation_inputs()),
        ("hermite_functions (n=12, 1e5 points)", "hermite_functions",
         (12, np.linspace(-10, 10, 100_000))),
        ("invert_cdf (2e5 samples, dim 8)", "invert_cdf", sampler_inputs()),
    ]
    print(f"{'kernel':42s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, inputs in cases:
        f_np = getattr(kernels, f"{name}_numpy")
        f_nb = getattr(kernels, f"{name}_numba")
        ref = f_np(*inputs)
        got = f_nb(*inputs)  # compile or load from cache
        diff = float(np.max(np.abs(np.asarray(got) - np.asarray(ref))))
        t_np = best_time(f_np, inputs, args.repeat)
        t_nb = best_time(f_nb, inputs, args.repeat)
        print(f"{label:42s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
