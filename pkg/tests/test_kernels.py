import os
import subprocess
import sys

import numpy as np
import pytest
from scipy.integrate import trapezoid

from combmem import kernels
from combmem.tomography import coherent_state
from combmem.tomography.homodyne import cdf_table


def _propagation_inputs(n=5, steps=400, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    P = 0.9 * A / np.max(np.abs(np.linalg.eigvals(A)))
    c = [rng.normal(size=n) + 1j * rng.normal(size=n) for _ in range(3)]
    u = rng.normal(size=steps) + 1j * rng.normal(size=steps)
    um = rng.normal(size=steps) + 1j * rng.normal(size=steps)
    return P, c[0], c[1], c[2], np.zeros(n, complex), u, um


def test_propagate_parity():
    args = _propagation_inputs()
    a = kernels.propagate_linear_numpy(*args)
    b = kernels.propagate_linear_numba(*args)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_propagate_recurrence():
    P, c0, c1, c2, x0, u, um = _propagation_inputs(steps=4)
    out = kernels.propagate_linear(P, c0, c1, c2, x0, u, um)
    x1 = P @ x0 + c0 * u[0] + c1 * um[0] + c2 * u[1]
    assert np.allclose(out[0], x0) and np.allclose(out[1], x1)


def test_hermite_parity_and_orthonormality():
    x = np.linspace(-12, 12, 4001)
    a = kernels.hermite_functions_numpy(10, x)
    b = kernels.hermite_functions_numba(10, x)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    gram = trapezoid(a[:, None, :] * a[None, :, :], x, axis=-1)
    assert np.allclose(gram, np.eye(10), atol=1e-10)


def test_invert_cdf_parity():
    table = cdf_table(coherent_state(0.7 + 0.2j, 8).elements)
    rng = np.random.default_rng(1)
    th, us = rng.uniform(0, 2 * np.pi, 2000), rng.random(2000)
    a = kernels.invert_cdf_numpy(table.x, table.cdf_coef, table.pdf_coef, th, us)
    b = kernels.invert_cdf_numba(table.x, table.cdf_coef, table.pdf_coef, th, us)
    assert np.allclose(a, b, atol=1e-12)
    for x, t, u in zip(a[:50], th[:50], us[:50]):
        assert abs(table.cdf(x, t) - u) < 1e-9


@pytest.mark.parametrize("flag,expected", [("1", "numpy"), ("0", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = dict(os.environ, COMBMEM_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import combmem; print(combmem.backend_name())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected
