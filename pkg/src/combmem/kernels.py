"""Hot numerical kernels with numba and numpy implementations.

Every public kernel dispatches to a ``numba.njit`` compiled loop when
:data:`combmem._accel.USE_NUMBA` is true and to a vectorised numpy version
otherwise. Both are exported under explicit names (``*_numba`` / ``*_numpy``)
so tests and the benchmark can compare them directly.
"""
import numpy as np

from ._accel import USE_NUMBA, njit

__all__ = [
    "propagate_linear",
    "hermite_functions",
    "invert_cdf",
    "propagate_linear_numpy",
    "hermite_functions_numpy",
    "invert_cdf_numpy",
    "propagate_linear_numba",
    "hermite_functions_numba",
    "invert_cdf_numba",
]

_NEWTON_ITERS = 40
_NEWTON_TOL = 1e-15


# ---------------------------------------------------------------------------
# Driven linear system: x[k+1] = P x[k] + c0 u[k] + c1 um[k] + c2 u[k+1]
# ---------------------------------------------------------------------------

def _propagate_linear_loop(P, c0, c1, c2, x0, u, um):
    T = u.shape[0]
    n = x0.shape[0]
    out = np.empty((T, n), dtype=np.complex128)
    x = x0.copy()
    xn = np.empty(n, dtype=np.complex128)
    for k in range(T):
        for i in range(n):
            out[k, i] = x[i]
        if k == T - 1:
            break
        uk = u[k]
        umk = um[k]
        uk1 = u[k + 1]
        for i in range(n):
            acc = c0[i] * uk + c1[i] * umk + c2[i] * uk1
            for j in range(n):
                acc += P[i, j] * x[j]
            xn[i] = acc
        for i in range(n):
            x[i] = xn[i]
    return out


def propagate_linear_numpy(P, c0, c1, c2, x0, u, um):
    T = u.shape[0]
    out = np.empty((T, x0.shape[0]), dtype=np.complex128)
    x = np.array(x0, dtype=np.complex128)
    for k in range(T - 1):
        out[k] = x
        x = P @ x + c0 * u[k] + c1 * um[k] + c2 * u[k + 1]
    out[T - 1] = x
    return out


_propagate_linear_jit = njit(_propagate_linear_loop)


def propagate_linear_numba(P, c0, c1, c2, x0, u, um):
    if _propagate_linear_jit is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    return _propagate_linear_jit(
        np.ascontiguousarray(P, dtype=np.complex128),
        np.ascontiguousarray(c0, dtype=np.complex128),
        np.ascontiguousarray(c1, dtype=np.complex128),
        np.ascontiguousarray(c2, dtype=np.complex128),
        np.ascontiguousarray(x0, dtype=np.complex128),
        np.ascontiguousarray(u, dtype=np.complex128),
        np.ascontiguousarray(um, dtype=np.complex128),
    )


def propagate_linear(P, c0, c1, c2, x0, u, um):
    """Step a driven linear system along a uniform grid.

    ``P`` is the one-step propagator and ``c0, c1, c2`` the Simpson weights
    applied to the drive at the left node, the midpoint and the right node.
    Returns the state at every node, shape ``(len(u), len(x0))``.
    """
    if USE_NUMBA:
        return propagate_linear_numba(P, c0, c1, c2, x0, u, um)
    return propagate_linear_numpy(P, c0, c1, c2, x0, u, um)


# ---------------------------------------------------------------------------
# Harmonic-oscillator eigenfunctions, vacuum variance 1/2
# ---------------------------------------------------------------------------

def _hermite_functions_loop(n_max, x):
    m = x.shape[0]
    out = np.zeros((n_max, m))
    norm0 = np.pi ** -0.25
    for i in range(m):
        xi = x[i]
        prev = 0.0
        cur = norm0 * np.exp(-0.5 * xi * xi)
        for n in range(n_max):
            out[n, i] = cur
            nxt = np.sqrt(2.0 / (n + 1)) * xi * cur - np.sqrt(n / (n + 1.0)) * prev
            prev = cur
            cur = nxt
    return out


def hermite_functions_numpy(n_max, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros((n_max,) + x.shape)
    if n_max == 0:
        return out
    out[0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, n_max - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1.0)) * out[n - 1]
    return out


_hermite_functions_jit = njit(_hermite_functions_loop)


def hermite_functions_numba(n_max, x):
    if _hermite_functions_jit is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    x = np.asarray(x, dtype=float)
    flat = _hermite_functions_jit(int(n_max), np.ascontiguousarray(x.ravel()))
    return flat.reshape((n_max,) + x.shape)


def hermite_functions(n_max, x):
    """Return ``psi_n(x)`` for ``n < n_max`` stacked along the first axis.

    Uses the stable three-term recursion, so large ``n`` does not overflow.
    """
    if USE_NUMBA:
        return hermite_functions_numba(n_max, x)
    return hermite_functions_numpy(n_max, x)


# ---------------------------------------------------------------------------
# Inverse-CDF sampling of phase-dependent quadrature densities
# ---------------------------------------------------------------------------
#
# The CDF at grid node k for LO phase theta is
#     F_k(theta) = sum_d Re(exp(i d theta) * cdf_coef[d, k])
# and its derivative (the density) uses pdf_coef the same way. Inside a cell
# the CDF is the cubic Hermite interpolant of (F, p) at the two nodes.

def _invert_cdf_loop(xgrid, cdf_coef, pdf_coef, thetas, us):
    S = us.shape[0]
    K = xgrid.shape[0]
    D = cdf_coef.shape[0]
    out = np.empty(S)
    rot = np.empty(D, dtype=np.complex128)
    for s in range(S):
        th = thetas[s]
        for d in range(D):
            rot[d] = np.exp(1j * d * th)
        f_first = 0.0
        f_last = 0.0
        for d in range(D):
            f_first += (rot[d] * cdf_coef[d, 0]).real
            f_last += (rot[d] * cdf_coef[d, K - 1]).real
        u = us[s] * (f_last - f_first) + f_first
        lo = 0
        hi = K - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            fm = 0.0
            for d in range(D):
                fm += (rot[d] * cdf_coef[d, mid]).real
            if fm <= u:
                lo = mid
            else:
                hi = mid
        f0 = 0.0
        f1 = 0.0
        p0 = 0.0
        p1 = 0.0
        for d in range(D):
            f0 += (rot[d] * cdf_coef[d, lo]).real
            f1 += (rot[d] * cdf_coef[d, hi]).real
            p0 += (rot[d] * pdf_coef[d, lo]).real
            p1 += (rot[d] * pdf_coef[d, hi]).real
        h = xgrid[hi] - xgrid[lo]
        out[s] = xgrid[lo] + h * _solve_cell(f0, f1, p0 * h, p1 * h, u)
    return out


def _solve_cell_py(f0, f1, m0, m1, u):
    # cubic Hermite on [0, 1] with slopes m0, m1 already scaled by cell width
    if f1 <= f0:
        return 0.5
    a = 0.0
    b = 1.0
    s = (u - f0) / (f1 - f0)
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    for _ in range(_NEWTON_ITERS):
        s2 = s * s
        s3 = s2 * s
        val = ((2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * m0
               + (-2 * s3 + 3 * s2) * f1 + (s3 - s2) * m1) - u
        if val > 0:
            b = s
        else:
            a = s
        der = (6 * s2 - 6 * s) * f0 + (3 * s2 - 4 * s + 1) * m0 \
            + (-6 * s2 + 6 * s) * f1 + (3 * s2 - 2 * s) * m1
        if der > 0:
            s_new = s - val / der
        else:
            s_new = 0.5 * (a + b)
        if s_new <= a or s_new >= b:
            s_new = 0.5 * (a + b)
        if abs(s_new - s) < _NEWTON_TOL or b - a < _NEWTON_TOL:
            s = s_new
            break
        s = s_new
    return s


_solve_cell = njit(_solve_cell_py) or _solve_cell_py

_invert_cdf_jit = njit(_invert_cdf_loop)


def invert_cdf_numba(xgrid, cdf_coef, pdf_coef, thetas, us):
    if _invert_cdf_jit is None:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    return _invert_cdf_jit(
        np.ascontiguousarray(xgrid, dtype=float),
        np.ascontiguousarray(cdf_coef, dtype=np.complex128),
        np.ascontiguousarray(pdf_coef, dtype=np.complex128),
        np.ascontiguousarray(thetas, dtype=float),
        np.ascontiguousarray(us, dtype=float),
    )


def invert_cdf_numpy(xgrid, cdf_coef, pdf_coef, thetas, us):
    xgrid = np.asarray(xgrid, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    us = np.asarray(us, dtype=float)
    K = xgrid.shape[0]
    D = cdf_coef.shape[0]
    rot = np.exp(1j * np.outer(thetas, np.arange(D)))  # (S, D)

    def at(coef, idx):
        return np.einsum("sd,ds->s", rot, coef[:, idx]).real

    f_first = at(cdf_coef, np.zeros(len(us), dtype=int))
    f_last = at(cdf_coef, np.full(len(us), K - 1))
    u = us * (f_last - f_first) + f_first
    lo = np.zeros(len(us), dtype=int)
    hi = np.full(len(us), K - 1)
    while True:
        active = hi - lo > 1
        if not active.any():
            break
        mid = (lo + hi) // 2
        fm = at(cdf_coef, mid)
        go_right = active & (fm <= u)
        go_left = active & ~(fm <= u)
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_left, mid, hi)
    f0 = at(cdf_coef, lo)
    f1 = at(cdf_coef, hi)
    h = xgrid[hi] - xgrid[lo]
    m0 = at(pdf_coef, lo) * h
    m1 = at(pdf_coef, hi) * h

    flat = f1 <= f0
    span = np.where(flat, 1.0, f1 - f0)
    s = np.clip((u - f0) / span, 0.0, 1.0)
    a = np.zeros_like(s)
    b = np.ones_like(s)
    done = flat.copy()
    for _ in range(_NEWTON_ITERS):
        s2 = s * s
        s3 = s2 * s
        val = ((2 * s3 - 3 * s2 + 1) * f0 + (s3 - 2 * s2 + s) * m0
               + (-2 * s3 + 3 * s2) * f1 + (s3 - s2) * m1) - u
        b = np.where(~done & (val > 0), s, b)
        a = np.where(~done & ~(val > 0), s, a)
        der = (6 * s2 - 6 * s) * f0 + (3 * s2 - 4 * s + 1) * m0 \
            + (-6 * s2 + 6 * s) * f1 + (3 * s2 - 2 * s) * m1
        with np.errstate(divide="ignore", invalid="ignore"):
            s_new = np.where(der > 0, s - val / der, 0.5 * (a + b))
        s_new = np.where((s_new <= a) | (s_new >= b), 0.5 * (a + b), s_new)
        finished = (np.abs(s_new - s) < _NEWTON_TOL) | (b - a < _NEWTON_TOL)
        s = np.where(done, s, s_new)
        done = done | finished
        if done.all():
            break
    s = np.where(flat, 0.5, s)
    return xgrid[lo] + h * s


def invert_cdf(xgrid, cdf_coef, pdf_coef, thetas, us):
    """Map uniform variates ``us`` to quadrature values, one LO phase each.

    ``cdf_coef`` and ``pdf_coef`` have shape ``(D, len(xgrid))``; see the
    module comment for their meaning.
    """
    if USE_NUMBA:
        return invert_cdf_numba(xgrid, cdf_coef, pdf_coef, thetas, us)
    return invert_cdf_numpy(xgrid, cdf_coef, pdf_coef, thetas, us)
