"""Maximum-likelihood state and process reconstruction from homodyne data.

Every Hermitian operator is handled as a real vector ``v`` with
``Tr(A B) = v(A) . v(B)``, so each POVM cell is one row of a real matrix and
an iteration reduces to a few matrix-vector products.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.stats import poisson

from ..errors import ConvergenceError, DataError, ValidationError
from ..kernels import hermite_functions
from .homodyne import QuadratureBatch
from .states import CutoffWarning, DensityMatrix, ProcessTensor, _closest_state, coherent_state

BIN_WIDTH = 0.1
X_RANGE = 8.0
MAX_PHASE_BINS = 64
PROCESS_PHASE_BINS = 16
GAIN_TOL = 1e-10
MAX_ITERATIONS = 5000
MAX_PROCESS_ITERATIONS = 20000
PROCESS_METHODS = ("covariant", "pooled")
DEFAULT_PADDING = {"covariant": 3, "pooled": 2, "full": 0}
_SUBSTEPS = 20  # Simpson sub-intervals per quadrature bin


# ---------------------------------------------------------------------------
# Hermitian <-> real vector
# ---------------------------------------------------------------------------

def herm_to_vec(A):
    """Stack ``diag, sqrt2 Re(upper), sqrt2 Im(upper)`` along the last axis."""
    A = np.asarray(A)
    w = A.shape[-1]
    iu = np.triu_indices(w, 1)
    up = A[..., iu[0], iu[1]]
    r2 = math.sqrt(2.0)
    return np.concatenate([np.diagonal(A, axis1=-2, axis2=-1).real, r2 * up.real, r2 * up.imag],
                          axis=-1)


def vec_to_herm(v, w):
    v = np.asarray(v, dtype=float)
    iu = np.triu_indices(w, 1)
    k = len(iu[0])
    A = np.zeros(v.shape[:-1] + (w, w), dtype=complex)
    idx = np.arange(w)
    A[..., idx, idx] = v[..., :w]
    up = (v[..., w:w + k] + 1j * v[..., w + k:]) / math.sqrt(2.0)
    A[..., iu[0], iu[1]] = up
    A[..., iu[1], iu[0]] = up.conj()
    return A


# ---------------------------------------------------------------------------
# POVM construction
# ---------------------------------------------------------------------------

def bin_edges(values=None, width=BIN_WIDTH, half_range=X_RANGE, dim=1):
    """Bin edges covering ``[-half_range, half_range]``, the data and the
    support of every ``dim``-level state."""
    need = math.sqrt(2.0 * dim + 1.0) + 5.0
    lo, hi = min(-half_range, -need), max(half_range, need)
    if values is not None and len(values):
        lo = min(lo, float(np.min(values)) - width)
        hi = max(hi, float(np.max(values)) + width)
    k_lo = math.floor(lo / width + 1e-9)
    k_hi = math.ceil(hi / width - 1e-9)
    return width * np.arange(k_lo, k_hi + 1)


def bin_overlaps(dim, edges):
    """``I[b, m, n] = int_{edges[b]}^{edges[b+1]} psi_m psi_n dx``."""
    edges = np.asarray(edges, dtype=float)
    nb = len(edges) - 1
    x = np.linspace(edges[0], edges[-1], nb * _SUBSTEPS + 1)
    psi = hermite_functions(dim, x)
    prod = psi[:, None, :] * psi[None, :, :]
    cum = np.zeros_like(prod)
    cum[..., 1:] = cumulative_simpson(prod, x=x, axis=-1)
    return np.moveaxis(np.diff(cum[..., ::_SUBSTEPS], axis=-1), -1, 0)


@dataclass
class PhaseGroups:
    """LO phases grouped either exactly (few distinct values) or into bins."""

    labels: np.ndarray   # group index per sample
    centers: np.ndarray  # representative phase per group
    widths: np.ndarray   # phase-bin width per group (0 for exact phases)


def group_phases(phases, max_bins=MAX_PHASE_BINS) -> PhaseGroups:
    ph = np.mod(np.asarray(phases, dtype=float), 2 * math.pi)
    uniq, inv = np.unique(ph, return_inverse=True)
    if len(uniq) <= max_bins:
        return PhaseGroups(inv, uniq, np.zeros(len(uniq)))
    w = 2 * math.pi / max_bins
    labels = np.minimum((ph / w).astype(int), max_bins - 1)
    return PhaseGroups(labels, (np.arange(max_bins) + 0.5) * w, np.full(max_bins, w))


def _projector_phases(dim, center, width):
    """``e^{i (a - b) theta}`` averaged over a phase bin, indexed ``[a, b]``."""
    d = np.arange(dim)[:, None] - np.arange(dim)[None, :]
    return np.exp(1j * d * center) * np.sinc(d * width / (2 * math.pi))


def povm_cells(batch: QuadratureBatch, dim, max_phase_bins=MAX_PHASE_BINS):
    """Occupied (phase-group, x-bin) cells of a batch.

    Returns ``(V, counts)`` where row ``i`` of ``V`` is the vectorised
    projector ``Pi_i``: the cell probability is ``v(rho) . V[i]``.
    """
    edges = bin_edges(batch.values, dim=dim)
    I = bin_overlaps(dim, edges)
    groups = group_phases(batch.phases, max_phase_bins)
    xbin = np.clip(np.searchsorted(edges, batch.values, side="right") - 1, 0, len(edges) - 2)
    counts = np.zeros((len(groups.centers), len(edges) - 1))
    np.add.at(counts, (groups.labels, xbin), 1.0)
    g, b = np.nonzero(counts)
    fac = np.stack([_projector_phases(dim, c, w) for c, w in zip(groups.centers, groups.widths)])
    Pi = fac[g] * I[b]
    return herm_to_vec(Pi), counts[g, b]


def _loglik(p, counts):
    return float(np.dot(counts, np.log(np.maximum(p, 1e-300))))


# ---------------------------------------------------------------------------
# State reconstruction
# ---------------------------------------------------------------------------

def _em_state(V, counts, rho, tol, max_iter):
    w = rho.shape[0]
    N = counts.sum()
    p = V @ herm_to_vec(rho)
    L = _loglik(p, counts)
    history = [L]
    eye = np.eye(w)
    for it in range(1, max_iter + 1):
        R = vec_to_herm(V.T @ (counts / (N * np.maximum(p, 1e-300))), w)
        eps = None
        while True:
            # plain R rho R first, then diluted (I + eps R) steps, which
            # increase the likelihood once eps is small enough
            S = R if eps is None else eye + eps * R
            cand = S @ rho @ S.conj().T
            cand = _closest_state(cand / np.trace(cand).real)
            p_new = V @ herm_to_vec(cand)
            L_new = _loglik(p_new, counts)
            if L_new >= L - 1e-12 * abs(L) or (eps is not None and eps < 1e-8):
                break
            eps = 1.0 if eps is None else eps / 2
        gain = (L_new - L) / N
        rho, p, L = cand, p_new, L_new
        history.append(L)
        if gain < tol:
            return rho, {"iterations": it, "loglik": L, "history": history, "converged": True}
    raise ConvergenceError(f"state MLE did not converge in {max_iter} iterations", rho,
                           {"iterations": max_iter, "loglik": L, "history": history})


def _em_populations(B, counts, q, tol, max_iter):
    N = counts.sum()
    p = B @ q
    L = _loglik(p, counts)
    history = [L]
    for it in range(1, max_iter + 1):
        q = q * (B.T @ (counts / (N * np.maximum(p, 1e-300))))
        q = q / q.sum()
        p = B @ q
        L_new = _loglik(p, counts)
        gain, L = (L_new - L) / N, L_new
        history.append(L)
        if gain < tol:
            return q, {"iterations": it, "loglik": L, "history": history, "converged": True}
    raise ConvergenceError(f"population MLE did not converge in {max_iter} iterations",
                           DensityMatrix.from_populations(q),
                           {"iterations": max_iter, "loglik": L, "history": history})


def mle_state(batch: QuadratureBatch, dim, diagonal=False, tol=GAIN_TOL,
              max_iterations=MAX_ITERATIONS, max_phase_bins=MAX_PHASE_BINS,
              return_diagnostics=False):
    """Maximum-likelihood density matrix from one batch of quadratures.

    Iterates ``rho -> R rho R`` (diluted when a plain step would lower the
    likelihood) over binned quadrature projectors until the log-likelihood
    gain per sample drops below ``tol``. With ``diagonal=True`` only the
    photon-number distribution is estimated from the phase-pooled histogram.
    """
    if len(batch) == 0:
        raise DataError("empty quadrature batch")
    dim = int(dim)
    if dim < 1:
        raise ValidationError("dim must be positive", key="dim")
    if diagonal:
        edges = bin_edges(batch.values, dim=dim)
        B = np.einsum("bnn->bn", bin_overlaps(dim, edges))
        counts, _ = np.histogram(batch.values, edges)
        keep = counts > 0
        q, info = _em_populations(B[keep], counts[keep].astype(float),
                                  np.full(dim, 1.0 / dim), tol, max_iterations)
        rho = DensityMatrix.from_populations(q)
    else:
        distinct = np.unique(np.round(np.mod(batch.phases, math.pi), 12))
        if len(distinct) < 3:
            raise DataError("state reconstruction needs at least three distinct LO phases "
                            "modulo pi (or diagonal=True)")
        V, counts = povm_cells(batch, dim, max_phase_bins)
        r, info = _em_state(V, counts, np.eye(dim, dtype=complex) / dim, tol, max_iterations)
        rho = DensityMatrix(r)
    return (rho, info) if return_diagnostics else rho


# ---------------------------------------------------------------------------
# Process reconstruction: phase-pooled photon-number transfer
# ---------------------------------------------------------------------------

def _poisson_inputs(alphas, in_dim):
    mean = np.abs(np.asarray(alphas)) ** 2
    pi = poisson.pmf(np.arange(in_dim)[None, :], mean[:, None])
    tail = 1.0 - pi.sum(axis=1)
    return pi / pi.sum(axis=1, keepdims=True), tail


@dataclass
class _PooledData:
    B: np.ndarray       # (bins, out_dim) photon-number projectors, phase averaged
    counts: np.ndarray  # (runs, bins)
    pi: np.ndarray      # (runs, in_dim) input photon distributions


def _pooled_data(runs, work):
    values = np.concatenate([b.values for _, b in runs])
    edges = bin_edges(values, dim=work)
    B = np.einsum("bnn->bn", bin_overlaps(work, edges))
    counts = np.stack([np.histogram(b.values, edges)[0] for _, b in runs]).astype(float)
    pi, tail = _poisson_inputs([a for a, _ in runs], work)
    keep = counts.sum(axis=0) > 0
    return _PooledData(B[keep], counts[:, keep], pi), tail


def _em_pooled(data: _PooledData, weights, P, tol, max_iter):
    c = data.counts * weights[:, None]
    N = c.sum()
    B, pi = data.B, data.pi

    def lik(P):
        prob = pi @ P.T @ B.T  # (runs, bins)
        return prob, float(np.sum(c * np.log(np.maximum(prob, 1e-300))))

    prob, L = lik(P)
    for it in range(1, max_iter + 1):
        T = (c / np.maximum(prob, 1e-300)) @ B  # (runs, out)
        Nexp = P * (T.T @ pi)
        col = Nexp.sum(axis=0)
        P = np.where(col > 0, Nexp / np.where(col > 0, col, 1.0), P)
        prob, L_new = lik(P)
        gain, L = (L_new - L) / N, L_new
        if gain < tol:
            return P, {"iterations": it, "loglik": L, "converged": True}
    raise ConvergenceError(f"process MLE did not converge in {max_iter} iterations", P,
                           {"iterations": max_iter, "loglik": L})


# ---------------------------------------------------------------------------
# Process reconstruction: Choi-matrix iteration on phase-resolved data
# ---------------------------------------------------------------------------

@dataclass
class _ChoiData:
    w: int
    rho_in: np.ndarray   # (runs, w, w)
    cells: list          # per run (V, counts)
    mask: np.ndarray     # allowed Choi entries


def covariance_mask(w):
    """Choi entries ``C[(n, j), (m, k)]`` allowed for a phase-invariant
    channel: those with ``n - j == m - k``."""
    n, j, m, k = np.indices((w,) * 4)
    return ((n - j) == (m - k)).reshape(w * w, w * w)


def _choi_data(runs, w, covariant, max_phase_bins):
    with warnings.catch_warnings():
        # probe tails beyond the working cutoff are expected here
        warnings.simplefilter("ignore", CutoffWarning)
        rho_in = np.stack([coherent_state(a, w).elements for a, _ in runs])
    cells = [povm_cells(b, w, max_phase_bins) for _, b in runs]
    mask = covariance_mask(w) if covariant else np.ones((w * w, w * w), dtype=bool)
    return _ChoiData(w, rho_in, cells, mask)


def _em_choi(data: _ChoiData, weights, C, tol, max_iter):
    """``C -> lam^-1/2 R C R lam^-1/2`` with ``lam = Tr_out(R C R)``, keeping
    ``Tr_out C = 1``; ``R`` is projected onto the allowed entries."""
    w = data.w
    active = [i for i, x in enumerate(weights) if x > 0]
    N = sum(weights[i] * data.cells[i][1].sum() for i in active)
    eye = np.eye(w)

    def outputs(C):
        rho_out = np.einsum("rnm,njmk->rjk", data.rho_in[active], C.reshape(w, w, w, w))
        return herm_to_vec(rho_out)

    def probs(C):
        v = outputs(C)
        return [data.cells[i][0] @ v[a] for a, i in enumerate(active)]

    def loglik(ps):
        return sum(weights[i] * _loglik(p, data.cells[i][1]) for p, i in zip(ps, active))

    ps = probs(C)
    L = loglik(ps)
    for it in range(1, max_iter + 1):
        pibar = np.stack([data.cells[i][0].T @ (weights[i] * data.cells[i][1]
                                                 / np.maximum(p, 1e-300))
                          for p, i in zip(ps, active)])
        pibar = vec_to_herm(pibar, w)
        R = np.einsum("rmn,rjk->njmk", data.rho_in[active], pibar).reshape(w * w, w * w) / N
        R = np.where(data.mask, R, 0.0)
        M = R @ C @ R
        M = 0.5 * (M + M.conj().T)
        lam = np.einsum("njmj->nm", M.reshape(w, w, w, w))
        ev, evec = np.linalg.eigh(0.5 * (lam + lam.conj().T))
        inv_sqrt = (evec / np.sqrt(np.maximum(ev, 1e-300))) @ evec.conj().T
        S = np.kron(inv_sqrt, eye)
        C = S @ M @ S.conj().T
        C = np.where(data.mask, 0.5 * (C + C.conj().T), 0.0)
        ps = probs(C)
        L_new = loglik(ps)
        gain, L = (L_new - L) / N, L_new
        if abs(gain) < tol:
            return C, {"iterations": it, "loglik": L, "converged": True}
    raise ConvergenceError(f"process MLE did not converge in {max_iter} iterations", C,
                           {"iterations": max_iter, "loglik": L})


def _bootstrap(fit, n_runs, bootstrap, rng):
    reps = []
    for _ in range(int(bootstrap)):
        w = np.bincount(rng.integers(0, n_runs, n_runs), minlength=n_runs).astype(float)
        reps.append(fit(w))
    return np.std(reps, axis=0, ddof=1)


def mle_process(runs: Sequence, dim, diagonal=True, method="covariant", bootstrap=50, seed=0,
                padding=None, tol=GAIN_TOL, max_iterations=MAX_PROCESS_ITERATIONS,
                max_phase_bins=PROCESS_PHASE_BINS) -> ProcessTensor:
    """Reconstruct the process tensor from coherent-probe data.

    ``runs`` is a list of ``(alpha, QuadratureBatch)`` with ``alpha`` the
    complex probe amplitude in the LO reference frame.

    With ``diagonal=True`` the photon-number transfer ``E[n, n, m, m]`` is
    reported as a diagonal-mode tensor. ``method="covariant"`` obtains it from
    a Choi-matrix fit restricted to phase-invariant channels using the
    phase-resolved data, which ties populations to the mean-field response;
    ``method="pooled"`` fits a column-stochastic matrix to phase-pooled
    histograms and needs no phase reference. ``diagonal=False`` fits an
    unrestricted Choi matrix.

    Fits use ``dim + padding`` levels so the Poisson tails of the probes are
    modelled; the reported ``dim x dim`` block keeps its trace deficit.
    Standard errors come from ``bootstrap`` resamples of the runs. Each
    resample restarts halfway between the estimate and the uninformative
    start so that it fully reconverges; a warm start would stop at once and
    understate the spread.
    """
    if not runs:
        raise DataError("no tomography runs supplied")
    total = sum(len(b) for _, b in runs)
    if total == 0:
        raise DataError("all quadrature batches are empty")
    dim = int(dim)
    if dim < 1:
        raise ValidationError("dim must be positive", key="dim")
    if diagonal and method not in PROCESS_METHODS:
        raise ValidationError(f"method must be one of {PROCESS_METHODS}", key="method")
    if bootstrap and bootstrap < 50:
        raise ValidationError("bootstrap needs at least 50 resamples", key="bootstrap")
    kind = method if diagonal else "full"
    pad = DEFAULT_PADDING[kind] if padding is None else int(padding)
    work = dim + pad
    rng = np.random.default_rng([int(seed), 0xB007])
    n_runs = len(runs)
    ones = np.ones(n_runs)
    meta = {"runs": n_runs, "samples": int(total), "bootstrap": int(bootstrap or 0),
            "method": kind, "working_dim": work}

    if kind == "pooled":
        data, tail = _pooled_data(runs, work)
        P0 = np.full((work, work), 1.0 / work)
        P, info = _em_pooled(data, ones, P0, tol, max_iterations)
        err = None
        if bootstrap:
            err = _bootstrap(lambda wts: _em_pooled(data, wts, 0.5 * (P + P0), tol,
                                                    max_iterations)[0][:dim, :dim],
                             n_runs, bootstrap, rng)
        meta.update(iterations=info["iterations"], loglik=info["loglik"],
                    max_probe_tail=float(np.max(tail)))
        return ProcessTensor.from_population_matrix(P[:dim, :dim], err, meta)

    data = _choi_data(runs, work, kind == "covariant", max_phase_bins)
    C0 = np.where(data.mask, np.eye(work * work) / work, 0.0).astype(complex)
    C, info = _em_choi(data, ones, C0, tol, max_iterations)
    meta.update(iterations=info["iterations"], loglik=info["loglik"])
    E = ProcessTensor.from_choi(C, work).elements[:dim, :dim, :dim, :dim]

    def refit(wts):
        Cb, _ = _em_choi(data, wts, 0.5 * (C + C0), tol, max_iterations)
        Eb = ProcessTensor.from_choi(Cb, work).elements[:dim, :dim, :dim, :dim]
        return np.real(Eb)

    if kind == "covariant":
        P = ProcessTensor(E).population_matrix()
        err = None
        if bootstrap:
            d = np.arange(dim)
            err = _bootstrap(lambda wts: refit(wts)[d[:, None], d[:, None], d[None, :], d[None, :]],
                             n_runs, bootstrap, rng)
        return ProcessTensor.from_population_matrix(P, err, meta)

    err = None
    if bootstrap:
        reps = []
        for _ in range(int(bootstrap)):
            wts = np.bincount(rng.integers(0, n_runs, n_runs), minlength=n_runs).astype(float)
            Cb, _ = _em_choi(data, wts, 0.5 * (C + C0), tol, max_iterations)
            reps.append(ProcessTensor.from_choi(Cb, work).elements[:dim, :dim, :dim, :dim])
        reps = np.asarray(reps)
        err = np.std(reps.real, axis=0, ddof=1) + np.std(reps.imag, axis=0, ddof=1)
    return ProcessTensor(E, False, err, meta)


def predicted_populations(tensor: ProcessTensor, alpha):
    """Output photon distribution the diagonal transfer predicts for probe ``alpha``."""
    pi, _ = _poisson_inputs([alpha], tensor.dim)
    return tensor.population_matrix() @ pi[0]
