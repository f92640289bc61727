"""Fock-basis states, process tensors and phase-invariant channels."""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import comb

from ..errors import FormatError, ValidationError

HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-10
TRACE_TOL = 1e-8
CHOI_TOL = 1e-8
LEAKAGE_WARNING = 0.05


class CutoffWarning(UserWarning):
    """Truncation of a state to the Fock cutoff discarded noticeable weight."""


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated density matrix in the Fock basis ``|0>, ..., |dim-1>``.

    ``leakage`` records the weight lost to truncation before renormalisation.
    """

    elements: np.ndarray
    leakage: float = 0.0

    def __post_init__(self):
        rho = np.array(self.elements, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < 1:
            raise ValidationError(f"density matrix must be square, got shape {rho.shape}",
                                  key="elements")
        if not np.all(np.isfinite(rho)):
            raise ValidationError("density matrix has non-finite entries", key="elements")
        if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL:
            raise ValidationError("density matrix is not Hermitian", key="elements")
        if abs(np.trace(rho).real - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace is {np.trace(rho).real!r}, expected 1", key="elements")
        if np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min() < -EIGEN_TOL:
            raise ValidationError("density matrix has negative eigenvalues", key="elements")
        rho.setflags(write=False)
        object.__setattr__(self, "elements", rho)

    @property
    def dim(self):
        return self.elements.shape[0]

    @property
    def populations(self):
        return np.clip(np.diag(self.elements).real, 0.0, None)

    def expectation(self, op):
        return complex(np.trace(self.elements @ op))

    def mean_photon_number(self):
        return float(np.dot(np.arange(self.dim), self.populations))

    def fidelity_to_pure(self, psi):
        psi = np.asarray(psi, dtype=complex)
        return float(np.real(psi.conj() @ self.elements @ psi))

    def embed(self, dim):
        """Zero-pad (or require exact fit) to a larger cutoff."""
        if dim < self.dim:
            raise ValidationError("embedding dimension below the current cutoff", key="dim")
        out = np.zeros((dim, dim), dtype=complex)
        out[:self.dim, :self.dim] = self.elements
        return DensityMatrix(out, self.leakage)

    @classmethod
    def from_populations(cls, p):
        p = np.asarray(p, dtype=float)
        return cls(np.diag(p / p.sum()).astype(complex))

    @classmethod
    def fock(cls, n, dim):
        if not 0 <= n < dim:
            raise ValidationError(f"Fock index {n} outside cutoff {dim}", key="n")
        rho = np.zeros((dim, dim), dtype=complex)
        rho[n, n] = 1.0
        return cls(rho)


def _closest_state(rho):
    """Hermitian, unit-trace, PSD projection used to clean iterates."""
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0.0, None)
    rho = (v * w) @ v.conj().T
    return rho / np.trace(rho).real


def coherent_amplitudes(alpha, dim):
    """Unnormalised Fock amplitudes ``exp(-|a|^2/2) a^n / sqrt(n!)`` for ``n < dim``."""
    c = np.empty(dim, dtype=complex)
    c[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, dim):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    return c


def coherent_state(alpha, dim) -> DensityMatrix:
    """Pure coherent state truncated to ``dim`` levels and renormalised."""
    if int(dim) != dim or dim < 1:
        raise ValidationError("dim must be a positive integer", key="dim")
    dim = int(dim)
    c = coherent_amplitudes(complex(alpha), dim)
    kept = float(np.sum(np.abs(c) ** 2))
    leakage = max(0.0, 1.0 - kept)
    if leakage > LEAKAGE_WARNING:
        warnings.warn(f"coherent state |alpha|={abs(alpha):.3g} loses {leakage:.3f} "
                      f"of its weight at cutoff {dim}", CutoffWarning, stacklevel=2)
    c = c / math.sqrt(kept)
    return DensityMatrix(np.outer(c, c.conj()), leakage)


@dataclass(frozen=True)
class CoherentState:
    """Untruncated coherent state; phase-invariant loss keeps it coherent."""

    alpha: complex

    def required_dim(self, tol=1e-12):
        """Smallest cutoff whose truncation leakage is below ``tol``."""
        mean = abs(self.alpha) ** 2
        dim, term, total = 1, math.exp(-mean), math.exp(-mean)
        while 1.0 - total > tol and dim < 10_000:
            term *= mean / dim
            total += term
            dim += 1
        # the running sum saturates in floating point; add a small margin
        return dim + 2

    def density(self, dim=None) -> DensityMatrix:
        return coherent_state(self.alpha, dim or self.required_dim())


def _as_matrix(rho):
    return rho.elements if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def loss_kraus(transmissivity, dim):
    """Kraus operators ``A_k`` of the pure-loss channel on ``dim`` levels."""
    eta = float(transmissivity)
    if not 0.0 <= eta <= 1.0:
        raise ValidationError("transmissivity must lie in [0, 1]", key="transmissivity")
    ops = []
    for k in range(dim):
        A = np.zeros((dim, dim))
        for n in range(k, dim):
            A[n - k, n] = math.sqrt(comb(n, k, exact=True) * eta ** (n - k) * (1 - eta) ** k)
        ops.append(A)
    return ops


def loss_channel(rho, transmissivity) -> DensityMatrix:
    """Beam-splitter loss keeping a fraction ``transmissivity`` of the energy."""
    if isinstance(rho, CoherentState):
        if not 0.0 <= transmissivity <= 1.0:
            raise ValidationError("transmissivity must lie in [0, 1]", key="transmissivity")
        return CoherentState(rho.alpha * math.sqrt(transmissivity))
    m = _as_matrix(rho)
    out = sum(A @ m @ A.T for A in loss_kraus(transmissivity, m.shape[0]))
    return DensityMatrix(0.5 * (out + out.conj().T), getattr(rho, "leakage", 0.0))


def rotation(rho, phase) -> DensityMatrix:
    """Phase-space rotation ``|alpha> -> |alpha e^{i phase}>``."""
    if isinstance(rho, CoherentState):
        return CoherentState(rho.alpha * complex(math.cos(phase), math.sin(phase)))
    m = _as_matrix(rho)
    u = np.exp(1j * phase * np.arange(m.shape[0]))
    return DensityMatrix(u[:, None] * m * u.conj()[None, :], getattr(rho, "leakage", 0.0))


@dataclass(frozen=True)
class LossRotationChannel:
    """Phase-invariant channel: rotation by ``phase`` followed by loss."""

    transmissivity: float
    phase: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.transmissivity <= 1.0:
            raise ValidationError("transmissivity must lie in [0, 1]", key="transmissivity")

    def __call__(self, state):
        return loss_channel(rotation(state, self.phase), self.transmissivity)

    def tensor(self, dim) -> "ProcessTensor":
        return ProcessTensor.from_kraus(
            [A @ np.diag(np.exp(1j * self.phase * np.arange(dim)))
             for A in loss_kraus(self.transmissivity, dim)])

    def population_matrix(self, dim):
        """Oracle ``P[n, m] = C(m, n) eta^n (1 - eta)^(m - n)``."""
        eta = self.transmissivity
        P = np.zeros((dim, dim))
        for m in range(dim):
            for n in range(m + 1):
                P[n, m] = comb(m, n, exact=True) * eta ** n * (1 - eta) ** (m - n)
        return P


@dataclass(frozen=True, eq=False)
class ProcessTensor:
    """Linear map ``rho_out[j, k] = sum_{n,m} E[j, k, n, m] rho_in[n, m]``.

    ``errors`` (same shape, optional) carries per-element standard errors.
    In diagonal mode only ``E[n, n, m, m]`` may be non-zero; it is the
    probability of finding ``n`` photons at the output given ``m`` at the input.
    """

    elements: np.ndarray
    diagonal_mode: bool = False
    errors: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        E = np.array(self.elements, dtype=complex)
        if E.ndim != 4 or len(set(E.shape)) != 1:
            raise ValidationError(f"process tensor must be dim^4, got {E.shape}", key="elements")
        if self.diagonal_mode:
            mask = self._diagonal_mask(E.shape[0])
            if np.any(E[~mask] != 0):
                raise ValidationError("diagonal-mode tensor has off-diagonal entries",
                                      key="elements")
        if self.errors is not None and np.shape(self.errors) != E.shape:
            raise ValidationError("errors must match the tensor shape", key="errors")
        E.setflags(write=False)
        object.__setattr__(self, "elements", E)

    @staticmethod
    def _diagonal_mask(dim):
        j, k, n, m = np.indices((dim,) * 4)
        return (j == k) & (n == m)

    @property
    def dim(self):
        return self.elements.shape[0]

    @classmethod
    def from_population_matrix(cls, P, errors=None, metadata=None):
        P = np.asarray(P, dtype=float)
        dim = P.shape[0]
        E = np.zeros((dim,) * 4, dtype=complex)
        idx = np.arange(dim)
        E[idx[:, None], idx[:, None], idx[None, :], idx[None, :]] = P
        err = None
        if errors is not None:
            err = np.zeros((dim,) * 4)
            err[idx[:, None], idx[:, None], idx[None, :], idx[None, :]] = errors
        return cls(E, True, err, dict(metadata or {}))

    @classmethod
    def from_kraus(cls, ops, metadata=None):
        dim = ops[0].shape[0]
        E = np.zeros((dim,) * 4, dtype=complex)
        for A in ops:
            # E[j,k,n,m] = sum_A A[j,n] conj(A[k,m])
            E += np.einsum("jn,km->jknm", A, A.conj())
        return cls(E, False, None, dict(metadata or {}))

    @classmethod
    def from_choi(cls, C, dim, metadata=None):
        E = np.asarray(C).reshape(dim, dim, dim, dim).transpose(1, 3, 0, 2)
        return cls(E, False, None, dict(metadata or {}))

    def population_matrix(self):
        d = np.arange(self.dim)
        return self.elements[d[:, None], d[:, None], d[None, :], d[None, :]].real

    def population_errors(self):
        if self.errors is None:
            return None
        d = np.arange(self.dim)
        return np.real(self.errors[d[:, None], d[:, None], d[None, :], d[None, :]])

    def choi(self):
        """Choi matrix ``C[(n, j), (m, k)] = E[j, k, n, m]`` (input index first)."""
        d = self.dim
        return self.elements.transpose(2, 0, 3, 1).reshape(d * d, d * d)

    def is_completely_positive(self, tol=CHOI_TOL):
        C = self.choi()
        C = 0.5 * (C + C.conj().T)
        return bool(np.linalg.eigvalsh(C).min() >= -tol)

    def trace_deficits(self):
        """``1 - sum_n E[n, n, m, m]`` for every input level ``m``."""
        return 1.0 - self.population_matrix().sum(axis=0)

    def apply(self, rho) -> DensityMatrix:
        m = _as_matrix(rho)
        if m.shape[0] != self.dim:
            raise ValidationError("state and tensor dimensions differ", key="dim")
        out = np.einsum("jknm,nm->jk", self.elements, m)
        tr = np.trace(out).real
        if tr <= 0:
            raise ValidationError("channel output has zero trace", key="rho")
        leak = 1.0 - tr
        return DensityMatrix(_closest_state(out), max(leak, 0.0))

    def as_dict(self):
        d = {
            "dim": self.dim,
            "diagonal": self.diagonal_mode,
            "elements_real": self.elements.real.tolist(),
            "elements_imag": self.elements.imag.tolist(),
            "population_matrix": self.population_matrix().tolist(),
            "trace_deficits": self.trace_deficits().tolist(),
            "metadata": self.metadata,
        }
        if self.errors is not None:
            d["bootstrap_errors"] = np.real(self.errors).tolist()
            d["population_errors"] = self.population_errors().tolist()
        return d

    def to_json(self, path=None, indent=2):
        text = json.dumps(self.as_dict(), indent=indent, sort_keys=True)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d):
        try:
            E = np.asarray(d["elements_real"]) + 1j * np.asarray(d["elements_imag"])
            err = np.asarray(d["bootstrap_errors"]) if "bootstrap_errors" in d else None
            return cls(E, bool(d["diagonal"]), err, dict(d.get("metadata", {})))
        except KeyError as exc:
            raise FormatError(f"process tensor JSON lacks field {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}: {exc}") from None
