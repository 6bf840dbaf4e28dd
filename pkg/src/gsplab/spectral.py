"""Exact diagonalization and eigenbasis closed forms of Gaussian time averages.

Every time integral with Gaussian weight ``exp(-t^2 / 2q) / sqrt(2 pi q)`` is
evaluated through its Fourier transform: a phase ``exp(i w t)`` averages to
``exp(-q w^2 / 2)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .chain_algebra import FLAG_TOL

PROJECTION = "projection"
TRACE_NORMALIZED = "trace"


class NumericalError(RuntimeError):
    """A numerical self-check failed (eigensolver residual, orthonormality, ...)."""


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Ascending spectrum shifted so that the ground energy is 0.

    ``shift`` holds the subtracted original ground energy, so raw energies
    are ``eigenvalues + shift``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degeneracy: int
    gap: float
    shift: float

    @property
    def dim(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def ground_vectors(self) -> np.ndarray:
        return self.eigenvectors[:, : self.degeneracy]

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    def to_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v.conj().T @ a @ v

    def from_eigenbasis(self, a: np.ndarray) -> np.ndarray:
        v = self.eigenvectors
        return v @ a @ v.conj().T

    def function(self, weights: np.ndarray) -> np.ndarray:
        """``f(H)`` for eigenvalue weights ``f(lambda_k)``."""
        v = self.eigenvectors
        return (v * weights) @ v.conj().T


def diagonalize(h: np.ndarray, degeneracy_tol: float | None = None,
                check: bool = True) -> EigenSystem:
    """Dense Hermitian eigendecomposition with a shifted spectrum.

    ``degeneracy_tol`` defaults to ``1e-8 * (lambda_max - lambda_0)``.  When
    the whole spectrum is degenerate the gap is reported as ``inf``.
    """
    h = np.asarray(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"diagonalize needs a square matrix, got {h.shape}")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > FLAG_TOL:
        raise ValueError("diagonalize: input is not hermitian to 1e-10")
    try:
        lam, vec = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver did not converge: {exc}") from exc
    if check:
        scale = max(float(np.max(np.abs(lam))), 1.0)
        # Frobenius norm bounds the spectral norm and avoids an SVD.
        resid = np.linalg.norm(h @ vec - vec * lam)
        if resid > 1e-9 * scale:
            raise NumericalError(f"eigen residual {resid:.3e} exceeds 1e-9 ||H||")
        ortho = np.max(np.abs(vec.conj().T @ vec - np.eye(h.shape[0])))
        if ortho > 1e-10:
            raise NumericalError(f"eigenvectors not orthonormal ({ortho:.3e})")
    shift = float(lam[0])
    lam = lam - shift
    if degeneracy_tol is None:
        degeneracy_tol = 1e-8 * float(lam[-1])
    degeneracy = int(np.count_nonzero(lam <= degeneracy_tol))
    gap = float(lam[degeneracy]) if degeneracy < lam.size else float("inf")
    lam[:degeneracy] = 0.0
    return EigenSystem(lam, vec, degeneracy, gap, shift)


@dataclass(frozen=True, eq=False)
class GroundProjection:
    matrix: np.ndarray
    degeneracy: int
    mode: str


def ground_projection(es: EigenSystem, mode: str = TRACE_NORMALIZED) -> GroundProjection:
    """Projection onto the ground space.

    ``mode="projection"`` gives the orthogonal projector, ``mode="trace"``
    divides it by the degeneracy so that it has unit trace.
    """
    g = es.ground_vectors
    p = g @ g.conj().T
    if mode == TRACE_NORMALIZED:
        p = p / es.degeneracy
    elif mode != PROJECTION:
        raise ValueError(f"unknown mode {mode!r}")
    return GroundProjection(p, es.degeneracy, mode)


def _check_q(q: float) -> None:
    if not q >= 0.0:
        raise ValueError(f"q must be > 0 (q = 0 allowed as the identity limit), got {q}")


def gaussian_filter(es: EigenSystem, q: float, N: int | None = None) -> np.ndarray:
    """``rho^q = (1/N) sum_lambda exp(-q lambda^2 / 2) P(lambda)``."""
    _check_q(q)
    N = es.degeneracy if N is None else N
    return es.function(np.exp(-0.5 * q * es.eigenvalues ** 2)) / N


def filter_error_bound(es: EigenSystem, q: float) -> float:
    """Right-hand side ``exp(-gap^2 q / 2)`` of the Gaussian filter estimate."""
    return float(np.exp(-0.5 * es.gap ** 2 * q))


def _phase_differences(es: EigenSystem) -> np.ndarray:
    lam = es.eigenvalues
    return lam[:, None] - lam[None, :]


def heisenberg_evolve(es: EigenSystem, a: np.ndarray, t: float) -> np.ndarray:
    """``exp(iHt) A exp(-iHt)``."""
    a = np.asarray(a)
    if a.shape != (es.dim, es.dim):
        raise ValueError(f"operator shape {a.shape} does not match dimension {es.dim}")
    if t == 0:
        return a.copy()
    rotated = es.to_eigenbasis(a) * np.exp(1j * t * _phase_differences(es))
    return es.from_eigenbasis(rotated)


def gaussian_smear(es: EigenSystem, a: np.ndarray, q: float) -> np.ndarray:
    """Gaussian time average of the Heisenberg-evolved ``A`` with variance ``q``."""
    _check_q(q)
    a = np.asarray(a)
    if a.shape != (es.dim, es.dim):
        raise ValueError(f"operator shape {a.shape} does not match dimension {es.dim}")
    if q == 0:
        return a.copy()
    weights = np.exp(-0.5 * q * _phase_differences(es) ** 2)
    return es.from_eigenbasis(es.to_eigenbasis(a) * weights)


def annihilation_residuals(es: EigenSystem, block: np.ndarray, q: float) -> np.ndarray:
    """``|| smear(block) psi_0^k ||`` for every ground basis vector."""
    smeared = gaussian_smear(es, block, q)
    return np.linalg.norm(smeared @ es.ground_vectors, axis=0)


def annihilation_residual(es: EigenSystem, block: np.ndarray, q: float) -> float:
    """``|| smear(block) psi_0 ||`` for a non-degenerate ground state.

    Degenerate ground spaces have one residual per basis vector; use
    :func:`annihilation_residuals` for those.
    """
    if es.degeneracy != 1:
        raise ValueError(
            f"ground space is {es.degeneracy}-fold degenerate; "
            "use annihilation_residuals for per-vector residuals"
        )
    return float(annihilation_residuals(es, block, q)[0])


def annihilation_bound(J: float, gap: float, q: float) -> float:
    """``3 J^2 / gap * exp(-gap^2 q / 2)``."""
    return 3.0 * J ** 2 / gap * float(np.exp(-0.5 * gap ** 2 * q))


def save_spectrum_csv(es: EigenSystem, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue"])
        for i, lam in enumerate(es.eigenvalues + es.shift):
            w.writerow([i, repr(float(lam))])


def load_spectrum_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["eigenvalue"]) for r in rows])
