"""Index bookkeeping for operators on a chain of ``d`` sites.

Site ``1`` is the most significant digit of the flat index, site ``d`` the
least significant.  Every dense operator on the full chain therefore has the
Kronecker layout ``A_1 (x) A_2 (x) ... (x) A_d``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

DEFAULT_CAP = 4096
FLAG_TOL = 1e-10


class DimensionCapError(ValueError):
    """The full Hilbert space would exceed the configured dimension cap."""


@dataclass(frozen=True)
class ChainGeometry:
    """``d`` sites of uniform local dimension ``n``."""

    d: int
    n: int = 2
    cap: int = field(default=DEFAULT_CAP, compare=False)

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"chain needs at least 2 sites, got d={self.d}")
        if self.n < 2:
            raise ValueError(f"local dimension must be >= 2, got n={self.n}")
        if self.n ** self.d > self.cap:
            raise DimensionCapError(
                f"n^d = {self.n}^{self.d} = {self.n ** self.d} exceeds cap {self.cap}"
            )

    @property
    def dim(self) -> int:
        return self.n ** self.d

    def full_support(self) -> "SupportInterval":
        return SupportInterval(1, self.d)


@dataclass(frozen=True, order=True)
class SupportInterval:
    """Contiguous set of sites ``lo..hi`` (1-based, inclusive)."""

    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 1 or self.hi < self.lo:
            raise ValueError(f"invalid support interval [{self.lo}, {self.hi}]")

    @classmethod
    def clipped(cls, lo: int, hi: int, d: int) -> "SupportInterval":
        """Intersect ``[lo, hi]`` with ``[1, d]``."""
        lo, hi = max(lo, 1), min(hi, d)
        if hi < lo:
            raise ValueError(f"interval [{lo}, {hi}] is empty after clipping to [1, {d}]")
        return cls(lo, hi)

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1

    def sites(self) -> range:
        return range(self.lo, self.hi + 1)

    def contains(self, other: "SupportInterval") -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def overlaps(self, other: "SupportInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def hull(self, other: "SupportInterval") -> "SupportInterval":
        return SupportInterval(min(self.lo, other.lo), max(self.hi, other.hi))

    def distance(self, other: "SupportInterval") -> int:
        if self.overlaps(other):
            return 0
        if self.hi < other.lo:
            return other.lo - self.hi
        return self.lo - other.hi

    def within(self, d: int) -> bool:
        return self.hi <= d


def _is_hermitian(m: np.ndarray, tol: float = FLAG_TOL) -> bool:
    return bool(np.max(np.abs(m - m.conj().T), initial=0.0) <= tol)


def _is_unitary(m: np.ndarray, tol: float = FLAG_TOL) -> bool:
    eye = np.eye(m.shape[0])
    return bool(np.max(np.abs(m.conj().T @ m - eye), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """Dense matrix ``A_alpha`` acting on the sites of ``support``.

    ``hermitian``/``unitary`` may be asserted at construction; asserted flags
    are verified to 1e-10 in max-entry norm.
    """

    support: SupportInterval
    matrix: np.ndarray
    n: int = 2
    hermitian: bool | None = None
    unitary: bool | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix)
        expected = self.n ** self.support.width
        if m.ndim != 2 or m.shape != (expected, expected):
            raise ValueError(
                f"matrix shape {m.shape} inconsistent with support width "
                f"{self.support.width} and n={self.n} (expected {expected}x{expected})"
            )
        object.__setattr__(self, "matrix", m)
        if self.hermitian and not _is_hermitian(m):
            raise ValueError("operator flagged hermitian is not hermitian to 1e-10")
        if self.unitary and not _is_unitary(m):
            raise ValueError("operator flagged unitary is not unitary to 1e-10")

    @cached_property
    def is_hermitian(self) -> bool:
        return True if self.hermitian else _is_hermitian(self.matrix)

    @cached_property
    def is_unitary(self) -> bool:
        return True if self.unitary else _is_unitary(self.matrix)

    def dagger(self) -> "LocalOperator":
        return LocalOperator(self.support, self.matrix.conj().T, self.n)

    def widen(self, target: SupportInterval) -> "LocalOperator":
        """Re-express the operator on a larger interval by padding identities."""
        if not target.contains(self.support):
            raise ValueError(f"{target} does not contain {self.support}")
        left = self.n ** (self.support.lo - target.lo)
        right = self.n ** (target.hi - self.support.hi)
        m = _kron_pad(self.matrix, left, right)
        return LocalOperator(target, m, self.n)


Support = Union[SupportInterval, LocalOperator]


def _kron_pad(m: np.ndarray, left: int, right: int) -> np.ndarray:
    if left > 1:
        m = np.kron(np.eye(left, dtype=m.dtype), m)
    if right > 1:
        m = np.kron(m, np.eye(right, dtype=m.dtype))
    return m


def embed(op: LocalOperator, geo: ChainGeometry) -> np.ndarray:
    """Return ``A_alpha (x) I`` on the full chain of ``geo``."""
    if op.n != geo.n:
        raise ValueError(f"local dimension mismatch: operator n={op.n}, chain n={geo.n}")
    if not op.support.within(geo.d):
        raise ValueError(f"support {op.support} lies outside chain of {geo.d} sites")
    return op.widen(geo.full_support()).matrix


def support_distance(a: Support, b: Support) -> int:
    """Site distance between two supports.

    Overlapping supports are at distance 0; otherwise the distance is the
    index difference between the facing endpoints, so that ``{1,2}`` and
    ``{4,5}`` are at distance 2.
    """
    sa = a.support if isinstance(a, LocalOperator) else a
    sb = b.support if isinstance(b, LocalOperator) else b
    return sa.distance(sb)


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``[A, B] = AB - BA``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"commutator needs equal square shapes, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def operator_norm(a: np.ndarray) -> float:
    """Largest singular value.

    Hermitian and anti-Hermitian inputs go through ``eigvalsh``, which is
    cheaper than an SVD and exact for normal matrices.
    """
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise ValueError("operator_norm: matrix has non-finite entries")
    if a.size == 0:
        return 0.0
    scale = np.max(np.abs(a))
    if scale == 0.0:
        return 0.0
    tol = 1e-13 * scale * a.shape[0]
    if np.max(np.abs(a - a.conj().T)) <= tol:
        return float(np.max(np.abs(np.linalg.eigvalsh(a))))
    if np.max(np.abs(a + a.conj().T)) <= tol:
        return float(np.max(np.abs(np.linalg.eigvalsh(1j * a))))
    return float(np.linalg.norm(a, 2))


def site_tensor_axes(geo: ChainGeometry, m: np.ndarray) -> np.ndarray:
    """View a full-chain operator as a tensor with ``2d`` axes of size ``n``.

    Axes ``0..d-1`` are row (output) sites, ``d..2d-1`` column (input) sites.
    """
    return np.asarray(m).reshape((geo.n,) * (2 * geo.d))


# Pauli matrices; kept real where possible so TFIM assembly stays real.
SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]])
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]])
IDENTITY_2 = np.eye(2)
