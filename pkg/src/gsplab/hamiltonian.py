"""Nearest-neighbour Hamiltonians ``H = sum_k H_{k,k+1}`` on a finite chain.

Each bond term is ``H_{k,k+1} = w_k h_k + w_{k+1} h_{k+1} + Phi_{k,k+1}``.
Single-site terms at interior sites are shared equally by their two bonds
(``w = 1/2``); the end sites belong to one bond only (``w = 1``).  Summing the
bond terms therefore reproduces ``sum_j h_j + sum_k Phi_{k,k+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .chain_algebra import (
    DEFAULT_CAP,
    SIGMA_X,
    SIGMA_Z,
    ChainGeometry,
    LocalOperator,
    SupportInterval,
    commutator,
    embed,
    operator_norm,
)


@dataclass(frozen=True, eq=False)
class NNIHamiltonian:
    geo: ChainGeometry
    site_terms: tuple[LocalOperator, ...]
    interaction_terms: tuple[LocalOperator, ...]
    name: str = "custom"

    def __post_init__(self):
        d = self.geo.d
        if len(self.site_terms) != d:
            raise ValueError(f"need {d} site terms, got {len(self.site_terms)}")
        if len(self.interaction_terms) != d - 1:
            raise ValueError(f"need {d - 1} interaction terms, got {len(self.interaction_terms)}")
        for j, op in enumerate(self.site_terms, start=1):
            if op.support != SupportInterval(j, j):
                raise ValueError(f"site term {j} has support {op.support}")
            if not op.is_hermitian:
                raise ValueError(f"site term {j} is not hermitian")
        for k, op in enumerate(self.interaction_terms, start=1):
            if op.support != SupportInterval(k, k + 1):
                raise ValueError(f"interaction term {k} has support {op.support}")
            if not op.is_hermitian:
                raise ValueError(f"interaction term {k} is not hermitian")

    @property
    def d(self) -> int:
        return self.geo.d

    @property
    def n(self) -> int:
        return self.geo.n

    def site_weight(self, j: int) -> float:
        return 1.0 if j in (1, self.d) else 0.5

    def bond_term(self, k: int) -> LocalOperator:
        """``H_{k,k+1}`` as an operator on sites ``[k, k+1]``."""
        if not 1 <= k <= self.d - 1:
            raise ValueError(f"bond index {k} outside 1..{self.d - 1}")
        eye = np.eye(self.n)
        left = self.site_terms[k - 1].matrix
        right = self.site_terms[k].matrix
        m = (
            self.site_weight(k) * np.kron(left, eye)
            + self.site_weight(k + 1) * np.kron(eye, right)
            + self.interaction_terms[k - 1].matrix
        )
        return LocalOperator(SupportInterval(k, k + 1), m, self.n)

    def bonds_sum(self, bonds) -> np.ndarray:
        """Dense sum of the embedded bond terms with indices in ``bonds``."""
        out = np.zeros((self.geo.dim, self.geo.dim), dtype=self._dtype())
        for k in bonds:
            out += embed(self.bond_term(k), self.geo)
        return out

    def _dtype(self):
        terms = self.site_terms + self.interaction_terms
        return np.result_type(*(t.matrix.dtype for t in terms), np.float64)


def assemble(h: NNIHamiltonian) -> np.ndarray:
    """Dense ``H = sum_k H_{k,k+1}``."""
    return h.bonds_sum(range(1, h.d))


def _site_ops(d, n, matrices):
    return tuple(
        LocalOperator(SupportInterval(j, j), np.asarray(m), n, hermitian=True)
        for j, m in enumerate(matrices, start=1)
    )


def _bond_ops(d, n, matrices):
    return tuple(
        LocalOperator(SupportInterval(k, k + 1), np.asarray(m), n, hermitian=True)
        for k, m in enumerate(matrices, start=1)
    )


def build_tfim(d: int, coupling: float = 1.0, field: float = 1.0,
               cap: int = DEFAULT_CAP) -> NNIHamiltonian:
    """Open transverse-field Ising chain ``-J sum Z Z - g sum X``."""
    if d < 3:
        raise ValueError(f"build_tfim needs d >= 3, got {d}")
    geo = ChainGeometry(d, 2, cap)
    sites = _site_ops(d, 2, [-field * SIGMA_X] * d)
    bonds = _bond_ops(d, 2, [-coupling * np.kron(SIGMA_Z, SIGMA_Z)] * (d - 1))
    return NNIHamiltonian(geo, sites, bonds, name="tfim")


def build_free_chain(d: int, site_term: np.ndarray, cap: int = DEFAULT_CAP) -> NNIHamiltonian:
    """Non-interacting chain: the same single-site term everywhere, ``Phi = 0``."""
    site_term = np.asarray(site_term)
    n = site_term.shape[0]
    geo = ChainGeometry(d, n, cap)
    sites = _site_ops(d, n, [site_term] * d)
    bonds = _bond_ops(d, n, [np.zeros((n * n, n * n), dtype=site_term.dtype)] * (d - 1))
    return NNIHamiltonian(geo, sites, bonds, name="free")


def _random_hermitian(rng: np.random.Generator, dim: int) -> np.ndarray:
    x = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    h = (x + x.conj().T) / 2
    return h / operator_norm(h)


def build_random(d: int, n: int = 2, seed: int = 0, cap: int = DEFAULT_CAP) -> NNIHamiltonian:
    """Random bounded NNI Hamiltonian with ``||h_j|| = ||Phi|| = 1``.

    Terms are complex Hermitian Gaussian matrices rescaled to unit norm;
    the same seed always reproduces the same chain.
    """
    rng = np.random.default_rng(seed)
    geo = ChainGeometry(d, n, cap)
    sites = _site_ops(d, n, [_random_hermitian(rng, n) for _ in range(d)])
    bonds = _bond_ops(d, n, [_random_hermitian(rng, n * n) for _ in range(d - 1)])
    return NNIHamiltonian(geo, sites, bonds, name="random")


def interaction_strength(h: NNIHamiltonian) -> float:
    """Smallest ``J`` bounding ``||Phi||`` and both site/interaction commutators."""
    eye = np.eye(h.n)
    best = 0.0
    for k in range(1, h.d):
        phi = h.interaction_terms[k - 1].matrix
        left = np.kron(h.site_terms[k - 1].matrix, eye)
        right = np.kron(eye, h.site_terms[k].matrix)
        best = max(
            best,
            operator_norm(phi),
            operator_norm(commutator(phi, right)),
            operator_norm(commutator(left, phi)),
        )
    return best


@dataclass(frozen=True, eq=False)
class PartitionedHamiltonian:
    """``H = H_L + H_B + H_R`` around cut site ``j`` with half-width ``l``."""

    h_left: np.ndarray
    h_bulk: np.ndarray
    h_right: np.ndarray
    j: int
    l: int
    bonds_left: tuple[int, ...]
    bonds_bulk: tuple[int, ...]
    bonds_right: tuple[int, ...]
    supports: dict = field(default_factory=dict)


def check_admissible(d: int, j: int, l: int) -> None:
    if l < 0:
        raise ValueError(f"l must be >= 0, got {l}")
    if not 1 + l <= j <= d - 2 - l:
        raise ValueError(f"(j={j}, l={l}) violates 1+l <= j <= d-2-l for d={d}")


def _bond_support(bonds, d):
    if not bonds:
        return None
    return SupportInterval.clipped(min(bonds), max(bonds) + 1, d)


def partition(h: NNIHamiltonian, j: int, l: int) -> PartitionedHamiltonian:
    check_admissible(h.d, j, l)
    all_bonds = range(1, h.d)
    left = tuple(k for k in all_bonds if k <= j - l - 2)
    bulk = tuple(k for k in all_bonds if j - l - 1 <= k <= j + l + 1)
    right = tuple(k for k in all_bonds if k >= j + l + 2)
    return PartitionedHamiltonian(
        h.bonds_sum(left), h.bonds_sum(bulk), h.bonds_sum(right), j, l,
        left, bulk, right,
        supports={
            "L": _bond_support(left, h.d),
            "B": _bond_support(bulk, h.d),
            "R": _bond_support(right, h.d),
        },
    )


def recenter(block: np.ndarray, ground_state: np.ndarray) -> np.ndarray:
    """Shift ``block`` by its ground-state expectation so that it vanishes."""
    psi = np.asarray(ground_state)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"ground state must be normalized, |psi| = {norm}")
    mean = np.vdot(psi, block @ psi)
    if abs(mean.imag) < 1e-12 * max(1.0, abs(mean.real)):
        mean = mean.real
    out = block - mean * np.eye(block.shape[0], dtype=np.result_type(block, mean))
    return out


# --- flat key=value model files ---------------------------------------------

MODEL_KEYS = ("model", "d", "n", "coupling", "field", "seed")


def parse_key_values(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ValueError(f"line {lineno}: empty key")
        out[key] = value
    return out


def load_model_spec(path: str | Path) -> dict[str, str]:
    return parse_key_values(Path(path).read_text())


def build_from_spec(spec: Mapping[str, object], d: int | None = None,
                    cap: int = DEFAULT_CAP) -> NNIHamiltonian:
    """Build a Hamiltonian from a model spec mapping.

    ``model`` is one of ``tfim``, ``random`` or ``free``; ``free`` uses the
    site term ``diag(0, field)`` (on ``n`` levels: ``diag(0, field, 2 field, ...)``).
    ``d`` overrides the spec's own ``d`` (used by sweeps).
    """
    model = str(spec.get("model", "tfim")).strip().lower()
    d = int(d if d is not None else spec.get("d", 8))
    n = int(spec.get("n", 2))
    coupling = float(spec.get("coupling", 1.0))
    field_ = float(spec.get("field", 1.0))
    seed = int(spec.get("seed", 0))
    if model == "tfim":
        if n != 2:
            raise ValueError("tfim model requires n=2")
        return build_tfim(d, coupling, field_, cap=cap)
    if model == "random":
        return build_random(d, n, seed, cap=cap)
    if model == "free":
        return build_free_chain(d, np.diag(field_ * np.arange(n, dtype=float)), cap=cap)
    raise ValueError(f"unknown model {model!r}; expected tfim, random or free")
