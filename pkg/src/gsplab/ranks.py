"""Cut ranks of states and operator kernels, and tensor-train decompositions.

All truncations are measured in the Euclidean (Hilbert-Schmidt) norm: the
error of keeping ``r`` singular values is the root-sum-square of the rest.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .chain_algebra import DEFAULT_CAP
from .hamiltonian import assemble, build_from_spec
from .spectral import ground_projection, diagonalize


@dataclass(frozen=True, eq=False)
class CutRank:
    rank: int
    singular_values: np.ndarray


def _num_sites(size: int, n: int) -> int:
    d = round(math.log(size, n)) if size > 1 else 0
    if n ** d != size:
        raise ValueError(f"length {size} is not a power of n={n}")
    return d


def _singular_values(m: np.ndarray) -> np.ndarray:
    return scipy.linalg.svd(m, compute_uv=False, lapack_driver="gesdd")


def tail_rank(s: np.ndarray, eps: float) -> int:
    """Smallest ``r`` with ``sqrt(sum_{k >= r} s_k^2) <= eps``."""
    if eps < 0:
        raise ValueError(f"epsilon must be >= 0, got {eps}")
    # tails[r] = norm of s[r:]; tails[len(s)] = 0
    tails = np.sqrt(np.concatenate([np.cumsum((s ** 2)[::-1])[::-1], [0.0]]))
    if eps == 0:
        # exact rank: ignore singular values at round-off level
        tol = max(s[0] if s.size else 0.0, 1.0) * max(s.shape[0], 1) * np.finfo(float).eps
        return int(np.count_nonzero(s > tol))
    return int(np.argmax(tails <= eps))


def cut_rank(v: np.ndarray, j: int, eps: float = 0.0, n: int = 2) -> CutRank:
    """Schmidt rank of the state ``v`` across ``(1..j | j+1..d)`` within ``eps``.

    ``eps = 0`` counts singular values above round-off.
    """
    v = np.asarray(v).ravel()
    d = _num_sites(v.size, n)
    if not 1 <= j <= d - 1:
        raise ValueError(f"cut {j} outside 1..{d - 1}")
    s = _singular_values(v.reshape(n ** j, n ** (d - j)))
    return CutRank(tail_rank(s, eps), s)


def interleave_kernel(a: np.ndarray, n: int = 2) -> np.ndarray:
    """Operator kernel as a vector on a doubled chain with local dimension ``n^2``.

    Site ``k`` of the doubled chain carries the pair (row index, column index)
    of site ``k``.
    """
    a = np.asarray(a)
    d = _num_sites(a.shape[0], n)
    if a.shape != (n ** d, n ** d):
        raise ValueError(f"operator must be square of size n^d, got {a.shape}")
    perm = [ax for k in range(d) for ax in (k, d + k)]
    return a.reshape((n,) * (2 * d)).transpose(perm).reshape(-1)


def operator_cut_rank(a: np.ndarray, j: int, eps: float = 0.0, n: int = 2) -> CutRank:
    return cut_rank(interleave_kernel(a, n), j, eps, n * n)


# --- profiles ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RankProfile:
    cuts: list[int]
    epsilon: float
    ranks: list[int]
    singular_values: list[np.ndarray]

    def rows(self, d: int):
        for j, r in zip(self.cuts, self.ranks):
            yield d, j, self.epsilon, r


def rank_profile(v: np.ndarray, eps: float = 0.0, n: int = 2,
                 operator: bool = False) -> RankProfile:
    if operator:
        v, n = interleave_kernel(v, n), n * n
    v = np.asarray(v).ravel()
    d = _num_sites(v.size, n)
    results = [cut_rank(v, j, eps, n) for j in range(1, d)]
    return RankProfile(list(range(1, d)), eps, [r.rank for r in results],
                       [r.singular_values for r in results])


RANK_HEADER = ("d", "cut", "epsilon", "rank")


def write_rank_csv(rows, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANK_HEADER)
        for d, j, eps, r in rows:
            w.writerow([d, j, repr(float(eps)), r])


def write_singular_values_csv(profile: RankProfile, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cut", "index", "singular_value"])
        for j, s in zip(profile.cuts, profile.singular_values):
            for k, val in enumerate(s):
                w.writerow([j, k, repr(float(val))])


# --- tensor trains ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TTRepresentation:
    """Open-boundary tensor train; core ``k`` has shape ``(r_{k-1}, n, r_k)``."""

    cores: list[np.ndarray]

    @property
    def bond_dims(self) -> list[int]:
        return [c.shape[2] for c in self.cores[:-1]]

    @property
    def n(self) -> int:
        return self.cores[0].shape[1]


def tt_decompose(v: np.ndarray, eps: float = 0.0, n: int = 2) -> TTRepresentation:
    """Left-to-right TT-SVD with per-cut budget ``eps / sqrt(d-1)``."""
    v = np.asarray(v).ravel()
    d = _num_sites(v.size, n)
    if d < 1:
        raise ValueError("need at least one site")
    budget = eps / math.sqrt(d - 1) if d > 1 else 0.0
    cores: list[np.ndarray] = []
    rest = v.reshape(1, -1)
    r_prev = 1
    for _ in range(d - 1):
        mat = rest.reshape(r_prev * n, -1)
        u, s, vh = scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd")
        r = max(tail_rank(s, budget), 1)
        cores.append(u[:, :r].reshape(r_prev, n, r))
        rest = s[:r, None] * vh[:r]
        r_prev = r
    cores.append(rest.reshape(r_prev, n, 1))
    return TTRepresentation(cores)


def tt_contract(tt: TTRepresentation) -> np.ndarray:
    out = tt.cores[0]
    for core in tt.cores[1:]:
        out = np.tensordot(out, core, axes=([out.ndim - 1], [0]))
    return out.reshape(-1)


# --- scans ------------------------------------------------------------------


def ground_projection_rank(spec: Mapping[str, object], d: int, eps: float,
                           cap: int = DEFAULT_CAP) -> int:
    """Middle-cut operator ``eps``-rank of the trace-normalized ground projection."""
    h = build_from_spec(spec, d, cap)
    es = diagonalize(assemble(h))
    p0 = ground_projection(es).matrix
    return operator_cut_rank(p0, d // 2, eps, h.n).rank


def rank_saturation_scan(spec: Mapping[str, object], eps: float, d_list: Sequence[int],
                         cap: int = DEFAULT_CAP) -> list[tuple[int, int]]:
    """``(d, r_eps)`` of the ground projection kernel at the middle cut."""
    return [(int(d), ground_projection_rank(spec, int(d), eps, cap)) for d in d_list]
