"""Partial-trace localization, quasi-local blocks and light-cone measurements."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .chain_algebra import (
    ChainGeometry,
    LocalOperator,
    SupportInterval,
    commutator,
    embed,
    operator_norm,
    support_distance,
)
from .hamiltonian import NNIHamiltonian, PartitionedHamiltonian, partition, recenter
from .spectral import EigenSystem, gaussian_smear

MAXIMALLY_MIXED = "maximally_mixed"
GROUND_STATE = "ground_state"


def complement_sites(geo: ChainGeometry, target: SupportInterval) -> list[int]:
    return [s for s in range(1, geo.d + 1) if not target.lo <= s <= target.hi]


def _grouped(a: np.ndarray, geo: ChainGeometry, target: SupportInterval) -> np.ndarray:
    """Reshape a full operator to ``(target, rest, target, rest)`` index order."""
    d, n = geo.d, geo.n
    keep = [s - 1 for s in target.sites()]
    rest = [s - 1 for s in complement_sites(geo, target)]
    t = np.asarray(a).reshape((n,) * (2 * d))
    perm = keep + rest + [d + s for s in keep] + [d + s for s in rest]
    kd, rd = n ** len(keep), n ** len(rest)
    return t.transpose(perm).reshape(kd, rd, kd, rd)


def reduced_density(psi: np.ndarray, geo: ChainGeometry, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of ``psi`` on the (sorted) sites ``keep``."""
    d, n = geo.d, geo.n
    keep = sorted(keep)
    rest = [s for s in range(1, d + 1) if s not in keep]
    t = np.asarray(psi).reshape((n,) * d).transpose([s - 1 for s in keep + rest])
    m = t.reshape(n ** len(keep), n ** len(rest))
    return m @ m.conj().T


@dataclass(frozen=True, eq=False)
class LocalizationChannel:
    """Conditional expectation onto operators supported on ``target``.

    ``reference_state`` is a density matrix on the complement sites (in
    increasing site order); ``None`` means the maximally mixed state.
    """

    geo: ChainGeometry
    target: SupportInterval
    reference_state: np.ndarray | None = None

    def __post_init__(self):
        if not self.target.within(self.geo.d):
            raise ValueError(f"target {self.target} outside chain of {self.geo.d} sites")
        if self.reference_state is not None:
            rho = np.asarray(self.reference_state)
            cdim = self.geo.n ** (self.geo.d - self.target.width)
            if rho.shape != (cdim, cdim):
                raise ValueError(f"reference state shape {rho.shape}, expected {(cdim, cdim)}")
            if np.max(np.abs(rho - rho.conj().T)) > 1e-10:
                raise ValueError("reference state is not hermitian")
            if abs(np.trace(rho) - 1.0) > 1e-10:
                raise ValueError("reference state does not have unit trace")
            if np.linalg.eigvalsh(rho)[0] < -1e-10:
                raise ValueError("reference state is not positive semidefinite")

    @classmethod
    def for_ground_state(cls, geo, target, psi):
        rho = reduced_density(psi, geo, complement_sites(geo, target))
        return cls(geo, target, rho)

    @property
    def is_full(self) -> bool:
        return self.target == self.geo.full_support()


def localize(a: np.ndarray, channel: LocalizationChannel) -> LocalOperator:
    """Weighted partial trace of ``A`` over the complement of the target."""
    geo = channel.geo
    a = np.asarray(a)
    if a.shape != (geo.dim, geo.dim):
        raise ValueError(f"operator shape {a.shape} does not match chain dimension {geo.dim}")
    if channel.is_full:
        return LocalOperator(channel.target, a.copy(), geo.n)
    g = _grouped(a, geo, channel.target)
    if channel.reference_state is None:
        local = np.einsum("acbc->ab", g) / g.shape[1]
    else:
        local = np.einsum("acbe,ec->ab", g, channel.reference_state)
    return LocalOperator(channel.target, local, geo.n)


def make_channel(geo, target, reference=MAXIMALLY_MIXED, psi=None) -> LocalizationChannel:
    if reference == MAXIMALLY_MIXED or target == geo.full_support():
        return LocalizationChannel(geo, target)
    if reference == GROUND_STATE:
        if psi is None:
            raise ValueError("ground-state reference needs the ground state vector")
        return LocalizationChannel.for_ground_state(geo, target, psi)
    raise ValueError(f"unknown reference state {reference!r}")


def restrict(a: np.ndarray, geo: ChainGeometry, target: SupportInterval) -> LocalOperator:
    """Local matrix of an operator already supported inside ``target``."""
    return localize(a, LocalizationChannel(geo, target))


@dataclass(frozen=True, eq=False)
class LocalizedBlocks:
    """``M_X = H_X + Theta_X`` for ``X`` in left, bulk, right.

    ``h_*`` are the recentered partition blocks, ``h_tilde_*`` their Gaussian
    smears.  ``m_left_local``/``m_right_local`` are the same operators as
    ``m_left``/``m_right`` restricted to ``[1, j]`` and ``[j+1, d]``.
    """

    geo: ChainGeometry
    j: int
    l: int
    q: float
    width: int
    reference: str
    ground_state: np.ndarray
    partition: PartitionedHamiltonian
    h_left: np.ndarray
    h_bulk: np.ndarray
    h_right: np.ndarray
    h_tilde_left: np.ndarray
    h_tilde_bulk: np.ndarray
    h_tilde_right: np.ndarray
    theta_left: LocalOperator
    theta_bulk: LocalOperator
    theta_right: LocalOperator
    m_left: np.ndarray
    m_bulk: np.ndarray
    m_right: np.ndarray

    @cached_property
    def m_left_local(self) -> LocalOperator:
        return restrict(self.m_left, self.geo, SupportInterval(1, self.j))

    @cached_property
    def m_right_local(self) -> LocalOperator:
        return restrict(self.m_right, self.geo, SupportInterval(self.j + 1, self.geo.d))

    @cached_property
    def bulk_support(self) -> SupportInterval:
        s = self.partition.supports["B"]
        return self.theta_bulk.support if s is None else s.hull(self.theta_bulk.support)

    @cached_property
    def m_bulk_local(self) -> LocalOperator:
        return restrict(self.m_bulk, self.geo, self.bulk_support)

    def localization_errors(self) -> dict[str, float]:
        """``||H~_X - M_X||`` for each block."""
        return {
            "L": operator_norm(self.h_tilde_left - self.m_left),
            "B": operator_norm(self.h_tilde_bulk - self.m_bulk),
            "R": operator_norm(self.h_tilde_right - self.m_right),
        }


def theta_windows(d: int, j: int, width: int) -> dict[str, SupportInterval]:
    """Supports of the three Theta operators for a given localization width.

    The default width ``2l + 2`` gives ``[j-2l-2, j]``, ``[j-2l-2, j+2l+3]``
    and ``[j+1, j+2l+3]``.
    """
    return {
        "L": SupportInterval.clipped(j - width, j, d),
        "B": SupportInterval.clipped(j - width, j + 1 + width, d),
        "R": SupportInterval.clipped(j + 1, j + 1 + width, d),
    }


def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def build_localized_blocks(h: NNIHamiltonian, es: EigenSystem, j: int, l: int, q: float,
                           width: int | None = None,
                           reference: str = MAXIMALLY_MIXED) -> LocalizedBlocks:
    """Recenter, smear and localize the three partition blocks.

    ``Theta_X`` is the localization of ``H~_X - H_X``; the localization map is
    linear and time independent, so this equals localizing the integrand of
    the Gaussian time average.
    """
    part = partition(h, j, l)
    geo = h.geo
    width = 2 * l + 2 if width is None else int(width)
    if width < 0:
        raise ValueError(f"localization width must be >= 0, got {width}")
    psi = es.ground_state
    windows = theta_windows(geo.d, j, width)

    blocks = {"L": part.h_left, "B": part.h_bulk, "R": part.h_right}
    centered, smeared, thetas, ms = {}, {}, {}, {}
    for key, block in blocks.items():
        hc = recenter(block, psi)
        ht = gaussian_smear(es, hc, q)
        channel = make_channel(geo, windows[key], reference, psi)
        theta = localize(ht - hc, channel)
        theta = LocalOperator(theta.support, _hermitize(theta.matrix), geo.n)
        centered[key], smeared[key], thetas[key] = hc, ht, theta
        ms[key] = _hermitize(hc + embed(theta, geo))

    return LocalizedBlocks(
        geo, j, l, float(q), width, reference, psi, part,
        centered["L"], centered["B"], centered["R"],
        smeared["L"], smeared["B"], smeared["R"],
        thetas["L"], thetas["B"], thetas["R"],
        ms["L"], ms["B"], ms["R"],
    )


# --- light cone -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LRProfile:
    """Commutator norms ``||[A(t), B_p]||`` for probes ``p`` and times ``t``."""

    times: np.ndarray
    distances: np.ndarray
    norms: np.ndarray  # shape (n_probes, n_times)

    def rows(self):
        for it, t in enumerate(self.times):
            for ip, dist in enumerate(self.distances):
                yield float(t), int(dist), float(self.norms[ip, it])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time", "distance", "commutator_norm"])
            for t, dist, val in self.rows():
                w.writerow([repr(t), dist, repr(val)])

    @classmethod
    def from_rows(cls, rows) -> "LRProfile":
        rows = list(rows)
        times = np.array(sorted({float(r[0]) for r in rows}))
        dists = np.array(sorted({int(r[1]) for r in rows}))
        norms = np.zeros((dists.size, times.size))
        for t, dist, val in rows:
            norms[np.searchsorted(dists, int(dist)), np.searchsorted(times, float(t))] = val
        return cls(times, dists, norms)


def lr_cone_profile(h: NNIHamiltonian, es: EigenSystem, a: LocalOperator,
                    probes: Sequence[LocalOperator], times: Sequence[float]) -> LRProfile:
    geo = h.geo
    a_full = embed(a, geo)
    a_eig = es.to_eigenbasis(a_full)
    probe_mats = [embed(p, geo) for p in probes]
    lam = es.eigenvalues
    diffs = lam[:, None] - lam[None, :]
    norms = np.zeros((len(probes), len(times)))
    for it, t in enumerate(times):
        at = a_full if t == 0 else es.from_eigenbasis(a_eig * np.exp(1j * t * diffs))
        for ip, b in enumerate(probe_mats):
            norms[ip, it] = operator_norm(commutator(at, b))
    dists = np.array([support_distance(a, p) for p in probes])
    return LRProfile(np.asarray(times, dtype=float), dists, norms)


@dataclass(frozen=True)
class LRFit:
    """``||[A(t), B]|| ~ C exp(-a (dist - v t))`` fitted in log space."""

    C: float
    a: float
    v: float
    residual: float
    points: int


def fit_lr_constants(profile: LRProfile, floor: float = 1e-12,
                     ceiling: float | None = None) -> LRFit:
    """Least-squares fit of ``log norm = log C - a dist + a v t``.

    Only entries above ``floor`` (and below ``ceiling``, if given) enter
    the fit; at least three distinct distances and times are required.
    """
    t_grid, d_grid = np.meshgrid(profile.times, profile.distances)
    y = profile.norms
    mask = y > floor
    if ceiling is not None:
        mask &= y < ceiling
    if not mask.any():
        raise ValueError("degenerate profile: no entries above the floor")
    ts, ds, ys = t_grid[mask], d_grid[mask], y[mask]
    if np.unique(ts).size < 3 or np.unique(ds).size < 3:
        raise ValueError("degenerate profile: need >= 3 distinct distances and times")
    design = np.column_stack([np.ones_like(ts), -ds, ts])
    coef, *_ = np.linalg.lstsq(design, np.log(ys), rcond=None)
    resid = float(np.linalg.norm(design @ coef - np.log(ys)))
    log_c, a, av = coef
    v = av / a if a != 0 else float("nan")
    return LRFit(float(np.exp(log_c)), float(a), float(v), resid, int(mask.sum()))
