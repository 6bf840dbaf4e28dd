"""Three-factor approximation ``P_0 ~ B L R`` of the ground-state projection.

``L`` and ``R`` are spectral windows of the localized blocks ``M_L`` and
``M_R``.  ``B`` is a Gaussian time average of the ordered exponential of
``i M_B(t)``, with ``M_B(t) = exp(iGt) M_B exp(-iGt)`` and ``G = M_L + M_R``,
optionally localized onto a window around the cut.

Because ``M_L`` lives on ``[1, j]`` and ``M_R`` on ``[j+1, d]``, ``exp(iGt)``
factorizes and the localized generator can be formed from two small
channel tensors without touching full-chain matrices.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import roots_hermite

from .chain_algebra import (
    LocalOperator,
    SupportInterval,
    embed,
    operator_norm,
)
from .hamiltonian import NNIHamiltonian, check_admissible
from .localization import (
    MAXIMALLY_MIXED,
    LocalizedBlocks,
    build_localized_blocks,
    localize,
    make_channel,
)
from .spectral import (
    TRACE_NORMALIZED,
    EigenSystem,
    gaussian_filter,
    ground_projection,
)

# Gaussian tail cut-off in units of sqrt(q): exp(-8.5^2 / 2) ~ 2e-16.
TAIL_SIGMAS = 8.5


class _Eigh:
    """Eigendecomposition of a Hermitian matrix with cached exponentials."""

    def __init__(self, m: np.ndarray):
        self.values, self.vectors = np.linalg.eigh((m + m.conj().T) / 2)

    def expi(self, t: float) -> np.ndarray:
        """``exp(i t M)``."""
        v = self.vectors
        return (v * np.exp(1j * t * self.values)) @ v.conj().T

    @property
    def spread(self) -> float:
        return float(self.values[-1] - self.values[0])


def _expi_hermitian(m: np.ndarray, t: float) -> np.ndarray:
    return _Eigh(m).expi(t)


# --- spectral windows -------------------------------------------------------


def spectral_window(m: np.ndarray, threshold: float) -> np.ndarray:
    """Projector onto eigenvectors of ``m`` with ``|lambda| <= threshold``."""
    w, v = np.linalg.eigh((m + np.conj(m).T) / 2)
    keep = np.abs(w) <= threshold
    vk = v[:, keep]
    return vk @ vk.conj().T


ThresholdRule = str | float | Callable[[np.ndarray, np.ndarray], float]


def resolve_threshold(rule: ThresholdRule, m_full: np.ndarray, psi: np.ndarray) -> float:
    """Window half-width for ``M`` given the ground state ``psi``.

    Rules: ``"margin:k"`` gives ``max(k ||M psi||, 1e-12)``, ``"fixed:tau"``
    a constant, ``"inf"`` the whole spectrum; a float is a fixed threshold
    and a callable receives ``(M, psi)``.
    """
    if callable(rule):
        return float(rule(m_full, psi))
    if isinstance(rule, (int, float)):
        return float(rule)
    kind, _, arg = str(rule).partition(":")
    kind = kind.strip().lower()
    if kind == "margin":
        factor = float(arg) if arg else 10.0
        return max(factor * float(np.linalg.norm(m_full @ psi)), 1e-12)
    if kind == "fixed":
        return float(arg)
    if kind == "inf":
        return math.inf
    raise ValueError(f"unknown threshold rule {rule!r}")


@dataclass(frozen=True, eq=False)
class LRPair:
    L: LocalOperator
    R: LocalOperator
    tau_left: float
    tau_right: float
    leak_left: float   # ||(L - I) psi_0||
    leak_right: float  # ||(R - I) psi_0||


def build_LR(blocks: LocalizedBlocks, threshold_rule: ThresholdRule = "margin:10") -> LRPair:
    geo, psi = blocks.geo, blocks.ground_state
    tau_l = resolve_threshold(threshold_rule, blocks.m_left, psi)
    tau_r = resolve_threshold(threshold_rule, blocks.m_right, psi)
    ml, mr = blocks.m_left_local, blocks.m_right_local
    L = LocalOperator(ml.support, spectral_window(ml.matrix, tau_l), geo.n)
    R = LocalOperator(mr.support, spectral_window(mr.matrix, tau_r), geo.n)
    leak_l = float(np.linalg.norm(embed(L, geo) @ psi - psi))
    leak_r = float(np.linalg.norm(embed(R, geo) @ psi - psi))
    return LRPair(L, R, tau_l, tau_r, leak_l, leak_r)


# --- ordered exponentials ---------------------------------------------------


class Dynamics:
    """Propagators built from a set of localized blocks (cached per blocks)."""

    def __init__(self, blocks: LocalizedBlocks):
        self.blocks = blocks
        self.geo = blocks.geo

    @cached_property
    def full(self) -> _Eigh:
        b = self.blocks
        return _Eigh(b.m_left + b.m_bulk + b.m_right)

    @cached_property
    def outer(self) -> _Eigh:
        b = self.blocks
        return _Eigh(b.m_left + b.m_right)

    @cached_property
    def left(self) -> _Eigh:
        return _Eigh(self.blocks.m_left_local.matrix)

    @cached_property
    def right(self) -> _Eigh:
        return _Eigh(self.blocks.m_right_local.matrix)

    @cached_property
    def bulk_norm(self) -> float:
        return operator_norm(self.blocks.m_bulk_local.matrix)

    def outer_expi(self, t: float) -> np.ndarray:
        """``exp(iGt)`` on the full chain as a Kronecker product."""
        return np.kron(self.left.expi(t), self.right.expi(t))

    def ordered_unitary(self, t: float) -> np.ndarray:
        return self.full.expi(t) @ self.outer.expi(-t)

    def frequency_bound(self) -> float:
        """Bound on the oscillation frequencies of the B integrand."""
        return self.left.spread + self.right.spread + 2.0 * self.bulk_norm

    # localized generator ------------------------------------------------
    def generator(self, window: SupportInterval, reference: str = MAXIMALLY_MIXED
                  ) -> "WindowGenerator":
        return WindowGenerator(self, window, reference)


def _dynamics(blocks: LocalizedBlocks) -> Dynamics:
    dyn = blocks.__dict__.get("_dynamics")
    if dyn is None:
        dyn = Dynamics(blocks)
        blocks.__dict__["_dynamics"] = dyn
    return dyn


class WindowGenerator:
    """``t -> Pi_W(M_B(t))`` as a matrix on the window ``W``.

    With a maximally mixed reference, a window containing ``supp(M_B)`` and
    straddling the cut, the partial trace is done through left/right channel
    tensors of ``exp(i M_L t)`` and ``exp(i M_R t)``.  Any other case falls
    back to evolving ``M_B`` on the full chain and localizing.
    """

    def __init__(self, dyn: Dynamics, window: SupportInterval, reference: str):
        self.dyn = dyn
        self.window = window
        self.reference = reference
        blocks = dyn.blocks
        geo = dyn.geo
        j = blocks.j
        self.full_window = window == geo.full_support()
        self.fast = (
            reference == MAXIMALLY_MIXED
            and window.contains(blocks.bulk_support)
            and window.lo <= j < window.hi
        )
        if self.fast:
            n = geo.n
            self.a1 = n ** (window.lo - 1)
            self.a2 = n ** (j - window.lo + 1)
            self.a3 = n ** (window.hi - j)
            self.a4 = n ** (geo.d - window.hi)
            mb = blocks.m_bulk_local.widen(window).matrix
            # rows (u, v) over the left part, columns (e, f) over the right part
            a2, a3 = self.a2, self.a3
            self.mb = mb.reshape(a2, a3, a2, a3).transpose(0, 2, 1, 3).reshape(a2 * a2, a3 * a3)
        else:
            self.channel = make_channel(geo, window, reference, blocks.ground_state)

    @property
    def dim(self) -> int:
        return self.dyn.geo.n ** self.window.width

    def __call__(self, t: float) -> np.ndarray:
        if not self.fast:
            u = self.dyn.outer_expi(t)
            mbt = u @ self.dyn.blocks.m_bulk @ u.conj().T
            return localize(mbt, self.channel).matrix
        a1, a2, a3, a4 = self.a1, self.a2, self.a3, self.a4
        tl = _transfer(self.dyn.left.expi(t), a1, a2, outer_first=True) / a1
        tr = _transfer(self.dyn.right.expi(t), a3, a4, outer_first=False) / a4
        out = (tl @ self.mb @ tr.T).reshape(a2, a2, a3, a3)
        out = out.transpose(0, 2, 1, 3).reshape(a2 * a3, a2 * a3)
        return (out + out.conj().T) / 2


def _transfer(u: np.ndarray, da: int, db: int, outer_first: bool) -> np.ndarray:
    """Matrix of ``X -> Tr_outer(U (I (x) X) U^dagger)`` on the kept factor.

    ``u`` acts on ``outer (x) kept`` (``outer_first``) or ``kept (x) outer``;
    rows are indexed by the output pair ``(x, y)``, columns by ``(u, v)``.
    """
    if outer_first:
        t = u.reshape(da, db, da, db).transpose(1, 3, 0, 2)  # (x, u, p, c)
        kept = db
    else:
        t = u.reshape(da, db, da, db).transpose(0, 2, 1, 3)  # (x, u, r, s)
        kept = da
    a = t.reshape(kept * kept, -1)
    g = (a @ a.conj().T).reshape(kept, kept, kept, kept)  # (x, u, y, v)
    return g.transpose(0, 2, 1, 3).reshape(kept * kept, kept * kept)


def ordered_unitary(blocks: LocalizedBlocks, t: float) -> np.ndarray:
    """``U(t) = exp(i(M_L+M_B+M_R)t) exp(-i(M_L+M_R)t)``."""
    return _dynamics(blocks).ordered_unitary(t)


def _step_times(t: float, K: int, rule: str) -> tuple[np.ndarray, float]:
    dt = t / K
    if rule == "left":
        return np.arange(K) * dt, dt
    if rule == "midpoint":
        return (np.arange(K) + 0.5) * dt, dt
    raise ValueError(f"unknown step rule {rule!r}")


def product_integral(blocks: LocalizedBlocks, t: float, K: int, localized: bool = False,
                     window: SupportInterval | None = None, rule: str = "left",
                     reference: str = MAXIMALLY_MIXED) -> np.ndarray:
    """Ordered product ``exp(i A(t_0) dt) exp(i A(t_1) dt) ... exp(i A(t_{K-1}) dt)``.

    ``A(t)`` is ``M_B(t)``, or its localization onto ``window`` when
    ``localized`` is set.  Earlier times stand to the left, so the product
    converges to :func:`ordered_unitary` as ``K`` grows.  The result is
    returned on the full chain.
    """
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    dyn = _dynamics(blocks)
    geo = blocks.geo
    if not localized:
        times, dt = _step_times(t, K, rule)
        # exp(iGt_i) E exp(-iGt_i) telescopes: e^{iGt_0} (E D)^{K-1} E e^{-iGt_{K-1}}.
        e = _expi_hermitian(blocks.m_bulk, dt)
        dstep = dyn.outer.expi(dt)
        core = np.linalg.matrix_power(e @ dstep, K - 1) @ e
        return dyn.outer.expi(times[0]) @ core @ dyn.outer.expi(-times[-1])
    window = geo.full_support() if window is None else window
    gen = dyn.generator(window, reference)
    local = _ordered_local(gen, 0.0, t, K, rule)
    return embed(LocalOperator(window, local, geo.n), geo)


def _ordered_local(gen: WindowGenerator, t0: float, t1: float, K: int, rule: str,
                   start: np.ndarray | None = None) -> np.ndarray:
    times, dt = _step_times(t1 - t0, K, rule)
    out = np.eye(gen.dim, dtype=complex) if start is None else start
    for s in times:
        out = out @ _expi_hermitian(gen(t0 + s), dt)
    return out


# --- B ----------------------------------------------------------------------


def default_b_window(d: int, j: int, l: int) -> SupportInterval:
    return SupportInterval.clipped(j - 3 * l - 2, j + 3 * l + 3, d)


@dataclass(frozen=True)
class QuadratureConfig:
    """How the Gaussian time average defining ``B`` is evaluated.

    ``method="auto"`` uses the exact eigenbasis formula when the window is
    the whole chain (the localization is then the identity) and ``rule``
    otherwise; ``"closed-form"`` insists on the exact formula and
    ``"quadrature"`` always integrates numerically.

    ``rule`` is ``"trapezoid"`` (uniform grid in ``t`` whose step resolves
    the integrand's frequency bound, ``substeps`` midpoint product steps
    between grid points) or ``"gauss-hermite"`` (``gh_nodes`` nodes,
    ``K_steps`` left-point product steps per node).
    """

    method: str = "auto"
    rule: str = "trapezoid"
    gh_nodes: int = 64
    K_steps: int = 256
    substeps: int = 4
    tail: float = TAIL_SIGMAS


@dataclass(frozen=True, eq=False)
class BResult:
    B: LocalOperator
    raw: np.ndarray
    method: str
    nodes: int
    corrections: dict[str, float]


def closed_form_b(blocks: LocalizedBlocks, q: float, N: int) -> np.ndarray:
    """Gaussian average of ``U(t)`` on the full chain, exactly.

    With ``M = sum_a lambda_a P_a`` and ``G = sum_b mu_b Q_b`` the average of
    ``exp(iMt) exp(-iGt)`` is ``sum_ab exp(-q (lambda_a - mu_b)^2 / 2) P_a Q_b``.
    """
    dyn = _dynamics(blocks)
    vm, lm = dyn.full.vectors, dyn.full.values
    vg, lg = dyn.outer.vectors, dyn.outer.values
    overlap = vm.conj().T @ vg
    weights = np.exp(-0.5 * q * (lm[:, None] - lg[None, :]) ** 2)
    return vm @ (overlap * weights) @ vg.conj().T / N


def _trapezoid_b(gen: WindowGenerator, q: float, N: int, cfg: QuadratureConfig,
                 omega: float) -> tuple[np.ndarray, int]:
    sq = math.sqrt(q)
    # Aliased copies sit at 2 pi / h - omega; keep them beyond tail sigmas.
    h = 2.0 * math.pi / (omega + cfg.tail / sq)
    m_max = max(1, math.ceil(cfg.tail * sq / h))
    weight = lambda t: h * math.exp(-t * t / (2 * q)) / math.sqrt(2 * math.pi * q)
    acc = weight(0.0) * np.eye(gen.dim, dtype=complex)
    for sign in (1.0, -1.0):
        v = np.eye(gen.dim, dtype=complex)
        for m in range(1, m_max + 1):
            t0 = sign * (m - 1) * h
            v = _ordered_local(gen, t0, t0 + sign * h, cfg.substeps, "midpoint", start=v)
            acc += weight(sign * m * h) * v
    return acc / N, 2 * m_max + 1


def _gauss_hermite_b(gen: WindowGenerator, q: float, N: int,
                     cfg: QuadratureConfig) -> tuple[np.ndarray, int]:
    s, w = roots_hermite(cfg.gh_nodes)
    w = w / math.sqrt(math.pi)
    acc = np.zeros((gen.dim, gen.dim), dtype=complex)
    used = 0
    for sk, wk in zip(s, w):
        if wk < 1e-17:
            continue
        t = math.sqrt(2 * q) * sk
        acc += wk * _ordered_local(gen, 0.0, t, cfg.K_steps, "left")
        used += 1
    return acc / N, used


def build_B(blocks: LocalizedBlocks, q: float, window: SupportInterval | None = None,
            N: int = 1, quadrature: QuadratureConfig | None = None,
            reference: str = MAXIMALLY_MIXED) -> BResult:
    """Localized ``B`` on ``window``, Hermitian, positive and of norm <= 1.

    The raw average is Hermitized, its negative eigenvalues are clamped to
    zero and it is rescaled if its norm exceeds one; the size of each
    correction is reported in ``corrections``.
    """
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    cfg = quadrature or QuadratureConfig()
    geo = blocks.geo
    window = default_b_window(geo.d, blocks.j, blocks.l) if window is None else window
    dyn = _dynamics(blocks)
    gen = dyn.generator(window, reference)

    if q == 0:
        raw, method, nodes = np.eye(gen.dim, dtype=complex) / N, "identity", 0
    elif cfg.method in ("auto", "closed-form") and gen.full_window:
        raw, method, nodes = closed_form_b(blocks, q, N), "closed-form", 0
    elif cfg.method == "closed-form":
        raise ValueError("closed-form B is only available for the full-chain window")
    elif cfg.rule == "trapezoid":
        raw, nodes = _trapezoid_b(gen, q, N, cfg, dyn.frequency_bound())
        method = "trapezoid"
    elif cfg.rule == "gauss-hermite":
        raw, nodes = _gauss_hermite_b(gen, q, N, cfg)
        method = "gauss-hermite"
    else:
        raise ValueError(f"unknown quadrature rule {cfg.rule!r}")

    herm = (raw + raw.conj().T) / 2
    w, v = np.linalg.eigh(herm)
    pos = (v * np.clip(w, 0.0, None)) @ v.conj().T
    top = float(max(w[-1], 0.0))
    final = pos / top if top > 1.0 else pos
    corrections = {
        "hermitize": operator_norm(raw - herm),
        "positivity": float(max(-w[0], 0.0)),
        "rescale": float(max(top - 1.0, 0.0)),
    }
    B = LocalOperator(window, final, geo.n)
    return BResult(B, raw, method, nodes, corrections)


# --- full pipeline ----------------------------------------------------------


@dataclass(frozen=True)
class BLRConfig:
    threshold_rule: str = "margin:10"
    reference: str = MAXIMALLY_MIXED
    width: int | None = None
    b_window: tuple[int, int] | None = None
    projection_mode: str = TRACE_NORMALIZED
    quadrature: QuadratureConfig = field(default_factory=QuadratureConfig)


@dataclass(frozen=True, eq=False)
class BLRFactors:
    L: LocalOperator
    R: LocalOperator
    B: LocalOperator
    j: int
    l: int
    q: float
    thresholds: tuple[float, float]
    diagnostics: list[dict]


@dataclass(frozen=True, eq=False)
class BLRResult:
    factors: BLRFactors
    error: float
    stage_errors: dict[str, float]
    blocks: LocalizedBlocks
    b_method: str
    extras: dict[str, float]

    def stage_bound(self) -> float:
        return float(sum(self.stage_errors.values()))

    def write_diagnostics(self, path: str | Path) -> None:
        write_diagnostics_csv(self.factors.diagnostics, path)


DIAGNOSTIC_HEADER = ("stage", "operator", "norm_error", "support_lo", "support_hi")


def write_diagnostics_csv(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DIAGNOSTIC_HEADER)
        for r in rows:
            w.writerow([r["stage"], r["operator"], repr(float(r["norm_error"])),
                        r["support_lo"], r["support_hi"]])


def default_q(l: int, gap: float, kappa: float = 1.0) -> float:
    return kappa * 2.0 * l / gap ** 2


def assemble_blr(h: NNIHamiltonian, es: EigenSystem, j: int, l: int,
                 q: float | None = None, kappa: float = 1.0,
                 config: BLRConfig | None = None) -> BLRResult:
    """Run partition, smearing, localization, windows and ``B``; measure the error.

    ``q`` defaults to ``kappa * 2l / gap^2``.  The returned stage errors
    telescope, so their sum bounds ``||P_0 - BLR||``:

    * ``filter``       ``||rho^q - P_0||``
    * ``localization`` ``||rho^q - rho_M^q||`` with ``rho_M^q`` the filter of ``M_L+M_B+M_R``
    * ``windows``      ``||P_0 L R - P_0||``
    * ``outer_phase``  ``||(rho_M^q - B~) L R||`` with ``B~`` the unlocalized average
    * ``b_local``      ``||(B~ - B_raw) L R||``
    * ``b_post``       ``||(B_raw - B) L R||``
    """
    cfg = config or BLRConfig()
    check_admissible(h.d, j, l)
    geo = h.geo
    q = default_q(l, es.gap, kappa) if q is None else float(q)
    N = es.degeneracy

    blocks = build_localized_blocks(h, es, j, l, q, cfg.width, cfg.reference)
    lr = build_LR(blocks, cfg.threshold_rule)
    window = (default_b_window(geo.d, j, l) if cfg.b_window is None
              else SupportInterval.clipped(*cfg.b_window, geo.d))
    bres = build_B(blocks, q, window, N, cfg.quadrature, cfg.reference)

    p0 = ground_projection(es, cfg.projection_mode).matrix
    Lf, Rf, Bf = embed(lr.L, geo), embed(lr.R, geo), embed(bres.B, geo)
    LR = Lf @ Rf
    blr = Bf @ LR
    error = operator_norm(p0 - blr)

    dyn = _dynamics(blocks)
    rho = gaussian_filter(es, q, N)
    rho_m = (dyn.full.vectors * np.exp(-0.5 * q * dyn.full.values ** 2)) @ dyn.full.vectors.conj().T / N
    b_tilde = closed_form_b(blocks, q, N) if q > 0 else np.eye(geo.dim) / N
    raw_full = embed(LocalOperator(window, bres.raw, geo.n), geo)
    stage = {
        "filter": operator_norm(rho - p0),
        "localization": operator_norm(rho - rho_m),
        "windows": operator_norm(p0 @ LR - p0),
        "outer_phase": operator_norm((rho_m - b_tilde) @ LR),
        "b_local": operator_norm((b_tilde - raw_full) @ LR),
        "b_post": operator_norm((raw_full - Bf) @ LR),
    }
    loc_err = blocks.localization_errors()
    extras = {
        "ordering": operator_norm(blr - LR @ Bf),
        "leak_L": lr.leak_left,
        "leak_R": lr.leak_right,
        **{f"smear_local_{k}": v for k, v in loc_err.items()},
        **{f"b_{k}": v for k, v in bres.corrections.items()},
    }

    full = geo.full_support()
    rows = [
        dict(stage=name, operator="P0", norm_error=val, support_lo=1, support_hi=geo.d)
        for name, val in stage.items()
    ]
    for key, theta in (("L", blocks.theta_left), ("B", blocks.theta_bulk), ("R", blocks.theta_right)):
        rows.append(dict(stage="smear_local", operator=f"M_{key}", norm_error=loc_err[key],
                         support_lo=theta.support.lo, support_hi=theta.support.hi))
    rows.append(dict(stage="window_leak", operator="L", norm_error=lr.leak_left,
                     support_lo=lr.L.support.lo, support_hi=lr.L.support.hi))
    rows.append(dict(stage="window_leak", operator="R", norm_error=lr.leak_right,
                     support_lo=lr.R.support.lo, support_hi=lr.R.support.hi))
    for name, val in bres.corrections.items():
        rows.append(dict(stage=f"b_{name}", operator="B", norm_error=val,
                         support_lo=window.lo, support_hi=window.hi))
    rows.append(dict(stage="ordering", operator="BLR-LRB", norm_error=extras["ordering"],
                     support_lo=full.lo, support_hi=full.hi))
    rows.append(dict(stage="final", operator="P0-BLR", norm_error=error,
                     support_lo=full.lo, support_hi=full.hi))

    factors = BLRFactors(lr.L, lr.R, bres.B, j, l, q, (lr.tau_left, lr.tau_right), rows)
    return BLRResult(factors, error, stage, blocks, bres.method, extras)
