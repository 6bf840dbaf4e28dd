"""Experiment orchestration: config files, sweeps, decay fits and CSV output.

Every runner returns its table as a header plus rows and never writes
timestamps or other run-dependent values, so reruns with the same config
produce byte-identical CSV files.  Sweep points run in a thread pool; the
results are collected in sweep-list order.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .blr import BLRConfig, QuadratureConfig, assemble_blr
from .chain_algebra import (
    DEFAULT_CAP,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    LocalOperator,
    SupportInterval,
    operator_norm,
)
from .hamiltonian import (
    MODEL_KEYS,
    assemble,
    build_from_spec,
    check_admissible,
    interaction_strength,
    parse_key_values,
)
from .localization import GROUND_STATE, MAXIMALLY_MIXED, fit_lr_constants, lr_cone_profile
from .ranks import operator_cut_rank, rank_saturation_scan
from .spectral import NumericalError, diagonalize

log = logging.getLogger("gsplab")


class ConfigError(ValueError):
    """The configuration file or a command-line flag is invalid."""


class InsufficientDataError(ValueError):
    """Too few usable rows for a decay fit."""


def fmt(x) -> str:
    """Deterministic CSV cell: ``repr`` for floats, ``str`` otherwise."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return "" if x is None else str(x)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def read_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- configuration -----------------------------------------------------------

_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}

CONFIG_KEYS = frozenset(MODEL_KEYS) | {
    "d_list", "j", "l", "kappa", "q", "epsilon", "times",
    "gh_nodes", "K_steps", "substeps", "quadrature", "threshold_rule", "reference",
    "width", "b_window", "initial_state", "lr_operator", "lr_site", "lr_distances",
    "lr_ceiling", "input", "x_column", "y_column", "noise_floor", "target_epsilon",
}


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def _ints(text: str) -> list[int]:
    return [int(s) for s in text.split(",") if s.strip()]


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a subcommand needs; built from a flat ``key=value`` file.

    List-valued keys take comma-separated values; ``j=middle`` places the cut
    at ``d // 2``.  An empty list (``l=``) yields an empty sweep.
    """

    model: dict = field(default_factory=lambda: {"model": "tfim"})
    d_list: list[int] = field(default_factory=lambda: [8])
    j_list: list[int] | None = None  # None: middle cut
    l_list: list[int] = field(default_factory=lambda: [0])
    kappa_list: list[float] = field(default_factory=lambda: [1.0])
    q_list: list[float] | None = None
    epsilon_list: list[float] = field(default_factory=lambda: [1e-3])
    times: list[float] = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    seed: int = 0
    cap: int = DEFAULT_CAP
    threads: int = 1
    out: Path = Path("out")
    gh_nodes: int = 64
    K_steps: int = 256
    substeps: int = 4
    quadrature: str = "trapezoid"
    threshold_rule: str = "margin:10"
    reference: str = MAXIMALLY_MIXED
    width: int | None = None
    b_window: tuple[int, int] | None = None
    initial_state: str = "0"
    lr_operator: str = "z"
    lr_site: int = 1
    lr_distances: list[int] | None = None
    lr_ceiling: float | None = None
    input: Path | None = None
    x_column: str = "l"
    y_column: str = "error"
    noise_floor: float = 1e-6
    target_epsilon: float | None = None

    @classmethod
    def from_mapping(cls, kv: Mapping[str, str]) -> "ExperimentConfig":
        unknown = sorted(set(kv) - CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls._parse(kv)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def _parse(cls, kv: Mapping[str, str]) -> "ExperimentConfig":
        out: dict = {}
        model = {k: kv[k] for k in MODEL_KEYS if k in kv}
        model.setdefault("model", "tfim")
        out["model"] = model
        if "d_list" in kv:
            out["d_list"] = _ints(kv["d_list"])
        elif "d" in kv:
            out["d_list"] = _ints(kv["d"])
        if "seed" in kv:
            out["seed"] = int(kv["seed"])
        if "j" in kv and kv["j"].strip().lower() != "middle":
            out["j_list"] = _ints(kv["j"])
        for key, name, conv in (("l", "l_list", _ints), ("kappa", "kappa_list", _floats),
                                ("q", "q_list", _floats), ("epsilon", "epsilon_list", _floats),
                                ("times", "times", _floats),
                                ("lr_distances", "lr_distances", _ints)):
            if key in kv:
                out[name] = conv(kv[key])
        for key in ("gh_nodes", "K_steps", "substeps", "width", "lr_site"):
            if key in kv:
                out[key] = int(kv[key])
        for key in ("noise_floor", "target_epsilon", "lr_ceiling"):
            if key in kv:
                out[key] = float(kv[key])
        for key in ("quadrature", "threshold_rule", "reference", "initial_state",
                    "lr_operator", "x_column", "y_column"):
            if key in kv:
                out[key] = kv[key].strip()
        if "input" in kv:
            out["input"] = Path(kv["input"])
        if "b_window" in kv:
            lo, hi = _ints(kv["b_window"])
            out["b_window"] = (lo, hi)
        cfg = cls(**out)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls()
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            kv = parse_key_values(text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return cls.from_mapping(kv)

    def validate(self) -> None:
        if self.quadrature not in ("trapezoid", "gauss-hermite"):
            raise ConfigError(f"quadrature must be trapezoid or gauss-hermite, got {self.quadrature!r}")
        if self.reference not in (MAXIMALLY_MIXED, GROUND_STATE):
            raise ConfigError(f"reference must be {MAXIMALLY_MIXED} or {GROUND_STATE}")
        if self.lr_operator.lower() not in _PAULI:
            raise ConfigError(f"lr_operator must be one of x, y, z, got {self.lr_operator!r}")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.cap < 2:
            raise ConfigError("cap must be >= 2")
        if min(self.gh_nodes, self.K_steps, self.substeps) < 1:
            raise ConfigError("gh_nodes, K_steps and substeps must be >= 1")

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        if "seed" in kw:
            kw["model"] = {**self.model, "seed": str(kw["seed"])}
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    @property
    def model_spec(self) -> dict:
        spec = dict(self.model)
        spec.setdefault("seed", str(self.seed))
        return spec

    def blr_config(self) -> BLRConfig:
        quad = QuadratureConfig(rule=self.quadrature, gh_nodes=self.gh_nodes,
                                K_steps=self.K_steps, substeps=self.substeps)
        return BLRConfig(threshold_rule=self.threshold_rule, reference=self.reference,
                         width=self.width, b_window=self.b_window, quadrature=quad)


def _pool_map(fn: Callable, items: list, threads: int) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class RunReport:
    """Rows written plus counts of skipped and failed points."""

    header: tuple[str, ...]
    rows: list[tuple]
    skipped: int = 0
    failed: int = 0
    path: Path | None = None


# --- gap scan ----------------------------------------------------------------

GAP_HEADER = ("d", "gap", "degeneracy", "J")


def run_gap_scan(spec: Mapping[str, object], d_list: Sequence[int],
                 cap: int = DEFAULT_CAP, threads: int = 1) -> RunReport:
    def point(d):
        h = build_from_spec(spec, d, cap)
        es = diagonalize(assemble(h))
        return (d, es.gap, es.degeneracy, interaction_strength(h))

    return RunReport(GAP_HEADER, _pool_map(point, list(d_list), threads))


# --- BLR sweep -----------------------------------------------------------------

STAGES = ("filter", "localization", "windows", "outer_phase", "b_local", "b_post")
EXTRAS = ("ordering", "leak_L", "leak_R", "b_hermitize", "b_positivity", "b_rescale")
BLR_HEADER = ("d", "j", "l", "kappa", "q", "error") + STAGES + EXTRAS + (
    "b_method", "norm_L", "norm_R", "norm_B")


def sweep_points(cfg: ExperimentConfig) -> list[tuple]:
    """Sweep points ``(d, j, l, kappa, q)`` in list order; ``q=None`` means ``kappa``-coupled."""
    pts = []
    q_list = cfg.q_list if cfg.q_list is not None else [None]
    for d in cfg.d_list:
        js = cfg.j_list if cfg.j_list is not None else [d // 2]
        for j, l, kappa, q in itertools.product(js, cfg.l_list, cfg.kappa_list, q_list):
            pts.append((d, j, l, kappa, q))
    return pts


def run_blr_sweep(cfg: ExperimentConfig) -> RunReport:
    """One row per admissible sweep point; other points are logged and skipped."""
    spec = cfg.model_spec
    bcfg = cfg.blr_config()
    points = sweep_points(cfg)
    systems: dict[int, tuple] = {}
    admissible = []
    skipped = 0
    for p in points:
        d, j, l, kappa, q = p
        try:
            check_admissible(d, j, l)
            if d not in systems:
                h = build_from_spec(spec, d, cfg.cap)
                systems[d] = (h, None)
        except ValueError as exc:
            log.warning("skip point d=%s j=%s l=%s kappa=%s: %s", d, j, l, kappa, exc)
            skipped += 1
            continue
        admissible.append(p)

    def eigensystem(d):
        h, es = systems[d]
        if es is None:
            es = diagonalize(assemble(h))
            systems[d] = (h, es)
        return h, es

    # Diagonalize every distinct size once, in sweep order.
    failed_d = set()
    for d in dict.fromkeys(p[0] for p in admissible):
        try:
            eigensystem(d)
        except (NumericalError, np.linalg.LinAlgError) as exc:
            log.error("numerical failure diagonalizing d=%s: %s", d, exc)
            failed_d.add(d)

    def point(p):
        d, j, l, kappa, q = p
        if d in failed_d:
            return None
        h, es = systems[d]
        try:
            r = assemble_blr(h, es, j, l, q=q, kappa=kappa, config=bcfg)
        except (NumericalError, np.linalg.LinAlgError, ValueError) as exc:
            log.error("point d=%s j=%s l=%s kappa=%s failed: %s", d, j, l, kappa, exc)
            return None
        f = r.factors
        ex = r.extras
        return (d, j, l, kappa, f.q, r.error,
                *(r.stage_errors[s] for s in STAGES),
                ex["ordering"], ex["leak_L"], ex["leak_R"],
                ex["b_hermitize"], ex["b_positivity"], ex["b_rescale"],
                r.b_method,
                _norm(f.L.matrix), _norm(f.R.matrix), _norm(f.B.matrix))

    results = _pool_map(point, admissible, cfg.threads)
    rows = [r for r in results if r is not None]
    failed = len(results) - len(rows)
    return RunReport(BLR_HEADER, rows, skipped, failed)


def _norm(m: np.ndarray) -> float:
    return operator_norm(m)


# --- decay fit ---------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    """``y ~ C exp(-c x)``; ``excluded`` counts rows dropped for ``y <= floor``."""

    c: float
    log_C: float
    residual: float
    points: int
    excluded: int = 0

    @property
    def C(self) -> float:
        return math.exp(self.log_C)


def fit_decay(rows: Sequence[Mapping] | Sequence[Sequence[float]], x_column: str | int = "l",
              y_column: str | int = "error", floor: float = 0.0) -> DecayFit:
    """Least squares of ``log y`` against ``x`` over rows with ``y > floor``.

    With ``floor`` at a noise level (say ``1e-6``) a table whose errors all
    sit below it raises :class:`InsufficientDataError` instead of fitting noise.
    """
    xs, ys = [], []
    for row in rows:
        xs.append(float(row[x_column]))
        ys.append(float(row[y_column]))
    x, y = np.array(xs), np.array(ys)
    keep = y > floor
    excluded = int((~keep).sum())
    if keep.sum() < 3:
        raise InsufficientDataError(
            f"decay fit needs >= 3 rows with {y_column} > {floor}; "
            f"got {int(keep.sum())} ({excluded} excluded)")
    x, logy = x[keep], np.log(y[keep])
    design = np.column_stack([np.ones_like(x), -x])
    coef, *_ = np.linalg.lstsq(design, logy, rcond=None)
    resid = float(np.linalg.norm(design @ coef - logy))
    return DecayFit(float(coef[1]), float(coef[0]), resid, int(keep.sum()), excluded)


def choose_l(fit: DecayFit, epsilon: float) -> int:
    """Smallest ``l`` with ``C exp(-c l) <= epsilon``, clamped at 0."""
    if not fit.c > 0:
        raise ValueError(f"no decay measured (c = {fit.c}); cannot choose l")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    return max(0, math.ceil((fit.log_C - math.log(epsilon)) / fit.c))


FIT_HEADER = ("x_column", "y_column", "c", "log_C", "C", "residual", "points", "excluded",
              "target_epsilon", "l_choice")


def run_fit(cfg: ExperimentConfig) -> RunReport:
    if cfg.input is None:
        raise ConfigError("fit needs input=<csv path>")
    try:
        rows = read_csv(cfg.input)
    except OSError as exc:
        raise ConfigError(f"cannot read {cfg.input}: {exc}") from exc
    if rows and (cfg.x_column not in rows[0] or cfg.y_column not in rows[0]):
        raise ConfigError(f"columns {cfg.x_column!r}/{cfg.y_column!r} not in {cfg.input}")
    try:
        fit = fit_decay(rows, cfg.x_column, cfg.y_column, cfg.noise_floor)
    except InsufficientDataError as exc:
        log.warning("no decay fit attempted: %s", exc)
        return RunReport(FIT_HEADER, [], skipped=1)
    l_choice = None
    if cfg.target_epsilon is not None:
        try:
            l_choice = choose_l(fit, cfg.target_epsilon)
        except ValueError as exc:
            log.warning("no l chosen: %s", exc)
    return RunReport(FIT_HEADER, [(cfg.x_column, cfg.y_column, fit.c, fit.log_C, fit.C,
                                   fit.residual, fit.points, fit.excluded,
                                   cfg.target_epsilon, l_choice)])


# --- light cone ---------------------------------------------------------------

LR_HEADER = ("time", "distance", "commutator_norm")
LR_FIT_HEADER = ("C", "a", "v", "residual", "points")


def run_lr_cone(cfg: ExperimentConfig) -> tuple[RunReport, RunReport]:
    """Commutator norms of a Pauli at ``lr_site`` against Paulis at growing distance."""
    d = cfg.d_list[0]
    h = build_from_spec(cfg.model_spec, d, cfg.cap)
    es = diagonalize(assemble(h))
    pauli = _PAULI[cfg.lr_operator.lower()]
    s = cfg.lr_site
    if not 1 <= s <= d:
        raise ConfigError(f"lr_site {s} outside 1..{d}")
    dists = cfg.lr_distances or list(range(1, d - s + 1))
    if any(s + k > d or k < 1 for k in dists):
        raise ConfigError(f"lr_distances {dists} do not fit a chain of {d} sites from site {s}")
    a = LocalOperator(SupportInterval(s, s), pauli)
    probes = [LocalOperator(SupportInterval(s + k, s + k), pauli) for k in dists]
    prof = lr_cone_profile(h, es, a, probes, cfg.times)
    table = RunReport(LR_HEADER, list(prof.rows()))
    try:
        fit = fit_lr_constants(prof, ceiling=cfg.lr_ceiling)
        fit_rows = [(fit.C, fit.a, fit.v, fit.residual, fit.points)]
    except ValueError as exc:
        log.warning("no light-cone fit: %s", exc)
        fit_rows = []
    return table, RunReport(LR_FIT_HEADER, fit_rows)


# --- ranks --------------------------------------------------------------------

RANK_SCAN_HEADER = ("d", "cut", "epsilon", "rank")


def run_rank_scan(cfg: ExperimentConfig) -> RunReport:
    spec = cfg.model_spec

    def point(eps):
        return [(d, d // 2, eps, r) for d, r in rank_saturation_scan(spec, eps, cfg.d_list, cfg.cap)]

    rows = [row for chunk in _pool_map(point, list(cfg.epsilon_list), cfg.threads) for row in chunk]
    return RunReport(RANK_SCAN_HEADER, rows)


def product_state(spec: str, d: int, n: int = 2) -> np.ndarray:
    """Computational-basis product vector; ``spec`` is one digit per site or a single digit for all."""
    spec = spec.strip()
    digits = spec * d if len(spec) == 1 else spec
    if len(digits) != d or not all(c.isdigit() and int(c) < n for c in digits):
        raise ConfigError(f"initial_state {spec!r} is not a product state on {d} sites with n={n}")
    idx = 0
    for c in digits:
        idx = idx * n + int(c)
    v = np.zeros(n ** d)
    v[idx] = 1.0
    return v


EVOLVE_HEADER = ("t", "epsilon", "rank")


def run_evolution_ranks(spec: Mapping[str, object], d: int, psi0: np.ndarray,
                        times: Sequence[float], epsilon: float,
                        cap: int = DEFAULT_CAP, threads: int = 1) -> RunReport:
    """Middle-cut ``epsilon``-rank of ``P(t) = exp(iHt) P(0) exp(-iHt)``."""
    h = build_from_spec(spec, d, cap)
    es = diagonalize(assemble(h))
    psi0 = np.asarray(psi0, dtype=complex)
    coeff = es.eigenvectors.conj().T @ psi0

    def point(t):
        # exp(iHt) psi0, so P(t) = |psi(t)><psi(t)|
        psi_t = es.eigenvectors @ (np.exp(1j * t * es.eigenvalues) * coeff)
        p_t = np.outer(psi_t, psi_t.conj())
        return (t, epsilon, operator_cut_rank(p_t, d // 2, epsilon, h.n).rank)

    return RunReport(EVOLVE_HEADER, _pool_map(point, list(times), threads))


# --- plotting script ------------------------------------------------------------

_GNUPLOT = {
    "gap-scan": ("gap_scan.csv", "set xlabel 'd'; set ylabel 'gap'",
                 "plot 'gap_scan.csv' using 1:2 with linespoints title 'gap'"),
    "blr-sweep": ("blr_sweep.csv", "set logscale y; set xlabel 'l'; set ylabel '||P0 - BLR||'",
                  "plot 'blr_sweep.csv' using 3:6 with points title 'error'"),
    "lr-cone": ("lr_cone.csv", "set logscale y; set xlabel 'time'; set ylabel '||[A(t),B]||'",
                "plot for [k=1:20] 'lr_cone.csv' using ($2==k ? $1 : 1/0):3 "
                "with linespoints title sprintf('distance %d', k)"),
    "ranks": ("ranks.csv", "set xlabel 'd'; set ylabel 'rank'",
              "plot 'ranks.csv' using 1:4 with linespoints title 'middle-cut rank'"),
    "evolve-ranks": ("evolve_ranks.csv", "set xlabel 't'; set ylabel 'rank'",
                     "plot 'evolve_ranks.csv' using 1:3 with linespoints title 'rank'"),
    "fit": ("fit.csv", "", "print 'see fit.csv'"),
}


def gnuplot_script(command: str) -> str:
    csv_name, setup, plot = _GNUPLOT[command]
    lines = [f"# plot {csv_name}", "set datafile separator ','", "set key autotitle columnhead"]
    if setup:
        lines.append(setup)
    lines.append(f"set terminal pngcairo; set output '{csv_name[:-4]}.png'")
    lines.append(plot)
    return "\n".join(lines) + "\n"
