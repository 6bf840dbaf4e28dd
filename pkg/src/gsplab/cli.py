"""Command-line entry point.

Exit codes: 0 on success, 1 for configuration errors (bad file, unknown key,
dimension cap exceeded), 2 for numerical failures.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .chain_algebra import DimensionCapError
from .harness import ConfigError, ExperimentConfig, write_csv
from .spectral import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2

COMMANDS = ("gap-scan", "blr-sweep", "lr-cone", "ranks", "evolve-ranks", "fit")


def _add_common(p: argparse.ArgumentParser, suppress: bool) -> None:
    # Subparsers repeat the flags with suppressed defaults so that values
    # given before the subcommand are not overwritten.
    def dflt(value):
        return argparse.SUPPRESS if suppress else value

    p.add_argument("--config", type=Path, default=dflt(None), help="flat key=value config file")
    p.add_argument("--out", type=Path, default=dflt(Path("out")), help="output directory")
    p.add_argument("--seed", type=int, default=dflt(None), help="seed for randomly generated models")
    p.add_argument("--cap", type=int, default=dflt(None),
                   help="maximum Hilbert-space dimension n^d (default 4096)")
    p.add_argument("--threads", type=int, default=dflt(1), help="worker threads for sweep points")
    p.add_argument("-v", "--verbose", action="store_true", default=dflt(False))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gsplab", description=__doc__.splitlines()[0])
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "gap-scan": "gap, degeneracy and interaction strength against d",
        "blr-sweep": "factorization error and stage diagnostics over (d, j, l, kappa)",
        "lr-cone": "commutator norms ||[A(t), B]|| and a light-cone fit",
        "ranks": "middle-cut epsilon-rank of the ground projection against d",
        "evolve-ranks": "middle-cut rank of an evolved product-state projection",
        "fit": "exponential decay fit of a CSV column",
    }
    for name in COMMANDS:
        _add_common(sub.add_parser(name, help=helps[name]), suppress=True)
    return parser


def _setup_logging(out: Path, verbose: bool) -> logging.Handler:
    out.mkdir(parents=True, exist_ok=True)
    logger = logging.getLogger("gsplab")
    logger.setLevel(logging.DEBUG if verbose else logging.INFO)
    handler = logging.FileHandler(out / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    logger.addHandler(handler)
    stream = logging.StreamHandler(sys.stderr)
    stream.setLevel(logging.WARNING)
    logger.addHandler(stream)
    return handler


def _dispatch(command: str, cfg: ExperimentConfig, out: Path) -> int:
    reports: list[tuple[str, harness.RunReport]] = []
    if command == "gap-scan":
        reports.append(("gap_scan.csv", harness.run_gap_scan(
            cfg.model_spec, cfg.d_list, cfg.cap, cfg.threads)))
    elif command == "blr-sweep":
        reports.append(("blr_sweep.csv", harness.run_blr_sweep(cfg)))
    elif command == "lr-cone":
        table, fit = harness.run_lr_cone(cfg)
        reports += [("lr_cone.csv", table), ("lr_fit.csv", fit)]
    elif command == "ranks":
        reports.append(("ranks.csv", harness.run_rank_scan(cfg)))
    elif command == "evolve-ranks":
        d = cfg.d_list[0]
        psi0 = harness.product_state(cfg.initial_state, d, int(cfg.model_spec.get("n", 2)))
        reports.append(("evolve_ranks.csv", harness.run_evolution_ranks(
            cfg.model_spec, d, psi0, cfg.times, cfg.epsilon_list[0], cfg.cap, cfg.threads)))
    elif command == "fit":
        reports.append(("fit.csv", harness.run_fit(cfg)))
    failed = 0
    for name, rep in reports:
        write_csv(out / name, rep.header, rep.rows)
        failed += rep.failed
        logging.getLogger("gsplab").info("wrote %s (%d rows, %d skipped, %d failed)",
                                         name, len(rep.rows), rep.skipped, rep.failed)
    (out / "plot.gp").write_text(harness.gnuplot_script(command))
    return EXIT_NUMERICAL if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = None
    try:
        cfg = ExperimentConfig.load(args.config).with_overrides(
            seed=args.seed, cap=args.cap, threads=args.threads, out=args.out)
        handler = _setup_logging(args.out, args.verbose)
        return _dispatch(args.command, cfg, args.out)
    except (ConfigError, DimensionCapError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # Remaining ValueErrors come from invalid parameter combinations.
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        if handler is not None:
            logger = logging.getLogger("gsplab")
            for h in list(logger.handlers):
                logger.removeHandler(h)
                h.close()


if __name__ == "__main__":
    sys.exit(main())
