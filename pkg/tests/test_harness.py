import logging
import math

import numpy as np
import pytest

from gsplab import harness
from gsplab.cli import COMMANDS, main
from gsplab.harness import (
    BLR_HEADER,
    ConfigError,
    DecayFit,
    ExperimentConfig,
    InsufficientDataError,
    choose_l,
    fit_decay,
    product_state,
    run_blr_sweep,
    run_evolution_ranks,
    run_gap_scan,
    sweep_points,
)


def cfg_from(text):
    from gsplab.hamiltonian import parse_key_values
    return ExperimentConfig.from_mapping(parse_key_values(text))


# --- fits ----------------------------------------------------------------------


def test_fit_decay_round_trip():
    rows = [{"l": x, "error": 3 * math.exp(-2 * x)} for x in (1, 2, 3, 4)]
    fit = fit_decay(rows)
    assert fit.c == pytest.approx(2, abs=1e-9)
    assert fit.C == pytest.approx(3, abs=1e-9)
    assert fit.points == 4 and fit.residual < 1e-9


def test_fit_decay_constant_and_zero_rows():
    assert fit_decay([(x, 0.5) for x in range(4)], 0, 1).c == pytest.approx(0, abs=1e-12)
    rows = [(0, 1.0), (1, 0.0), (2, 0.25), (3, 0.125), (4, 0.0)]
    fit = fit_decay(rows, 0, 1)
    assert fit.excluded == 2 and fit.points == 3


def test_fit_decay_needs_three_points():
    with pytest.raises(InsufficientDataError):
        fit_decay([(0, 1.0), (1, 0.5)], 0, 1)


def test_choose_l_examples():
    assert choose_l(DecayFit(c=1.0, log_C=0.0, residual=0, points=3), 1.0) == 0
    assert choose_l(DecayFit(c=2.0, log_C=math.log(3), residual=0, points=3), 0.01) == 3
    assert choose_l(DecayFit(c=2.0, log_C=math.log(3), residual=0, points=3), 5.0) == 0
    with pytest.raises(ValueError):
        choose_l(DecayFit(c=0.0, log_C=0.0, residual=0, points=3), 0.1)


def test_free_chain_sweep_sits_at_noise_floor():
    cfg = cfg_from("model=free\nfield=1\nd=8\nj=4\nl=0,1\nq=40\n")
    rep = run_blr_sweep(cfg)
    errors = [row[BLR_HEADER.index("error")] for row in rep.rows]
    assert len(errors) == 2 and max(errors) < 1e-6
    rows = [dict(zip(BLR_HEADER, r)) for r in rep.rows]
    with pytest.raises(InsufficientDataError):
        fit_decay(rows, "l", "error", floor=1e-6)


# --- config --------------------------------------------------------------------


def test_config_parsing():
    cfg = cfg_from("""
        # sweep
        model = tfim
        field = 2
        d_list = 6, 8
        j = middle
        l = 0,1
        kappa = 0.5,1
        quadrature = gauss-hermite
        gh_nodes = 32
    """)
    assert cfg.d_list == [6, 8] and cfg.j_list is None
    assert cfg.l_list == [0, 1] and cfg.kappa_list == [0.5, 1.0]
    assert cfg.blr_config().quadrature.gh_nodes == 32
    assert sweep_points(cfg)[0] == (6, 3, 0, 0.5, None)
    assert len(sweep_points(cfg)) == 8


@pytest.mark.parametrize("text", ["colour=blue\n", "d=abc\n", "quadrature=simpson\n",
                                  "reference=thermal\n", "b_window=1\n"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        cfg_from(text)


def test_seed_override_reaches_model():
    cfg = cfg_from("model=random\nseed=3\n").with_overrides(seed=9)
    assert cfg.model_spec["seed"] == "9"


def test_empty_sweep_is_header_only():
    rep = run_blr_sweep(cfg_from("l=\n"))
    assert rep.rows == [] and rep.header == BLR_HEADER


def test_inadmissible_points_are_logged(caplog):
    cfg = cfg_from("field=2\nd=8\nj=4\nl=0,3\n")
    with caplog.at_level(logging.WARNING, logger="gsplab"):
        rep = run_blr_sweep(cfg)
    assert rep.skipped == 1 and len(rep.rows) == 1
    assert "l=3" in caplog.text and "violates" in caplog.text


def test_single_point_error_in_range():
    rep = run_blr_sweep(cfg_from("field=2\nd=8\nj=4\nl=0\nkappa=1\n"))
    (row,) = rep.rows
    err = row[BLR_HEADER.index("error")]
    assert 0 < err <= 2


def test_threads_do_not_change_rows():
    cfg = cfg_from("field=2\nd=6,8\nl=0,1\n")
    a = run_blr_sweep(cfg)
    b = run_blr_sweep(cfg.with_overrides(threads=3))
    assert a.rows == b.rows


# --- scans -----------------------------------------------------------------------


def test_gap_scan_examples():
    free = run_gap_scan({"model": "free", "field": 1.0}, [4, 6, 8])
    assert [r[1] for r in free.rows] == pytest.approx([1.0, 1.0, 1.0])
    classical = run_gap_scan({"model": "tfim", "field": 0.0}, [6])
    assert classical.rows[0][2] == 2
    tfim = run_gap_scan({"model": "tfim", "field": 2.0}, [6, 8, 10])
    assert min(r[1] for r in tfim.rows) > 1.0
    assert all(r[3] == pytest.approx(4.0) for r in tfim.rows)


def test_product_state():
    v = product_state("01", 2)
    assert v[1] == 1 and v.sum() == 1
    assert product_state("1", 3)[7] == 1
    with pytest.raises(ConfigError):
        product_state("012", 3)
    with pytest.raises(ConfigError):
        product_state("01", 3)


def test_evolution_ranks_examples():
    psi = product_state("0", 6)
    tfim = run_evolution_ranks({"model": "tfim", "field": 2.0}, 6, psi, [0.0, 0.5], 1e-3)
    assert tfim.rows[0][2] == 1 and tfim.rows[1][2] > 1
    free = run_evolution_ranks({"model": "free", "field": 1.0}, 6,
                               np.ones(64) / 8, [0.0, 0.7, 2.0], 1e-10)
    assert [r[2] for r in free.rows] == [1, 1, 1]


def test_gnuplot_scripts():
    for cmd in COMMANDS:
        text = harness.gnuplot_script(cmd)
        assert "set datafile separator ','" in text


# --- CLI -----------------------------------------------------------------------


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("nonsense=1\n")
    assert main(["--config", str(bad), "--out", str(tmp_path / "o"), "gap-scan"]) == 1
    assert main(["--config", str(tmp_path / "missing.cfg"), "gap-scan"]) == 1
    big = tmp_path / "big.cfg"
    big.write_text("d=13\n")
    assert main(["--config", str(big), "--out", str(tmp_path / "o"), "gap-scan"]) == 1
    fit = tmp_path / "fit.cfg"
    fit.write_text("x_column=l\n")
    assert main(["--config", str(fit), "--out", str(tmp_path / "o"), "fit"]) == 1


def test_cli_flags_before_or_after_subcommand(tmp_path):
    cfg = tmp_path / "g.cfg"
    cfg.write_text("model=free\nd=4,5\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "a"), "gap-scan"]) == 0
    assert main(["gap-scan", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "gap_scan.csv").read_bytes() == (tmp_path / "b" / "gap_scan.csv").read_bytes()
    assert (tmp_path / "a" / "plot.gp").exists()
    assert (tmp_path / "a" / "run.log").exists()


def test_cli_fit_subcommand(tmp_path):
    data = tmp_path / "t.csv"
    data.write_text("l,error\n" + "".join(f"{x},{3 * math.exp(-2 * x)!r}\n" for x in (1, 2, 3, 4)))
    cfg = tmp_path / "f.cfg"
    cfg.write_text(f"input={data}\ntarget_epsilon=0.01\n")
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o"), "fit"]) == 0
    header, row = (tmp_path / "o" / "fit.csv").read_text().splitlines()
    vals = dict(zip(header.split(","), row.split(",")))
    assert float(vals["c"]) == pytest.approx(2.0) and vals["l_choice"] == "3"
