"""Command-line interface: determinism, schemas, exit codes, consistency."""

import math

import numpy as np
import pytest

from starsense.cli import main
from starsense.config import ScenarioConfig, load_config, parse_grid
from starsense.errors import ConfigError


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_csv(text):
    lines = [l for l in text.splitlines() if l and not l.startswith("#")]
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    return header, rows


# --- determinism and schema --------------------------------------------------

def test_sweep_loss_byte_identical(capsys):
    args = ("sweep-loss", "--grid", "0:10:5", "--seed", "7")
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_estimate_byte_identical(capsys):
    args = (
        "estimate",
        "--theta", "0.5235987755982988",
        "--repetitions", "5",
        "--pattern-trials", "30",
        "--protocol", "central-station",
        "--measurement", "sigma-x",
        "--loss-db", "0",
    )
    code1, out1, _ = run_cli(capsys, *args)
    code2, out2, _ = run_cli(capsys, *args)
    assert code1 == code2 == 0
    assert out1 == out2


def test_csv_begins_with_metadata_then_header(capsys):
    code, out, _ = run_cli(capsys, "sweep-loss", "--grid", "0:4:2")
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("# starsense sweep-loss")
    assert "schema=sweep-v1" in lines[0]
    assert "seed=" in lines[0]
    assert lines[1].split(",") == [
        "loss_db", "eta", "theta", "protocol", "measurement",
        "P_suc", "p", "F_C", "F_Q_bound", "CCRB", "QCRB", "diverged",
    ]


def test_rows_in_deterministic_grid_order(capsys):
    _, out, _ = run_cli(
        capsys, "sweep-loss", "--grid", "0:10:5", "--protocol", "direct"
    )
    _, rows = parse_csv(out)
    assert [r["loss_db"] for r in rows] == ["0", "5", "10"]


# --- sweep content --------------------------------------------------------------

def test_direct_ccrb_at_zero_loss(capsys):
    _, out, _ = run_cli(capsys, "sweep-loss", "--grid", "0:0:1", "--protocol", "direct")
    _, rows = parse_csv(out)
    assert float(rows[0]["CCRB"]) == pytest.approx(0.0625, abs=1e-12)
    assert float(rows[0]["QCRB"]) == pytest.approx(0.0625, abs=1e-12)


def test_central_station_qcrb_at_zero_loss(capsys):
    _, out, _ = run_cli(
        capsys,
        "sweep-loss", "--grid", "0:0:1",
        "--protocol", "central-station", "--measurement", "sigma-x",
    )
    _, rows = parse_csv(out)
    row = rows[0]
    assert float(row["p"]) == pytest.approx(1.0, abs=1e-10)
    p_suc = float(row["P_suc"])
    assert float(row["QCRB"]) == pytest.approx(1.0 / (16.0 * p_suc), rel=1e-9)


def test_crossover_at_20db(capsys):
    _, out, _ = run_cli(
        capsys, "sweep-loss", "--grid", "20:20:1",
        "--protocol", "both", "--measurement", "displacement",
    )
    _, rows = parse_csv(out)
    ours = next(r for r in rows if r["protocol"] == "central-station")
    direct = next(r for r in rows if r["protocol"] == "direct")
    assert float(ours["CCRB"]) < float(direct["CCRB"])


def test_sweep_phase_divergence_serializes_inf(capsys):
    _, out, _ = run_cli(
        capsys,
        "sweep-phase", "--grid=-0.1:0.1:0.1", "--protocol", "direct",
    )
    _, rows = parse_csv(out)
    zero_row = next(r for r in rows if abs(float(r["theta"])) < 1e-12)
    assert zero_row["CCRB"] == "inf"
    assert zero_row["diverged"] == "true"
    live = [r for r in rows if r["diverged"] == "false"]
    assert live


def test_sweep_phase_symmetric_about_zero(capsys):
    _, out, _ = run_cli(
        capsys,
        "sweep-phase", "--grid=-0.6:0.6:0.15",
        "--protocol", "central-station", "--measurement", "sigma-x",
        "--loss-db", "20",
    )
    _, rows = parse_csv(out)
    by_theta = {round(float(r["theta"]), 9): r for r in rows}
    for t, row in by_theta.items():
        mirror = by_theta[-t]
        if row["CCRB"] == "inf" or mirror["CCRB"] == "inf":
            assert row["CCRB"] == mirror["CCRB"]
            continue
        assert float(row["CCRB"]) == pytest.approx(float(mirror["CCRB"]), rel=1e-9)


def test_cross_protocol_consistency_at_unit_transmittance(capsys):
    """Per valid copy (N' = 1) both protocols share the same sigma-x bound."""
    _, out, _ = run_cli(
        capsys, "sweep-loss", "--grid", "0:0:1", "--measurement", "sigma-x"
    )
    _, rows = parse_csv(out)
    ours = next(r for r in rows if r["protocol"] == "central-station")
    direct = next(r for r in rows if r["protocol"] == "direct")
    ours_per_copy = float(ours["CCRB"]) * float(ours["P_suc"])
    direct_per_copy = float(direct["CCRB"]) * float(direct["P_suc"])
    assert ours_per_copy == pytest.approx(direct_per_copy, rel=1e-9)


def test_success_prob_table(capsys):
    code, out, _ = run_cli(capsys, "success-prob", "--grid", "0:20:10")
    assert code == 0
    header, rows = parse_csv(out)
    assert header[:6] == [
        "loss_db", "eta", "exact_pattern", "exact_pair",
        "closed_form", "ratio_pattern_to_closed",
    ]
    top = rows[0]
    assert float(top["eta"]) == 1.0
    assert float(top["p_exact"]) == pytest.approx(1.0, abs=1e-10)
    assert float(top["closed_form"]) == pytest.approx(0.0128, abs=1e-15)
    assert float(top["p_closed"]) == pytest.approx(0.5, abs=1e-12)
    for row in rows:
        assert float(row["ratio_pattern_to_closed"]) == pytest.approx(1.0, rel=1e-9)
        assert float(row["direct_eta_m"]) == pytest.approx(
            float(row["eta"]) ** 4, rel=1e-12
        )


def test_estimate_summary_lines(capsys):
    code, out, _ = run_cli(
        capsys,
        "estimate",
        "--theta", "0.5235987755982988",
        "--repetitions", "10",
        "--pattern-trials", "30",
        "--protocol", "central-station",
        "--measurement", "sigma-x",
        "--loss-db", "0",
        "--seed", "5",
    )
    assert code == 0
    assert "# summary sample_variance=" in out
    assert "# summary propagated_ccrb=" in out
    header, rows = parse_csv(out)
    assert header[0] == "rep"
    assert len(rows) == 10


# --- table-check ------------------------------------------------------------------

def test_table_check_passes(capsys):
    code, out, _ = run_cli(capsys, "table-check")
    assert code == 0
    assert "RESULT PASS" in out
    assert out.count("[PASS]") == 9
    assert "16 = 16" in out


def test_table_check_negative_control(capsys):
    code, out, _ = run_cli(capsys, "table-check", "--perturb", "0.1")
    assert code == 2
    assert "[FAIL]" in out


# --- configuration ------------------------------------------------------------------

def test_config_file_roundtrip(tmp_path, capsys):
    path = tmp_path / "scenario.ini"
    path.write_text(
        "[scenario]\n"
        "protocol = direct\n"
        "a2 = 0.8\n"
        "loss_km = 100\n"
        "theta = 0.1\n"
        "seed = 3\n"
    )
    cfg = load_config(str(path))
    assert cfg.protocol == "direct"
    assert cfg.loss_db == pytest.approx(20.0)
    assert cfg.theta_scalar == pytest.approx(0.1)
    code, out, _ = run_cli(
        capsys, "sweep-loss", "--config", str(path), "--grid", "0:0:1"
    )
    assert code == 0
    assert "seed=3" in out.splitlines()[0]


def test_cli_flags_override_config(tmp_path, capsys):
    path = tmp_path / "scenario.ini"
    path.write_text("[scenario]\nseed = 3\nprotocol = direct\n")
    code, out, _ = run_cli(
        capsys, "sweep-loss", "--config", str(path), "--grid", "0:0:1", "--seed", "9"
    )
    assert code == 0
    assert "seed=9" in out.splitlines()[0]


def test_unknown_config_key_is_reported(tmp_path, capsys):
    path = tmp_path / "scenario.ini"
    path.write_text("[scenario]\nbogus = 1\n")
    code, _, err = run_cli(capsys, "sweep-loss", "--config", str(path))
    assert code == 1
    assert "scenario.bogus" in err


def test_bad_value_identifies_field(tmp_path, capsys):
    path = tmp_path / "scenario.ini"
    path.write_text("[scenario]\na2 = not-a-number\n")
    code, _, err = run_cli(capsys, "sweep-loss", "--config", str(path))
    assert code == 1
    assert "scenario.a2" in err


def test_invalid_grid_exits_one(capsys):
    code, _, err = run_cli(capsys, "sweep-loss", "--grid", "0:10")
    assert code == 1
    assert "grid" in err


def test_out_file_written(tmp_path, capsys):
    target = tmp_path / "out.csv"
    code, out, _ = run_cli(
        capsys, "sweep-loss", "--grid", "0:0:1", "--out", str(target)
    )
    assert code == 0
    assert out == ""
    content = target.read_text()
    assert content.startswith("# starsense sweep-loss")


def test_grid_spec_values():
    grid = parse_grid("0:40:1")
    values = grid.values()
    assert len(values) == 41
    assert values[0] == 0.0 and values[-1] == 40.0
    with pytest.raises(ConfigError):
        parse_grid("0:40")
    with pytest.raises(ConfigError):
        parse_grid("0:40:-1").values()


def test_scenario_validation_errors():
    with pytest.raises(ConfigError):
        ScenarioConfig(protocol="bogus").validate()
    with pytest.raises(ConfigError):
        ScenarioConfig(a2=1.5).validate()
    with pytest.raises(ConfigError):
        ScenarioConfig(per_pattern=True, theta=(0.1, 0.1, 0.1, 0.2)).validate()
    with pytest.raises(ConfigError):
        ScenarioConfig(per_pattern=True, weights=(0.5, 0.5, 0.5, 0.5)).validate()
