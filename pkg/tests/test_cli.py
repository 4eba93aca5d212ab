"""CLI surface: grid parsing, JSON/CSV contracts, exit codes."""

import csv
import io
import json
import math

import numpy as np
import pytest

from pnrcap.analytic import heterodyne_capacity
from pnrcap.cli import UsageError, main, parse_grid
from pnrcap.negbin import negbin_mutual_info


def _run(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def _parse_csv(text):
    lines = text.splitlines()
    assert lines[0].startswith("# schema: pnrcap-")
    assert lines[1].startswith("# config: ")
    schema = lines[0].split("# schema: ")[1]
    config = json.loads(lines[1].split("# config: ")[1])
    rows = list(csv.reader(io.StringIO("\n".join(lines[2:]))))
    return schema, config, rows[0], rows[1:]


def test_parse_grid_forms():
    assert parse_grid("5") == [5.0]
    assert parse_grid("1, 2,3") == [1.0, 2.0, 3.0]
    assert parse_grid("0:1:5") == pytest.approx(np.linspace(0.0, 1.0, 5).tolist())
    assert parse_grid("2:9:1") == [2.0]
    assert parse_grid("0.1:10:3:log10") == pytest.approx([0.1, 1.0, 10.0])
    assert len(parse_grid("0.1:10:log10")) == 10  # count defaults to 10


def test_parse_grid_rejects_malformed():
    for bad in ("", "1:2:3:4:5", "0:1:0", "1:2:x:log10:y"):
        with pytest.raises(UsageError):
            parse_grid(bad)
    with pytest.raises(UsageError):
        parse_grid("-1:10:4:log10")
    with pytest.raises(ValueError):
        parse_grid("abc")


def test_fock_lossless_json(capsys):
    code, out, _ = _run(
        capsys, ["capacity", "fock", "--eta", "1", "--nbar", "1", "--tol", "1e-7"]
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["converged"] is True
    assert payload["rate_bits"] == pytest.approx(2.0, abs=1e-5)
    assert payload["config"]["command"] == "capacity fock"
    assert payload["config"]["eta"] == 1.0
    assert payload["prior"]["p0"] == pytest.approx(0.5, abs=1e-3)
    assert "probs" not in payload["prior"]  # only with --full-prior


def test_invalid_physics_exits_2(capsys):
    code, _, err = _run(capsys, ["capacity", "fock", "--eta", "1", "--nbar", "-3"])
    assert code == 2
    assert "error:" in err

    code, _, err = _run(capsys, ["capacity", "fock", "--eta", "1.5", "--nbar", "1"])
    assert code == 2


def test_poisson_zero_mean(capsys):
    code, out, _ = _run(capsys, ["capacity", "poisson", "--output-mean", "0"])
    assert code == 0
    payload = json.loads(out)
    assert payload["rate_bits"] == 0.0
    assert payload["converged"] is True


def test_poisson_nonconvergence_exits_3_with_result(capsys):
    code, out, _ = _run(
        capsys,
        ["capacity", "poisson", "--output-mean", "0.5",
         "--tol", "1e-12", "--max-outer", "2"],
    )
    assert code == 3
    payload = json.loads(out)  # result is still printed, flagged
    assert payload["converged"] is False
    assert payload["rate_bits"] > 0.5


def test_negbin_r_passthrough(capsys):
    code, out, _ = _run(
        capsys, ["rate-negbin", "--eta", "0.5", "--nbar", "1", "--r", "0.7"]
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["optimised"] is False
    assert payload["r_star"] == 0.7
    assert payload["rate_bits"] == pytest.approx(
        negbin_mutual_info(0.5, 1.0, 0.7), rel=1e-10
    )

    code, _, _ = _run(capsys, ["rate-negbin", "--eta", "0.5", "--nbar", "1", "--r", "-1"])
    assert code == 2


def test_analytic_json_and_nan_null(capsys):
    code, out, _ = _run(capsys, ["analytic", "--eta", "1", "--nbar", "1"])
    assert code == 0
    payload = json.loads(out)
    assert payload["c_het"] == 1.0
    assert payload["bowen"] is None  # undefined at eta = 1 -> null


def test_json_floats_rounded_to_12_significant_digits(capsys):
    code, out, _ = _run(capsys, ["analytic", "--eta", "0.7", "--nbar", "1.3"])
    assert code == 0
    payload = json.loads(out)
    direct = heterodyne_capacity(0.7, 1.3)
    assert payload["c_het"] == float(f"{direct:.12g}")
    assert payload["c_het"] != direct or f"{direct:.12g}" == repr(direct)


def test_out_respects_env_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("PNRCAP_OUT_DIR", str(tmp_path))
    code, _, _ = _run(
        capsys,
        ["rate-negbin", "--eta", "0.5", "--nbar", "1", "--r", "0.7",
         "--out", "rate.csv"],
    )
    assert code == 0
    schema, config, header, rows = _parse_csv((tmp_path / "rate.csv").read_text())
    assert schema == "pnrcap-negbin-rate-v1"
    assert config["command"] == "rate-negbin"
    assert header == ["eta", "nbar", "rate_bits", "r_star"]
    assert float(rows[0][2]) == pytest.approx(negbin_mutual_info(0.5, 1.0, 0.7), rel=1e-9)

    # absolute paths ignore the environment directory
    target = tmp_path / "abs.csv"
    code, _, _ = _run(
        capsys,
        ["rate-negbin", "--eta", "0.5", "--nbar", "1", "--r", "0.7",
         "--out", str(target)],
    )
    assert code == 0 and target.exists()


def test_unwritable_out_exits_4(capsys, tmp_path):
    code, _, err = _run(
        capsys,
        ["rate-negbin", "--eta", "0.5", "--nbar", "1", "--r", "0.7",
         "--out", str(tmp_path / "missing" / "rate.csv")],
    )
    assert code == 4
    assert "error:" in err


def test_sweep_single_cell_csv(capsys):
    code, out, _ = _run(
        capsys,
        ["sweep", "--etas", "0.6", "--nbars", "0.5",
         "--tol", "1e-5", "--poisson-tol", "1e-4"],
    )
    assert code == 0
    schema, config, header, rows = _parse_csv(out)
    assert schema == "pnrcap-sweep-v1"
    assert config["etas"] == "0.6"
    assert len(rows) == 1
    record = dict(zip(header, rows[0]))
    assert float(record["eta"]) == 0.6
    assert float(record["c_poisson"]) <= float(record["c_fock"]) + 1e-4
    assert record["fock_converged"] == "true"


def test_sweep_bad_grid_exits_2(capsys):
    code, _, err = _run(capsys, ["sweep", "--etas", "0:1:0", "--nbars", "1"])
    assert code == 2
    assert "error:" in err


def test_prior_csv_stdout(capsys):
    code, out, _ = _run(capsys, ["prior", "--eta", "1", "--nbar", "1", "--tol", "1e-6"])
    assert code == 0
    schema, config, header, rows = _parse_csv(out)
    assert schema == "pnrcap-prior-v1"
    assert header == ["k", "prob"]
    probs = [float(row[1]) for row in rows]
    assert math.fsum(probs) == pytest.approx(1.0, abs=1e-9)
    assert int(rows[0][0]) == 0
