import csv
import json
import math
import subprocess
import sys

import pytest

from layerfold import __version__, cli
from layerfold.errors import ConfigError, InvariantViolation


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_json(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


# --- parsing ------------------------------------------------------------------------

def test_missing_required_keys_listed(tmp_path):
    with pytest.raises(ConfigError) as exc:
        cli.parse_config("solve-single", write_json(tmp_path, {}), {}, tmp_path / "out")
    msg = str(exc.value)
    assert "B, q, m" in msg


def test_flag_overrides_file(tmp_path):
    cfg = cli.parse_config("solve-single", write_json(tmp_path, {"B": 1, "q": 1, "m": 0.3}),
                           {"q": "2"}, tmp_path)
    assert cfg.parameters["q"] == 2.0
    assert cfg.sources["q"] == "flag" and cfg.sources["B"] == "file"


def test_friction_range_error():
    with pytest.raises(ConfigError, match=r"\(0, 2\]"):
        cli.parse_config("kinkband-maxwell", None, {"mu": "3.5"}, "out")


def test_problems_are_aggregated():
    with pytest.raises(ConfigError) as exc:
        cli.parse_config("solve-single", None, {"B": "-1", "bogus": "1", "n_nodes": "10"}, None)
    probs = exc.value.problems
    assert any("unknown keys" in p and "bogus" in p for p in probs)
    assert any(p.startswith("B=") for p in probs)
    assert any("n_nodes" in p for p in probs)
    assert any("q, m" in p for p in probs)
    assert any("--out" in p for p in probs)


@pytest.mark.parametrize("raw, ok", [("3", True), ("3.0", True), ("2.5", False), ("x", False)])
def test_integer_coercion(raw, ok):
    args = ("packet-optimum", None, {"n_max": raw}, "out")
    if ok:
        assert cli.parse_config(*args).parameters["n_max"] == 3
    else:
        with pytest.raises(ConfigError):
            cli.parse_config(*args)


def test_mode_choices():
    with pytest.raises(ConfigError, match="one of"):
        cli.parse_config("solve-single", None, {"B": "1", "q": "1", "m": "1", "mode": "cubic"}, "out")


def test_cross_checks():
    with pytest.raises(ConfigError, match="q_max"):
        cli.parse_config("sweep-scaling", None, {"q_min": "10", "q_max": "1"}, "out")
    with pytest.raises(ConfigError, match="both be zero"):
        cli.parse_config("packet-optimum", None, {"c_bend": "0", "c_void": "0"}, "out")


def test_config_file_must_be_object(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        cli.parse_config("packet-optimum", path, {}, "out")


def test_flag_forms():
    assert cli._parse_flags(["--a", "1", "--b=2"]) == {"a": "1", "b": "2"}
    with pytest.raises(ConfigError):
        cli._parse_flags(["--a"])
    with pytest.raises(ConfigError):
        cli._parse_flags(["stray"])


# --- running -------------------------------------------------------------------------

def test_config_error_exit_code_and_no_output(tmp_path, capsys):
    out = tmp_path / "out"
    code = cli.main(["solve-single", "--config", str(write_json(tmp_path, {})), "--out", str(out)])
    assert code == cli.EXIT_CONFIG
    assert not out.exists()
    assert "B, q, m" in capsys.readouterr().err


def test_unknown_subcommand_is_config_error(tmp_path):
    assert cli.main(["fly", "--out", str(tmp_path)]) == cli.EXIT_CONFIG


def test_solve_single_linearized(tmp_path):
    out = tmp_path / "out"
    code = cli.main(["solve-single", "--B", "1", "--q", "1", "--m", "1", "--mode", "linearized",
                     "--n_nodes", "2001", "--out", str(out)])
    assert code == 0
    row = read_csv(out / "solution.csv")[0]
    assert float(row["void_length"]) == pytest.approx(2 * 3 ** (1 / 3), rel=0.01)
    assert row["converged"] == "true"
    field = read_csv(out / "field.csv")
    assert len(field) == 2001
    raw = (out / "solution.csv").read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["version"] == __version__
    assert manifest["exit_code"] == 0
    assert set(cli.SCHEMAS["solve-single"]) <= set(manifest["parameters"])
    assert manifest["wall_time_s"] >= 0


def test_floats_written_with_17_digits(tmp_path):
    cli.main(["packet-optimum", "--out", str(tmp_path)])
    line = (tmp_path / "optimum.csv").read_text().splitlines()[1]
    n_cont = line.split(",")[-1]
    assert float(n_cont) == pytest.approx(13.8726, rel=1e-4)
    assert repr(float(n_cont)) == repr(float(format(float(n_cont), ".17g")))
    assert len(n_cont.replace(".", "").lstrip("0")) == 17


def test_solver_failure_exit_code(tmp_path):
    code = cli.main(["solve-single", "--B", "1", "--q", "1", "--m", "0.3", "--max_iter", "2",
                     "--out", str(tmp_path)])
    assert code == cli.EXIT_SOLVER
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["exit_code"] == 1 and manifest["error"]


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    def broken(p, out):
        raise InvariantViolation("void set has 2 disjoint components")

    monkeypatch.setitem(cli.HANDLERS, "packet-optimum", broken)
    assert cli.main(["packet-optimum", "--out", str(tmp_path)]) == cli.EXIT_INVARIANT


def test_kinkband_outputs(tmp_path):
    assert cli.main(["kinkband-path", "--n_points", "20", "--out", str(tmp_path / "p")]) == 0
    rows = read_csv(tmp_path / "p" / "path.csv")
    assert list(rows[0]) == ["alpha", "beta", "Delta", "P", "energy"]
    assert len(rows) == 20
    assert all(float(r["beta"]) == pytest.approx(float(r["alpha"]) / 2) for r in rows)
    assert cli.main(["kinkband-maxwell", "--out", str(tmp_path / "m")]) == 0
    row = read_csv(tmp_path / "m" / "maxwell.csv")[0]
    assert float(row["Delta_M"]) == pytest.approx(2.0782907411, rel=1e-9)


def test_multilayer_census_output(tmp_path):
    assert cli.main(["multilayer-solve", "--K", "2", "--n_nodes", "201", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "census.csv")
    assert list(rows[0]) == ["interface", "void_length", "void_area", "runs"]
    assert [r["interface"] for r in rows] == ["1", "2"]
    assert float(rows[0]["void_length"]) > 0


def test_sweep_default(tmp_path):
    assert cli.main(["sweep-scaling", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 9
    assert list(rows[0]) == ["B", "q", "m", "void_length", "corner_gap", "energy", "converged"]
    fit = read_csv(tmp_path / "fit.csv")[0]
    assert list(fit) == ["exponent", "stderr", "r2", "n_points"]
    assert float(fit["exponent"]) == pytest.approx(-1 / 3, abs=0.03)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "layerfold.cli", "packet-optimum", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert (tmp_path / "packet.csv").exists()


def test_help_exits_cleanly(capsys):
    assert cli.main(["--help"]) == 0
    assert "subcommand" in capsys.readouterr().out


def test_rerun_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        cli.main(["solve-single", "--B", "2", "--q", "0.5", "--m", "0.2", "--nodes_per_void", "80",
                  "--out", str(tmp_path / d)])
    for name in ("solution.csv", "field.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert not math.isnan(float(read_csv(tmp_path / "a" / "solution.csv")[0]["energy"]))
