import csv
import json
import math
import subprocess

import pytest

from qomg.cli import ConfigError, eval_constant, main, parse_series, parse_values, read_config
from qomg.experiments import SCENARIO_NAMES


def write(tmp_path, text, name="cfg.ini"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in SCENARIO_NAMES:
        assert name in out


def test_console_script():
    proc = subprocess.run(["qomg", "list"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "fig10" in proc.stdout


def test_run_writes_csv_and_metadata(tmp_path):
    assert main(["run", "fig4", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "fig4.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["N", "qfi_u0.1", "qfi_u0.5", "qfi_u0.9", "SQL", "HL"]
    assert len(rows) == 11
    meta = json.loads((tmp_path / "fig4.json").read_text())
    assert meta["scenario"] == "fig4" and meta["errors"] == []


def test_run_with_config_file(tmp_path):
    cfg = write(tmp_path, "[params]\ngnl_ratio = 0.2\n\n[scenario]\nvalues = linspace(1, 3, 3)\n")
    assert main(["run", "fig4", "--config", cfg, "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "fig4.json").read_text())
    assert meta["sweep"]["values"] == [1.0, 2.0, 3.0]
    assert meta["params"]["gnl_ratio"] == 0.2


def test_param_override_matches_config(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    cfg = write(tmp_path, "[params]\nomega_rotation = 3000\n")
    assert main(["run", "fig3", "--config", cfg, "--param", "values=100,1000", "--out", str(a)]) == 0
    assert main(["run", "fig3", "--param", "omega_rotation=3000", "--param", "values=100,1000",
                 "--out", str(b)]) == 0
    assert (a / "fig3.csv").read_text() == (b / "fig3.csv").read_text()


@pytest.mark.parametrize("args", [
    ["--param", "omega_cc=1"],
    ["--param", "noequals"],
    ["--jobs", "0"],
    ["--param", "values=linspace(1,2,-3)"],
    ["--param", "ratio=2"],
])
def test_config_errors(tmp_path, capsys, args):
    assert main(["run", "fig4", "--out", str(tmp_path)] + args) == 1
    assert "config error" in capsys.readouterr().err


@pytest.mark.parametrize("text", [
    "[params]\nbogus = 1\n",
    "[extras]\nkappa = 1\n",
    "[scenario]\nstepsize = 0.1\n",
    "[scenario]\nname = fig2\n",
    "not an ini file",
])
def test_config_file_errors(tmp_path, text):
    assert main(["run", "fig4", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 1


def test_partial_and_total_failure_codes(tmp_path):
    base = ["run", "fig3", "--out", str(tmp_path), "--param", "omega_m=0"]
    assert main(base + ["--param", "values=0,1000"]) == 3
    assert main(base + ["--param", "values=0"]) == 2


def test_empty_sweep_succeeds(tmp_path):
    assert main(["run", "fig3", "--out", str(tmp_path), "--param", "values="]) == 0
    assert (tmp_path / "fig3.csv").read_text().count("\n") == 1


def test_validate(tmp_path, capsys):
    good = write(tmp_path, "[scenario]\nname = fig8\nvalues = pi/4, pi/2\n")
    assert main(["validate", "--config", good]) == 0
    assert "all preconditions hold" in capsys.readouterr().out
    bad = write(tmp_path, "[params]\nomega_m = 0\n\n[scenario]\nname = fig3\nvalues = 0\n", "bad.ini")
    assert main(["validate", "--config", bad]) == 2
    assert main(["validate", "--config", write(tmp_path, "[params]\nzz = 1\n", "z.ini")]) == 1


def test_custom_scenario_units(tmp_path):
    cfg = write(tmp_path, "[params]\nunits = dimensionless\ng0_tilde = 10\n\n"
                          "[scenario]\nname = custom\nengine = analytic\nsweep = theta\nvalues = 2*pi\n")
    assert main(["run", "--config", cfg, "custom", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "custom.json").read_text())
    assert meta["params"]["units"] == "dimensionless"
    fixed = write(tmp_path, "[params]\nunits = dimensionless\n", "u.ini")
    assert main(["run", "fig2", "--config", fixed, "--out", str(tmp_path)]) == 1


def test_oracle(capsys):
    assert main(["oracle", "hilbert"]) == 0
    out = capsys.readouterr().out
    assert "[FAIL]" not in out and "checks passed" in out
    assert main(["oracle", "nope"]) == 1


def test_value_parsing():
    assert eval_constant("2*pi") == pytest.approx(2 * math.pi)
    assert eval_constant("pi/4") == pytest.approx(math.pi / 4)
    assert eval_constant("-pi") == pytest.approx(-math.pi)
    assert eval_constant("1e3") == 1000.0
    assert parse_values("geomspace(1, 100, 3)") == pytest.approx((1.0, 10.0, 100.0))
    assert parse_values("") == ()
    with pytest.raises(ConfigError):
        parse_values("1, two")


def test_series_parsing():
    s = parse_series("a: kappa=0.1, gnl_ratio=0.3; b: kappa=0")
    assert [x.label for x in s] == ["a", "b"]
    assert s[0].overrides == (("kappa", 0.1), ("gnl_ratio", 0.3))
    for bad in ("", "nolabel", "a: kappa"):
        with pytest.raises(ConfigError):
            parse_series(bad)


def test_read_config_none():
    assert read_config(None) == ({}, {})
