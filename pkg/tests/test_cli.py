import numpy as np
import pytest

from pfctrl.cli import BUILTINS, list_builtins, load_config, main, parse_config, parse_sweep
from pfctrl.errors import ConfigError
from pfctrl.lti_model import PlantModel, write_plant_file


def test_list_names_builtins(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    for name in ("paper-spacecraft", "double-integrator-sine", "two-block-coupled"):
        assert name in out
    assert list_builtins().count("\n") == len(BUILTINS) - 1


def test_builtin_run_writes_artifacts(tmp_path):
    out = tmp_path / "run"
    assert main(["run", "double-integrator-sine", "--out", str(out), "--horizon", "20"]) == 0
    for name in ("trajectory.csv", "manifest.txt", "summary.txt", "columns.txt"):
        assert (out / name).exists()
    summary = (out / "summary.txt").read_text()
    assert "sigma = 0.5" in summary and "fitted_rate" in summary
    manifest = (out / "manifest.txt").read_text()
    assert "horizon = 20.0" in manifest and "gains.g1 = sinusoid" in manifest
    header = (out / "trajectory.csv").read_text().splitlines()[0].split(",")
    assert header[:4] == ["t", "x1", "x2", "R1"] and "u1" in header


def test_runs_are_bit_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["run", "double-integrator-sine", "--out", str(tmp_path / d),
                     "--horizon", "5", "--seed", "3"]) == 0
    assert (tmp_path / "a/trajectory.csv").read_bytes() == \
        (tmp_path / "b/trajectory.csv").read_bytes()


CONFIG = """[scenario]
mode = theorem1
plant = file:plant.txt
horizon = 10
dt = {dt}
[gains]
g1 = sinusoid amplitude=1 omega=1
[initial]
x0 = 1 0
"""


def write_config(tmp_path, dt="0.01", A=((0.0, 1.0), (0.0, 0.0))):
    write_plant_file(PlantModel(np.array(A), np.array([[0.0], [1.0]])), tmp_path / "plant.txt")
    path = tmp_path / "s.ini"
    path.write_text(CONFIG.format(dt=dt))
    return path


def test_config_file_run(tmp_path):
    assert main(["run", str(write_config(tmp_path)), "--out", str(tmp_path / "o")]) == 0


def test_zero_dt_is_line_numbered_config_error(tmp_path, capsys):
    assert main(["run", str(write_config(tmp_path, "0")), "--out", str(tmp_path / "o")]) == 2
    assert "line 5" in capsys.readouterr().err


def test_malformed_line(tmp_path):
    with pytest.raises(ConfigError) as exc:
        parse_config("[scenario]\nmode theorem1\n")
    assert exc.value.line == 2


def test_unknown_mode():
    with pytest.raises(ConfigError):
        parse_config("[scenario]\nmode = magic\nhorizon = 1\n")


def test_missing_config(tmp_path):
    assert main(["run", str(tmp_path / "nope.ini")]) == 2


def test_numeric_failure_exit_code(tmp_path, capsys):
    # uncontrollable plant
    path = write_config(tmp_path, A=((0.0, 0.0), (0.0, 1.0)))
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 3
    assert "NotControllable" in capsys.readouterr().err


def test_assertion_failure_exit_code(tmp_path):
    # the transposed control law is not a valid observer for switching gains
    text = BUILTINS["observer-two-block"][1].replace("design = information", "design = dual")
    path = tmp_path / "obs.ini"
    path.write_text(text)
    code = main(["run", str(path), "--out", str(tmp_path / "o"), "--horizon", "8"])
    assert code in (3, 4)


def test_overrides_and_builtin_lookup():
    cfg = load_config("paper-spacecraft", {"scenario.horizon": 7.0, "spacecraft.J1": 4})
    assert cfg.horizon == 7.0 and cfg.get("spacecraft", "j1") == "4"


def test_sweep_spec():
    param, vals = parse_sweep("scenario.slack:0.5:1.5:3")
    assert param == "scenario.slack"
    np.testing.assert_allclose(vals, [0.5, 1.0, 1.5])
    with pytest.raises(ConfigError):
        parse_sweep("slack:1")


def test_sweep_runs(tmp_path, capsys):
    code = main(["run", "double-integrator-sine", "--horizon", "5", "--out", str(tmp_path),
                 "--sweep", "scenario.slack:0.5:1.0:2", "--workers", "2"])
    assert code == 0
    assert (tmp_path / "sweep_001" / "trajectory.csv").exists()
