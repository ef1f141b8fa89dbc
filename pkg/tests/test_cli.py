import json
import subprocess
import sys

import pytest

from radshock.cli import main


def test_check_passes_for_hamer(tmp_path):
    assert main(["check", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "structure.json").read_text())
    assert rep["passed"] is True


def test_check_fails_for_uncoupled_model(tmp_path, capsys):
    assert main(["check", "--model", "hamer_uncoupled", "--out", str(tmp_path)]) == 1
    rep = json.loads((tmp_path / "structure.json").read_text())
    assert rep["failed"] == ["S2"]
    assert "S2" in capsys.readouterr().out


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text('model = "hamer"\nbogus = 1\n')
    assert main(["check", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "bogus" in capsys.readouterr().err


def test_bad_epsilon_is_config_error(tmp_path):
    assert main(["check", "--epsilon", "-1", "--out", str(tmp_path)]) == 2


def test_flags_override_file(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("epsilon = 0.3\nseed = 4\n")
    main(["check", "--config", str(cfg), "--epsilon", "0.2", "--out", str(tmp_path)])
    echo = json.loads((tmp_path / "config_echo.json").read_text())
    assert echo["epsilon"] == 0.2 and echo["seed"] == 4 and echo["command"] == "check"


def test_output_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("RADSHOCK_OUT", str(tmp_path))
    assert main(["check"]) == 0
    assert (tmp_path / "check" / "structure.json").exists()
    assert (tmp_path / "check" / "config_echo.json").exists()


def test_identical_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["check", "--out", str(a)])
    main(["check", "--out", str(b)])
    assert (a / "structure.json").read_bytes() == (b / "structure.json").read_bytes()


def test_profile_outputs(tmp_path):
    assert main(["profile", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "profile_meta.json").read_text())
    assert "config_hash" in meta
    assert (tmp_path / "profile.csv").read_text().count("\n") > 100


def test_resolvent_outputs(tmp_path):
    assert main(["resolvent", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "resolvent_meta.json").read_text())
    assert meta["jump_residual"] < 1e-8
    assert meta["pole_correlation"] > 0.999
    head = (tmp_path / "resolvent.csv").read_text().splitlines()[0]
    assert head.startswith("x,re_G11,im_G11")


@pytest.mark.slow
def test_evans_outputs(tmp_path):
    code = main(["evans", "--out", str(tmp_path)])
    assert code == 0
    head = (tmp_path / "evans_contour.csv").read_text().splitlines()[0]
    assert head == "re_lambda,im_lambda,re_D,im_D,log_scale,side"
    rep = json.loads((tmp_path / "winding_report.json").read_text())
    assert rep["certified"] is True


def test_module_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "radshock", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "evolve" in r.stdout


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
