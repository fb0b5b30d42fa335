import json

import pytest

from vectorthrust.cli import main
from vectorthrust.config import ScenarioConfig, config_from_dict, load_config


def _write(path, data):
    path.write_text(json.dumps(data))
    return str(path)


SHORT_FLIGHT = {
    "mode": "flight",
    "flight": {"segments": [{"form": 1, "hold": 0.5}, {"form": 3, "hold": 0.5}]},
    "sim": {"dt": 0.025, "disturbance": 1.0},
}


def test_bundled_fly(tmp_path, capsys):
    assert main(["fly", "--out", str(tmp_path)]) == 0
    summary = json.loads((tmp_path / "fly_summary.json").read_text())
    assert summary["rmse_position"] < 0.05 and "rmse_orientation" in summary
    assert (tmp_path / "fly.csv").exists()


def test_fly_no_interference(tmp_path):
    cfg = _write(tmp_path / "c.json", SHORT_FLIGHT)
    assert main(["fly", "--config", cfg, "--out", str(tmp_path / "a"), "--no-interference"]) == 0
    s = json.loads((tmp_path / "a" / "fly_summary.json").read_text())
    assert s["violations"] == 0


def test_fly_seed_override(tmp_path):
    cfg = _write(tmp_path / "c.json", SHORT_FLIGHT)
    main(["fly", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "1"])
    main(["fly", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "fly.csv").read_text() != (tmp_path / "b" / "fly.csv").read_text()


def test_malformed_config_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"sim": {"dt": -1}})
    assert main(["fly", "--config", cfg]) == 2
    assert "sim.dt" in capsys.readouterr().err


def test_unknown_field_exit_2(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"gains": {"pos_q": 1}})
    assert main(["fly", "--config", cfg]) == 2
    assert "gains.pos_q" in capsys.readouterr().err


def test_bad_json_reports_line(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text('{\n  "seed": 1,\n  oops\n}')
    assert main(["crawl", "--config", str(path)]) == 2
    assert "line 3" in capsys.readouterr().err


@pytest.mark.parametrize("command,mode", [("fly", "flight"), ("crawl", "crawl")])
def test_dump_defaults_roundtrip(command, mode, tmp_path, capsys):
    assert main([command, "--dump-defaults"]) == 0
    text = capsys.readouterr().out
    path = tmp_path / "d.json"
    path.write_text(text)
    assert load_config(path) == ScenarioConfig(mode=mode)


def test_ranges_form1(capsys):
    assert main(["ranges", "--form", "1"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert table["restricted"] == []


def test_ranges_form3(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["ranges", "--form", "3", "--out", str(out)]) == 0
    table = json.loads(out.read_text())
    assert len(table["restricted"]) >= 4
    for r in table["ranges"]:
        if r["restricted"]:
            assert r["lower"] == pytest.approx(-0.4, abs=0.02)


def test_ranges_empty_exit_1(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {"interference": {"clearance_radius": 1.0}})
    assert main(["ranges", "--config", cfg]) == 1
    assert "no valid vectoring range" in capsys.readouterr().err


def test_ranges_bad_q(capsys):
    assert main(["ranges", "--q", "0,1"]) == 2


def test_crawl_one_cycle(tmp_path):
    assert main(["crawl", "--cycles", "1", "--out", str(tmp_path)]) == 0
    s = json.loads((tmp_path / "crawl_summary.json").read_text())
    assert s["cycles_completed"] == 1
    assert s["final_displacement"][0] == pytest.approx(0.2, abs=0.01)
    assert s["thrust_ratio"] < 0.5


def test_crawl_bad_cycles(capsys):
    assert main(["crawl", "--cycles", "0"]) == 2


def test_sweep(tmp_path):
    cfg = _write(tmp_path / "c.json", SHORT_FLIGHT)
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path), "--seeds", "0,1", "--jobs", "2"]) == 0
    rows = json.loads((tmp_path / "sweep.json").read_text())
    assert [r["seed"] for r in rows] == [0, 1]
    assert all(r["exit"] == 0 and "rmse_position" in r for r in rows)


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        main(["teleport"])
    assert exc.value.code == 2


def test_config_from_dict_keeps_robot_file(tmp_path):
    from vectorthrust.model import RobotModel, save_robot

    save_robot(RobotModel(torso_mass=3.0), tmp_path / "robot.json")
    cfg = config_from_dict({"robot_file": "robot.json"}, base_dir=tmp_path)
    assert cfg.robot.torso_mass == 3.0
    assert "robot" not in cfg.to_dict()
    with pytest.raises(Exception, match="robot_file"):
        config_from_dict({"robot_file": "missing.json"}, base_dir=tmp_path)
