import json

import numpy as np
import pytest

from quanputer import cli, qreg
from quanputer.config import load, parse_text, validate
from quanputer.errors import ConfigError
from quanputer.scenarios import REGISTRY

QUANTUM = """\
[grid]
bits = 7
lower = -8
upper = 8

[potential]
kind = free

[state]
x0 = -1
p0 = 1

[evolution]
t_total = 1.0
steps = 10
"""


# -- config -------------------------------------------------------------------------


def test_load_types_and_defaults():
    cfg, raw = load("quantum", QUANTUM)
    assert cfg["grid"]["bits"] == [7]
    assert cfg["evolution"]["steps"] == 10
    assert cfg["evolution"]["mass"] == 1.0
    assert cfg["oracle"]["enabled"] is True
    assert raw["state"]["x0"] == "-1"


def test_overrides_win():
    cfg, _ = load("quantum", QUANTUM, ["evolution.steps=20", "oracle.enabled=no"])
    assert cfg["evolution"]["steps"] == 20
    assert cfg["oracle"]["enabled"] is False


def test_missing_required_key_is_named():
    with pytest.raises(ConfigError, match="evolution.steps"):
        load("quantum", QUANTUM.replace("steps = 10\n", ""))


def test_unknown_key_reports_line():
    text = QUANTUM + "bogus = 1\n"
    with pytest.raises(ConfigError, match=r"evolution\.bogus \(line 16\)"):
        load("quantum", text)


def test_unknown_section_and_bad_value():
    with pytest.raises(ConfigError, match="unknown section"):
        load("quantum", QUANTUM + "[extra]\nx = 1\n")
    with pytest.raises(ConfigError, match="grid.bits"):
        load("quantum", QUANTUM.replace("bits = 7", "bits = seven"))
    with pytest.raises(ConfigError):
        load("quantum", QUANTUM, ["nodot=3"])


def test_render_round_trip():
    for scen in REGISTRY.values():
        assert parse_text(scen.config_text()) == scen.raw
        validate(scen.kind, scen.raw)


# -- command line ---------------------------------------------------------------------


def test_list_is_alphabetical(capsys):
    assert cli.main(["list"]) == 0
    names = [ln.split(" ")[0] for ln in capsys.readouterr().out.splitlines()]
    assert names == sorted(REGISTRY)


def test_missing_steps_exit_2(tmp_path, capsys):
    cfg = tmp_path / "q.ini"
    cfg.write_text(QUANTUM.replace("steps = 10\n", ""))
    out = tmp_path / "out"
    assert cli.main(["quantum", "--config", str(cfg), "--out", str(out)]) == 2
    assert "evolution.steps" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_scenario_and_missing_file(tmp_path):
    assert cli.main(["run", "no-such-thing"]) == 2
    assert cli.main(["quantum", "--config", str(tmp_path / "absent.ini")]) == 2


def test_free_particle_norm_and_outputs(tmp_path, capsys):
    out = tmp_path / "fp"
    assert cli.main(["run", "free-particle", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert abs(summary["final_norm"] - 1) <= 1e-10
    assert summary["l2_error_vs_oracle"] <= 1e-10
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 0 and "numpy" in manifest["versions"]
    assert sorted(manifest["outputs"] + ["manifest.json"]) == sorted(p.name for p in out.iterdir())
    final = qreg.load_binary((out / "final.qreg").read_bytes())
    assert final.norm() == pytest.approx(1.0, abs=1e-10)
    header = (out / "evolution.csv").read_text().splitlines()[0]
    assert header == "step,time,norm,energy,x_mean,p_mean"


def test_verify_bch_exit_0(tmp_path, capsys):
    assert cli.main(["verify", "bch", "--out", str(tmp_path / "b"), "--eps-points", "6"]) == 0
    text = capsys.readouterr().out
    assert "group_0: PASS" in text and "commuting: PASS" in text
    lines = (tmp_path / "b" / "group_0.csv").read_text().splitlines()
    assert len([ln for ln in lines if not ln.startswith("#")]) == 7


def test_eps_points_only_for_bch():
    assert cli.main(["verify", "kernel", "--eps-points", "4"]) == 2


def test_failed_order_check_exit_4(tmp_path):
    argv = ["run", "commutator-order", "--out", str(tmp_path / "c"),
            "--set", "sweep.single_expected=2"]
    assert cli.main(argv) == 4
    assert (tmp_path / "c" / "single_step.csv").exists()


def test_numeric_failure_exit_3(tmp_path, capsys):
    argv = ["liouville", "--out", str(tmp_path / "l"), "--set", "flow.kind=constant",
            "--set", "flow.c=40,0", "--set", "evolution.steps=4"]
    assert cli.main(argv) == 3
    assert "OutsideSafetyBox" in capsys.readouterr().err
    assert not (tmp_path / "l").exists()


def test_config_file_run(tmp_path):
    cfg = tmp_path / "q.ini"
    cfg.write_text(QUANTUM)
    assert cli.main(["quantum", "--config", str(cfg), "--out", str(tmp_path / "q")]) == 0


@pytest.mark.parametrize("name", ["catmap-costate", "rotation-costate", "free-particle",
                                  "constant-transport", "bch-random"])
def test_same_seed_byte_identical(tmp_path, name):
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", name, "--out", str(a), "--seed", "7"]) == 0
    assert cli.main(["run", name, "--out", str(b), "--seed", "7"]) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    assert csvs
    for fname in csvs:
        assert (a / fname).read_bytes() == (b / fname).read_bytes()
        assert b"\r\n" not in (a / fname).read_bytes()


def test_seed_changes_random_runs(tmp_path):
    cli.main(["run", "rotation-costate", "--out", str(tmp_path / "a"), "--seed", "1"])
    cli.main(["run", "rotation-costate", "--out", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a" / "trajectory.csv").read_bytes() != \
        (tmp_path / "b" / "trajectory.csv").read_bytes()


def test_potential_table_file(tmp_path):
    x = np.linspace(-8, 8, 33)
    table = tmp_path / "v.csv"
    table.write_text("x,v\n" + "".join(f"{a},{0.5 * a * a}\n" for a in x))
    cfg = tmp_path / "q.ini"
    cfg.write_text(QUANTUM.replace("kind = free", f"kind = table\nfile = {table}"))
    assert cli.main(["quantum", "--config", str(cfg), "--out", str(tmp_path / "t")]) == 0
