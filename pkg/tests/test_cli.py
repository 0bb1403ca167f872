import json
import subprocess
import sys
from pathlib import Path

import pytest

from cargohitch.cli import main
from cargohitch.model import load_instance

CROSSING = Path(__file__).parent / "data" / "crossing.json"


def test_generate_writes_a_loadable_instance(tmp_path, capsys):
    out = tmp_path / "a.json"
    assert main(["generate", "--preset", "tiny-oracle", "--seed", "3", "--out", str(out)]) == 0
    load_instance(out)
    again = tmp_path / "b.json"
    main(["generate", "--preset", "tiny-oracle", "--seed", "3", "--out", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_generate_from_config_file(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"preset": "tiny-oracle", "n_freight": 2}))
    assert main(["generate", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 0
    inst = load_instance(tmp_path / "tiny-oracle-0.json")
    assert len(inst.freight_requests) == 2


def test_unknown_preset_exits_2(tmp_path, capsys):
    assert main(["generate", "--preset", "huge", "--out-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "tiny-oracle" in err and "sweep" in err


def test_missing_instance_exits_2(tmp_path):
    assert main(["solve", "--instance", str(tmp_path / "none.json"), "--out-dir", str(tmp_path)]) == 2


@pytest.mark.parametrize("algo", ["mip", "pnb", "bnp"])
def test_solve_example(algo, tmp_path, capsys):
    assert main(["solve", "--instance", str(CROSSING), "--algo", algo, "--out-dir", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / f"crossing-{algo}.json").read_text())
    assert doc["objective"] == pytest.approx(13.0)
    log = (tmp_path / f"crossing-{algo}-log.csv").read_text().splitlines()
    assert log[0] == "step,phase,lb,ub,rmp,columns,nodes"
    assert "objective=13.000000" in capsys.readouterr().out


def test_outputs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        main(["solve", "--instance", str(CROSSING), "--algo", "bnp", "--out-dir", str(d)])
        main(["report", "--instance", str(CROSSING), "--out-dir", str(d)])
    for f in sorted(a.iterdir()):
        assert f.read_bytes() == (b / f.name).read_bytes()


def test_timings_column(tmp_path):
    main(["solve", "--instance", str(CROSSING), "--algo", "pnb", "--timings", "--out-dir", str(tmp_path)])
    assert (tmp_path / "crossing-pnb-log.csv").read_text().startswith("step,phase,lb,ub,rmp,columns,nodes,time")


def test_report_from_saved_solution(tmp_path):
    main(["solve", "--instance", str(CROSSING), "--algo", "mip", "--out-dir", str(tmp_path)])
    sol = tmp_path / "crossing-mip.json"
    rep = tmp_path / "rep"
    assert main(["report", "--instance", str(CROSSING), "--solution", str(sol), "--out-dir", str(rep)]) == 0
    rows = (rep / "crossing-vehicle.csv").read_text().splitlines()
    l2 = [r.split(",") for r in rows[1:] if r.startswith("L2,")]
    assert len(l2) == 3
    assert [r[7] for r in l2] == ["1.000000"] * 3
    for name in ("temporal", "spatial"):
        assert (rep / f"crossing-{name}.csv").exists()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("CARGOHITCH_OUT", str(tmp_path))
    main(["solve", "--instance", str(CROSSING), "--algo", "pnb"])
    assert (tmp_path / "crossing-pnb.json").exists()


def test_sweep_with_grid_file(tmp_path):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"truck_externality": [0.01, 1.6], "transit_cost": [0.1]}))
    assert main(["sweep", "--instance", str(CROSSING), "--grid-file", str(grid), "--out-dir", str(tmp_path)]) == 0
    lines = (tmp_path / "crossing-sweep.csv").read_text().splitlines()
    assert lines[0] == "transit_cost,0.01,1.6"


def test_module_entry_point(tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "cargohitch", "solve", "--instance", str(CROSSING), "--algo", "pnb", "--out-dir", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert r.returncode == 0, r.stderr
