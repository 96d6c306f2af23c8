import csv
import json

import pytest

from trade.cli import main
from trade.evaluation import SUMMARY_FIELDS, FRAME_FIELDS, config_from_dict, plan_runs, run_eval
from trade.errors import ConfigError

TINY = {"desert": {"n_frames": 3}, "city": {"n_frames": 3}, "mountain": {"n_frames": 3}}


def write_cfg(tmp_path, **kw):
    cfg = {"mode": "depth", "ablations": ["full", "no_tf", "no_mask", "none"], "seeds": 5,
           "scene_overrides": TINY, **kw}
    p = tmp_path / "run.json"
    p.write_text(json.dumps(cfg, indent=2))
    return p


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture(scope="module")
def full_grid(tmp_path_factory):
    d = tmp_path_factory.mktemp("grid")
    cfg = write_cfg(d)
    assert main(["eval", "--config", str(cfg), "--out", str(d / "out")]) == 0
    return d


def test_grid_rows(full_grid):
    rows = read_rows(full_grid / "out" / "summary.csv")
    assert len(rows) == 60
    assert list(rows[0]) == SUMMARY_FIELDS
    cells = {(r["scene"], r["ablation"]) for r in rows}
    assert len(cells) == 12
    frames = sorted((full_grid / "out").glob("frames_*.csv"))
    assert len(frames) == 60
    assert list(read_rows(frames[0])[0]) == FRAME_FIELDS


def test_byte_identical_rerun(full_grid, tmp_path):
    cfg = full_grid / "run.json"
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "again"), "--threads", "3"]) == 0
    for f in (full_grid / "out").glob("*.csv"):
        assert (tmp_path / "again" / f.name).read_bytes() == f.read_bytes(), f.name


def test_concurrent_mode_identical(tmp_path):
    base = write_cfg(tmp_path, ablations=["full"], seeds=1, scenes=["desert"])
    conc = tmp_path / "conc.json"
    conc.write_text(json.dumps({**json.loads(base.read_text()), "concurrent": True, "backend_latency": 0}))
    assert main(["eval", "--config", str(base), "--out", str(tmp_path / "a")]) == 0
    assert main(["eval", "--config", str(conc), "--out", str(tmp_path / "b")]) == 0
    for f in (tmp_path / "a").glob("*.csv"):
        assert (tmp_path / "b" / f.name).read_bytes() == f.read_bytes()


def test_flags_select_scene_and_switches(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "o"
    assert main(["eval", "--config", str(cfg), "--scene", "city", "--no-mask", "--seeds", "2", "--out", str(out)]) == 0
    rows = read_rows(out / "summary.csv")
    assert len(rows) == 2
    assert {r["scene"] for r in rows} == {"city"}
    assert rows[0]["ablation"] == "guided1_lift1_mask0_temporal1"
    assert "2 runs written" in capsys.readouterr().out


def test_syntax_error_reports_position(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "mode": "depth",\n  "seeds": ,\n}')
    assert main(["eval", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert f"{p}:3:12" in err


@pytest.mark.parametrize("cfg, needle", [
    ({"mode": "depth", "sedes": 3}, "sedes"),
    ({"mode": "teleport"}, "teleport"),
    ({"scenes": ["moon"]}, "moon"),
    ({"ablations": ["half"]}, "half"),
    ({"pipeline": {"warp": 1}}, "warp"),
    ({"seeds": 0}, "seeds"),
])
def test_config_errors_exit_2(tmp_path, capsys, cfg, needle):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["eval", "--config", str(p), "--out", str(tmp_path / "x")]) == 2
    assert needle in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["eval", "--config", str(tmp_path / "nope.json")]) == 1


def test_bad_seeds_flag(tmp_path):
    assert main(["eval", "--config", str(write_cfg(tmp_path)), "--seeds", "0"]) == 2


def test_plan_singleimage_expands_scale_methods():
    cfg = config_from_dict({"mode": "singleimage", "scenes": ["desert"], "seeds": 2})
    runs = plan_runs(cfg)
    assert sorted(name for _, _, name in runs) == ["direct_lsq", "direct_lsq", "direct_ransac", "direct_ransac"]
    assert all(pc.gt_bbox for _, pc, _ in runs)


def test_unknown_scene_override_key():
    with pytest.raises(ConfigError):
        run_eval({"scenes": ["desert"], "seeds": 1, "scene_overrides": {"desert": {"altitud": 3}}})


def test_debug_grids(tmp_path):
    run_eval({"scenes": ["desert"], "seeds": 1, "scene_overrides": {"desert": {"n_frames": 2}}, "debug_grids": True},
             out_dir=tmp_path)
    assert len(list((tmp_path / "grids").glob("*.grid"))) == 8
