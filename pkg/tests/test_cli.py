import json
import sqlite3

import numpy as np
import pandas as pd
import pytest

from conftest import TINY_SCENE, make_stream
from src.cli import main
from src.events.io import read_points, write_event_stream, write_geometry
from src.events.types import CameraGeometry
from src.model import trainer
from src.model.checkpoint import load_checkpoint, read_loss_curve
from src.pipeline.dataset import read_dataset

RUN_CONFIG = """\
seed=0
edge_rate=2
window_ms=10
widths=4,8,8,16
epochs=1
lr_schedule=0:1e-3
points=64
min_points=0
train_windows=3
test_windows=2
reps=1
warmup=1
"""


@pytest.fixture
def run_cfg(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(RUN_CONFIG, encoding="utf-8")
    return path


def _runs(db_path) -> list:
    with sqlite3.connect(db_path) as connection:
        return connection.execute("SELECT command, status, final_loss FROM runs ORDER BY id").fetchall()


def test_train_eval_and_bench_share_one_checkpoint(tmp_path, run_cfg, run_db, capsys):
    model = tmp_path / "out" / "model.evpm"

    assert main(["train", "--config", str(run_cfg), "--out", str(model), "--quiet"]) == 0
    assert main(["eval", "--config", str(run_cfg), "--model", str(model), "--report", str(tmp_path / "eval.json")]) == 0
    assert main(["bench", "--config", str(run_cfg), "--model", str(model), "--report", str(tmp_path / "bench.json")]) == 0

    params, cfg = load_checkpoint(model)
    assert cfg.widths == (4, 8, 8, 16) and cfg.num_joints == 13
    curve = read_loss_curve(model.with_suffix(".curve.csv"))
    assert [p.epoch for p in curve] == [0, 1]

    evaluation = json.loads((tmp_path / "eval.json").read_text(encoding="utf-8"))
    assert evaluation["mpjpe2d"] > 0 and evaluation["mpjpe3d"] is not None

    bench = json.loads((tmp_path / "bench.json").read_text(encoding="utf-8"))
    assert [s["stage"] for s in bench["stages"]] == ["rasterize", "sample", "forward", "decode", "triangulate"]
    assert bench["end_to_end"]["count"] == 1

    runs = _runs(run_db)
    assert [(command, status) for command, status, _ in runs] == [("train", "ok"), ("eval", "ok"), ("bench", "ok")]
    assert runs[0][2] == pytest.approx(curve[-1].loss)
    with sqlite3.connect(run_db) as connection:
        assert connection.execute("SELECT COUNT(*) FROM epochs").fetchone()[0] == 1
        assert connection.execute("SELECT COUNT(*) FROM bench").fetchone()[0] == 6


def test_gen_writes_a_readable_dataset(tmp_path, run_cfg):
    target = tmp_path / "scene"

    assert main(["--no-log", "gen", "--config", str(run_cfg), "--out", str(target), "--windows", "2"]) == 0

    scene = read_dataset(target)
    assert scene.cameras == [0, 1]
    assert scene.meta["edge_rate"] == 2.0


def test_errors_exit_with_status_one_and_are_logged(tmp_path, run_cfg, run_db, capsys):
    code = main(["eval", "--config", str(run_cfg), "--model", str(tmp_path / "absent.evpm")])

    assert code == 1
    assert capsys.readouterr().err.startswith("Error:")
    assert _runs(run_db) == [("eval", "failed", None)]


def test_invalid_configuration_is_an_error(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("warmup=0\n", encoding="utf-8")

    assert main(["--no-log", "gen", "--config", str(path), "--out", str(tmp_path / "scene")]) == 1
    assert "Error:" in capsys.readouterr().err


def test_convert_and_rasterize_a_stream(tmp_path):
    source = tmp_path / "cam0.csv"
    write_event_stream(
        source, make_stream([0, 5, 10, 20], x=[1, 1, 2, 3], y=[0, 0, 1, 1], p=[1, 0, 1, 1]), CameraGeometry.default(8, 4)
    )

    assert main(["--no-log", "convert", "--in", str(source), "--out", str(tmp_path / "cam0.evpc")]) == 0
    assert main(["--no-log", "rasterize", "--in", str(tmp_path / "cam0.evpc"), "--out", str(tmp_path / "pts.bin"), "--k", "2"]) == 0

    points, k = read_points(tmp_path / "pts.bin")
    assert k == 2
    assert points.e_cnt.tolist() == [2, 1, 1]


def test_triangulate_writes_joint_positions(tmp_path):
    rig = TINY_SCENE.rig()
    truth = np.array([[0.0, 0.0, 865.0], [150.0, -40.0, 1200.0]])
    for name, camera in (("a", rig.cam_a), ("b", rig.cam_b)):
        uv, _ = camera.project(truth)
        frame = pd.DataFrame({"joint": [0, 1], "x": uv[:, 0], "y": uv[:, 1], "valid": [1, 1]})
        frame.to_csv(tmp_path / f"pred_{name}.csv", index=False)
        write_geometry(tmp_path / f"cam_{name}.cam", camera)

    code = main(
        [
            "--no-log",
            "triangulate",
            "--pred-a", str(tmp_path / "pred_a.csv"),
            "--pred-b", str(tmp_path / "pred_b.csv"),
            "--cam-a", str(tmp_path / "cam_a.cam"),
            "--cam-b", str(tmp_path / "cam_b.cam"),
            "--out", str(tmp_path / "joints3d.csv"),
        ]
    )

    assert code == 0
    result = pd.read_csv(tmp_path / "joints3d.csv")
    assert list(result.columns) == ["joint", "X", "Y", "Z", "valid", "residual"]
    np.testing.assert_allclose(result[["X", "Y", "Z"]].to_numpy(), truth, atol=1e-6)
    assert result["valid"].tolist() == [1, 1]


def test_diverged_training_keeps_the_last_good_checkpoint(tmp_path, run_cfg, run_db, monkeypatch, capsys):
    adam_step, kl_loss = trainer.adam_step, trainer.kl_loss
    steps = []

    def counting_step(*args, **kwargs):
        steps.append(1)
        return adam_step(*args, **kwargs)

    def diverging_loss(*args):
        loss, grad_x, grad_y = kl_loss(*args)
        return (np.nan if steps else loss), grad_x, grad_y

    monkeypatch.setattr(trainer, "adam_step", counting_step)
    monkeypatch.setattr(trainer, "kl_loss", diverging_loss)
    model = tmp_path / "model.evpm"

    code = main(["train", "--config", str(run_cfg), "--out", str(model), "--quiet"])

    assert code == 1
    assert "Error:" in capsys.readouterr().err
    assert len(steps) == 1
    params, cfg = load_checkpoint(model)
    assert cfg.widths == (4, 8, 8, 16) and cfg.num_joints == 13
    assert all(np.isfinite(params[name]).all() for name in params.names())
    assert _runs(run_db) == [("train", "failed", None)]
