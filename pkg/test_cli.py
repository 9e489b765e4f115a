import json

import numpy as np
import pytest

from drat.main import main

TINY_RUN = {
    "channels": 2,
    "frames": 4,
    "height": 16,
    "width": 16,
    "joints": 3,
    "num_classes": 2,
    "layers": 1,
    "heads": 2,
    "kernel": 1,
    "total_steps": 2,
    "batch_size": 2,
}


def run_cli(capsys, *argv):
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def generate_tiny(capsys, root):
    code, out, _ = run_cli(
        capsys, "generate", "--out", root, "--classes", 2, "--samples", 5,
        "--frames", 4, "--height", 16, "--width", 16, "--joints", 3, "--seed", 3,
    )
    assert code == 0
    return json.loads(out)


def test_generate_train_eval_export(tmp_path, capsys):
    data, ckpt = tmp_path / "data", tmp_path / "ckpt"
    info = generate_tiny(capsys, data)
    assert info["split_counts"] == {"train": 8, "test": 2}

    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(TINY_RUN))
    code, out, _ = run_cli(capsys, "train", "--data", data, "--config", config_path, "--out", ckpt, "--seed", 4)
    assert code == 0
    trained = json.loads(out)
    assert trained["seed"] == 4 and trained["metrics"]["steps"] == 2
    assert (ckpt / "config.json").exists() and (ckpt / "metrics.jsonl").exists()

    code, out, _ = run_cli(capsys, "eval", "--ckpt", ckpt, "--data", data, "--frames", 2)
    assert code == 0
    report = json.loads(out)
    assert report["samples"] == 2 and report["frames"] == 2 and report["train_frames"] == 4
    assert 0.0 <= report["accuracy"] <= 1.0

    target = tmp_path / "attn.json"
    code, out, _ = run_cli(
        capsys, "export-attn", "--ckpt", ckpt, "--sample", data / "clips" / "clip_00001.tnsr", "--out", target
    )
    assert code == 0
    summary = json.loads(out)
    assert summary["max_row_sum_error"] <= 1e-9
    exported = json.loads(target.read_text())
    assert summary["out"] == str(target)
    assert summary["records"] == len(exported["attention"])
    assert {r["tag"] for r in exported["attention"]} == {"layer0.deformable", "layer0.joint", "layer0.temporal"}
    assert np.array(exported["joint_attention"]["layer0"]).shape == (3, 4)
    assert np.array(exported["deformed_points"]["layer0.deformable"]).shape == (3, 4, 2, 2)
    assert np.abs(np.array(exported["deformed_points"]["layer0.deformable"])).max() <= 1.0
    assert exported["prediction"] == int(np.argmax(exported["logits"]))


def test_train_rejects_config_that_disagrees_with_dataset(tmp_path, capsys):
    generate_tiny(capsys, tmp_path / "data")
    code, out, err = run_cli(capsys, "train", "--data", tmp_path / "data", "--out", tmp_path / "ckpt")
    assert code == 2
    assert out == ""
    error = json.loads(err.strip().splitlines()[-1])
    assert error["error"] == "UsageError"


def test_train_needs_paths(capsys):
    code, _, err = run_cli(capsys, "train")
    assert code == 2
    assert "--data" in json.loads(err.strip().splitlines()[-1])["detail"]


def test_bench_joint_axis(capsys):
    code, out, _ = run_cli(capsys, "bench", "--axis", "joints", "--values", "8,16,32", "--wnd", 4)
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [round(r["ratio"], 2) for r in rows] == [1.08, 0.78, 0.47]
    assert [r["sparser"] for r in rows] == [False, True, True]


def test_bench_time_axis(capsys):
    code, out, _ = run_cli(
        capsys, "bench", "--axis", "time", "--values", "32,64", "--wnd", 4,
        "--height", 8, "--width", 8, "--joints", 1,
    )
    assert code == 0
    small, large = json.loads(out)["rows"]
    assert small["tokens_per_step"] == 5
    assert large["stride_dot_products"] / small["stride_dot_products"] == pytest.approx(12400 / 6000)


def test_bench_stride_axis_without_training(capsys):
    code, out, _ = run_cli(capsys, "bench", "--axis", "stride", "--values", "1,2,4", "--wnd", 4)
    assert code == 0
    rows = json.loads(out)["rows"]
    assert [r["stride"] for r in rows] == [1, 2, 4]
    assert rows[0]["stride_dot_products"] > rows[2]["stride_dot_products"]
    assert "test_acc" not in rows[0]


def test_bench_stride_training_follows_the_dataset(tmp_path, capsys):
    data = tmp_path / "data"
    code, _, _ = run_cli(
        capsys, "generate", "--out", data, "--classes", 3, "--samples", 5,
        "--frames", 4, "--height", 16, "--width", 16, "--joints", 3, "--seed", 5,
    )
    assert code == 0
    code, out, _ = run_cli(
        capsys, "bench", "--axis", "stride", "--values", 2, "--wnd", 4, "--data", data, "--steps", 1,
    )
    assert code == 0
    result = json.loads(out)
    assert result["config"]["num_classes"] == 3
    assert result["config"]["frames"] == 4
    assert result["config"]["joints"] == 3
    assert 0.0 <= result["rows"][0]["test_acc"] <= 1.0

    code, _, err = run_cli(
        capsys, "bench", "--axis", "stride", "--values", 2, "--wnd", 4, "--data", data, "--joints", 5,
    )
    assert code == 2
    assert json.loads(err.strip().splitlines()[-1])["error"] == "UsageError"


def test_bench_training_needs_dataset_provenance(tmp_path, capsys):
    code, _, _ = run_cli(capsys, "bench", "--axis", "stride", "--values", 2, "--wnd", 4, "--data", tmp_path)
    assert code == 2


@pytest.mark.parametrize(
    "argv",
    [
        ["bench", "--axis", "joints", "--values", "a,b", "--wnd", "4"],
        ["bench", "--axis", "time", "--values", "8", "--wnd", "4", "--data", "somewhere"],
        ["bench", "--axis", "depth", "--values", "8", "--wnd", "4"],
        ["verify", "--fault", "flip_signs"],
        ["launch"],
        [],
    ],
)
def test_usage_errors_exit_two(capsys, argv):
    assert main(argv) == 2


def test_version_exits_cleanly(capsys):
    assert main(["--version"]) == 0
    assert "drat" in capsys.readouterr().out


def test_verify_with_fault_exits_one(capsys):
    code, out, _ = run_cli(capsys, "verify", "--fault", "skip_scaling", "--trials", 2)
    assert code == 1
    report = json.loads(out)
    assert report["passed"] is False and report["faults"] == ["skip_scaling"]
