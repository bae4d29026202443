import json

import numpy as np

import config
from image_io import read_pfm, write_pfm
from main import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


def make_sample(tmp_path):
    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps({"width": 64, "height": 48, "disparity": 3.0, "seed": 5}))
    corruption = tmp_path / "corruption.json"
    corruption.write_text(json.dumps({"blob_count": 4, "seed": 1}))
    out = tmp_path / "sample"
    assert main(["synth", "--scene", str(scene), "--corruption", str(corruption), "--out", str(out)]) == EXIT_OK
    return out


def test_synth_writes_dataset(tmp_path):
    out = make_sample(tmp_path)
    for name in ("left.png", "right.png", "gt_disparity.pfm", "occlusion.png", "init_disparity.pfm", "corruption_mask.png", "scene.json"):
        assert (out / name).exists()
    assert json.loads((out / "scene.json").read_text())["scene"]["width"] == 64


def test_refine_local_stage(tmp_path):
    sample = make_sample(tmp_path)
    out = tmp_path / "out" / "refined.pfm"
    code = main([
        "refine", "--left", str(sample / "left.png"), "--right", str(sample / "right.png"),
        "--init", str(sample / "init_disparity.pfm"), "--gt", str(sample / "gt_disparity.pfm"),
        "--occlusion", str(sample / "occlusion.png"), "--output", str(out), "--stage", "ldr",
    ])
    assert code == EXIT_OK
    assert read_pfm(out).shape == (48, 64)
    assert (tmp_path / "out" / "refined_report.json").exists()
    assert (config.CONFIG_DIR / "disprefine.log").exists()


def test_refine_without_prior_is_config_error(tmp_path):
    sample = make_sample(tmp_path)
    code = main([
        "refine", "--left", str(sample / "left.png"), "--right", str(sample / "right.png"),
        "--output", str(tmp_path / "o.pfm"), "--stage", "ldr",
    ])
    assert code == EXIT_CONFIG


def test_bad_parameter_is_config_error(tmp_path):
    sample = make_sample(tmp_path)
    code = main([
        "refine", "--left", str(sample / "left.png"), "--right", str(sample / "right.png"),
        "--init", str(sample / "init_disparity.pfm"), "--output", str(tmp_path / "o.pfm"), "--window", "4",
    ])
    assert code == EXIT_CONFIG


def test_malformed_pfm_is_data_error(tmp_path):
    sample = make_sample(tmp_path)
    broken = tmp_path / "broken.pfm"
    broken.write_bytes(b"Pf\n64 48\n-1.0\n\x00\x00")
    code = main([
        "refine", "--left", str(sample / "left.png"), "--right", str(sample / "right.png"),
        "--init", str(broken), "--output", str(tmp_path / "o.pfm"), "--stage", "ldr",
    ])
    assert code == EXIT_DATA


def test_non_finite_prior_is_data_error(tmp_path):
    sample = make_sample(tmp_path)
    init = read_pfm(sample / "init_disparity.pfm")
    init[10, 10] = np.nan
    holed = tmp_path / "holed.pfm"
    write_pfm(holed, init)
    code = main([
        "refine", "--left", str(sample / "left.png"), "--right", str(sample / "right.png"),
        "--init", str(holed), "--output", str(tmp_path / "o.pfm"), "--stage", "ldr",
    ])
    assert code == EXIT_DATA


def test_eval_writes_json(tmp_path):
    sample = make_sample(tmp_path)
    report = tmp_path / "eval.json"
    code = main([
        "eval", "--pred", str(sample / "gt_disparity.pfm"), "--gt", str(sample / "gt_disparity.pfm"),
        "--occlusion", str(sample / "occlusion.png"), "--json", str(report),
        "--focal-px", "700", "--baseline-mm", "5",
    ])
    assert code == EXIT_OK
    rows = json.loads(report.read_text())
    assert [r["mask_mode"] for r in rows] == ["occlusions-included", "occlusions-excluded"]
    assert rows[0]["rmse_disparity_px"] == 0.0
    assert rows[0]["rmse_depth_mm"] == 0.0


def test_eval_size_mismatch_is_data_error(tmp_path):
    sample = make_sample(tmp_path)
    other = tmp_path / "other"
    scene = tmp_path / "small.json"
    scene.write_text(json.dumps({"width": 32, "height": 32}))
    assert main(["synth", "--scene", str(scene), "--out", str(other)]) == EXIT_OK
    code = main(["eval", "--pred", str(other / "gt_disparity.pfm"), "--gt", str(sample / "gt_disparity.pfm")])
    assert code == EXIT_DATA


def test_batch_command(tmp_path):
    sample = make_sample(tmp_path)
    manifest = tmp_path / "manifest.json"
    manifest.write_text(json.dumps({"samples": [{
        "name": "s1", "left": "sample/left.png", "right": "sample/right.png",
        "init_disparity": "sample/init_disparity.pfm", "gt_disparity": "sample/gt_disparity.pfm",
    }]}))
    code = main(["batch", str(manifest), "--stage", "ldr", "--output-dir", str(tmp_path / "refined")])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "refined" / "batch_summary.json").read_text())
    assert summary["summary"]["occlusions-included"]["count"] == 1
    assert np.isfinite(summary["summary"]["occlusions-included"]["rmse_disparity_px_mean"])
    assert sample.exists()


def test_config_write_and_show(tmp_path, capsys):
    assert main(["config", "--lambda", "0.8", "--write"]) == EXIT_OK
    assert json.loads(config.CONFIG_FILE.read_text())["gdr"]["lambda"] == 0.8
    assert main(["config"]) == EXIT_OK
    assert '"lambda": 0.8' in capsys.readouterr().out


def test_artifacts_listing(tmp_path, capsys):
    (tmp_path / "x.pfm").write_bytes(b"")
    (tmp_path / "x_report.json").write_text("{}")
    (tmp_path / "notes.txt").write_text("")
    assert main(["artifacts", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "x_report.json" in out
    assert "notes.txt" not in out
