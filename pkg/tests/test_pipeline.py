import json

import numpy as np
import pytest

from errors import ConfigError
from evalkit import MaskMode
from gdr import GdrParams
from image_io import read_pfm, read_pfm_header, write_json, write_pfm
from pipeline import (
    PipelineConfig,
    PipelinePaths,
    Stage,
    export_synthetic_dataset,
    load_manifest,
    run_batch,
    run_pipeline,
)
from synth import CorruptionSpec, SceneSpec, corrupt_disparity_with_mask, gen_scene

FAST_GDR = GdrParams(m=10, n=3)


def make_sample(directory, spec, corruption=None):
    scene = gen_scene(spec)
    if corruption is None:
        init, mask = scene.gt_disp, None
    else:
        init, mask = corrupt_disparity_with_mask(scene.gt_disp, corruption)
    export_synthetic_dataset(directory, scene, init, mask)
    return scene


def sample_paths(directory, output, **extra):
    return PipelinePaths(
        left=directory / "left.png",
        right=directory / "right.png",
        output=output,
        init_disparity=directory / "init_disparity.pfm",
        gt_disparity=directory / "gt_disparity.pfm",
        occlusion_mask=directory / "occlusion.png",
        **extra,
    )


@pytest.fixture
def clean_sample(tmp_path):
    directory = tmp_path / "clean"
    make_sample(directory, SceneSpec(width=96, height=64, disparity=4.0, seed=3))
    return directory


def test_export_writes_dataset_layout(tmp_path):
    scene = make_sample(
        tmp_path / "s", SceneSpec(width=32, height=24, disparity=2.0), CorruptionSpec(blob_count=2)
    )
    names = {p.name for p in (tmp_path / "s").iterdir()}
    assert names == {
        "left.png", "right.png", "gt_disparity.pfm", "occlusion.png", "init_disparity.pfm", "corruption_mask.png",
    }
    # stored in the positive dataset convention
    assert np.allclose(read_pfm(tmp_path / "s" / "gt_disparity.pfm"), -scene.gt_disp, atol=1e-5)


def test_missing_input_is_a_config_error(clean_sample, tmp_path):
    paths = sample_paths(clean_sample, tmp_path / "out.pfm")
    paths.left = clean_sample / "missing.png"
    with pytest.raises(ConfigError, match="left"):
        PipelineConfig(paths=paths).validate()


@pytest.mark.parametrize("stage", ["ldr", "full"])
def test_stages_needing_a_prior(clean_sample, tmp_path, stage):
    paths = sample_paths(clean_sample, tmp_path / "out.pfm")
    paths.init_disparity = None
    with pytest.raises(ConfigError, match="initial disparity"):
        PipelineConfig(paths=paths, stage=stage).validate()


def test_priorless_gdr_needs_more_levels(clean_sample, tmp_path):
    paths = sample_paths(clean_sample, tmp_path / "out.pfm")
    paths.init_disparity = None
    with pytest.raises(ConfigError, match="pyramid levels"):
        PipelineConfig(paths=paths, stage="gdr").validate()
    PipelineConfig(paths=paths, stage="gdr", gdr=GdrParams(n=5)).validate()


def test_output_may_not_overwrite_inputs(clean_sample):
    paths = sample_paths(clean_sample, clean_sample / "init_disparity.pfm")
    with pytest.raises(ConfigError, match="overwrite"):
        PipelineConfig(paths=paths).validate()


def test_unknown_stage():
    with pytest.raises(ConfigError):
        PipelineConfig(paths=PipelinePaths("l.png", "r.png", "o.pfm"), stage="both")


def test_local_stage_leaves_perfect_input_alone(clean_sample, tmp_path):
    out = tmp_path / "out" / "clean.pfm"
    report = run_pipeline(PipelineConfig(paths=sample_paths(clean_sample, out), stage=Stage.LDR))
    assert abs(report.rmse("ldr") - report.rmse("raw")) < 1e-6
    assert set(report.evaluations) == {"raw", "ldr"}
    assert [r.mask_mode for r in report.evaluations["raw"]] == [MaskMode.INCLUDED, MaskMode.EXCLUDED]
    assert report.timings["ldr"] >= 0 and report.timings["total"] >= report.timings["ldr"]


def test_run_writes_artifacts(clean_sample, tmp_path):
    out = tmp_path / "out" / "clean.pfm"
    run_pipeline(PipelineConfig(paths=sample_paths(clean_sample, out), stage=Stage.LDR))
    for name in ("clean.pfm", "clean_confidence.pfm", "clean_confidence.png", "clean_error.png", "clean_report.json"):
        assert (out.parent / name).exists()
    saved = json.loads((out.parent / "clean_report.json").read_text())
    assert saved["parameters"]["stage"] == "ldr"
    assert "total" in saved["timings"]
    assert saved["evaluations"]["ldr"][0]["mask_mode"] == "occlusions-included"
    # written back in the dataset convention
    assert np.median(read_pfm(out)) == pytest.approx(4.0)


def test_output_keeps_the_prior_pfm_layout(clean_sample, tmp_path):
    init = clean_sample / "init_disparity.pfm"
    write_pfm(init, read_pfm(init), scale=1.0)
    out = tmp_path / "be.pfm"
    run_pipeline(PipelineConfig(paths=sample_paths(clean_sample, out), stage=Stage.LDR))
    assert read_pfm_header(out).scale == 1.0
    assert np.median(read_pfm(out)) == pytest.approx(4.0)


def test_half_resolution_scales_values(clean_sample, tmp_path):
    out = tmp_path / "half.pfm"
    cfg = PipelineConfig(paths=sample_paths(clean_sample, out), stage=Stage.LDR, half_resolution=True)
    report = run_pipeline(cfg)
    disp = read_pfm(out)
    assert disp.shape == (32, 48) == report.shape
    assert np.median(disp) == pytest.approx(2.0)
    # scored after upsampling back to full resolution
    assert report.evaluations["ldr"][0].valid_pixel_count == 96 * 64


def test_half_resolution_scored_at_working_size(clean_sample, tmp_path):
    cfg = PipelineConfig(
        paths=sample_paths(clean_sample, tmp_path / "half.pfm"),
        stage=Stage.LDR,
        half_resolution=True,
        eval_full_res=False,
    )
    report = run_pipeline(cfg)
    assert report.evaluations["ldr"][0].valid_pixel_count == 32 * 48


def test_serial_runs_are_byte_identical(clean_sample, tmp_path):
    outputs = []
    for name in ("a.pfm", "b.pfm"):
        out = tmp_path / name
        run_pipeline(PipelineConfig(paths=sample_paths(clean_sample, out), gdr=FAST_GDR))
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]


def test_priorless_global_run(clean_sample, tmp_path):
    paths = sample_paths(clean_sample, tmp_path / "g.pfm")
    paths.init_disparity = None
    report = run_pipeline(PipelineConfig(paths=paths, stage=Stage.GDR, gdr=GdrParams(m=5, n=5)))
    assert set(report.evaluations) == {"gdr"}
    assert read_pfm(tmp_path / "g.pfm").shape == (64, 96)


@pytest.mark.slow
def test_each_stage_lowers_the_error(tmp_path):
    directory = tmp_path / "corrupt"
    make_sample(
        directory,
        SceneSpec(width=128, height=96, disparity=6.0, seed=17),
        CorruptionSpec(blob_count=12, blob_radius=4, blob_magnitude=8.0, region_fraction=0.05, region_offset=3.0, seed=4),
    )
    report = run_pipeline(PipelineConfig(paths=sample_paths(directory, tmp_path / "out.pfm"), gdr=GdrParams(m=20)))
    assert report.rmse("raw") > report.rmse("ldr") > report.rmse("gdr")


def test_batch_manifest(tmp_path):
    for name, seed in (("one", 1), ("two", 2)):
        make_sample(tmp_path / name, SceneSpec(width=48, height=32, disparity=3.0, seed=seed))
    samples = [
        {
            "name": name,
            "left": f"{name}/left.png",
            "right": f"{name}/right.png",
            "init_disparity": f"{name}/init_disparity.pfm",
            "gt_disparity": f"{name}/gt_disparity.pfm",
        }
        for name in ("one", "two")
    ]
    write_json(tmp_path / "manifest.json", {"samples": samples})
    cfg = {
        "stage": "ldr",
        "disparity_sign": "negate",
        "half_resolution": False,
        "eval_full_res": True,
        "ldr": {},
        "gdr": {},
        "rig": None,
    }
    configs = load_manifest(tmp_path / "manifest.json", cfg)
    assert [c.paths.output for c in configs] == [tmp_path / "refined" / "one.pfm", tmp_path / "refined" / "two.pfm"]
    assert configs[0].paths.left == tmp_path / "one" / "left.png"

    reports = run_batch(configs, threads=2)
    assert [r.parameters["paths"]["output"] for r in reports] == [str(c.paths.output) for c in configs]
    assert all(c.paths.output.exists() for c in configs)


def test_manifest_needs_samples(tmp_path):
    write_json(tmp_path / "m.json", {"samples": []})
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "m.json", {})


@pytest.mark.slow
def test_full_run_at_360x288_stays_under_ten_seconds(tmp_path):
    directory = tmp_path / "perf"
    make_sample(
        directory,
        SceneSpec(width=360, height=288, disparity=6.0, illum_a=1.3, illum_b=0.05, seed=31),
        CorruptionSpec(blob_count=20, blob_radius=5, seed=6),
    )
    report = run_pipeline(PipelineConfig(paths=sample_paths(directory, tmp_path / "perf.pfm")))
    assert report.shape == (288, 360)
    assert report.timings["ldr"] + report.timings["gdr"] <= 10.0
    assert report.timings["total"] <= 10.0
