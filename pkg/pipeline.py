"""End-to-end refinement driver.

Loads a stereo pair and an initial disparity, runs the local stage, the
global stage or both, writes the refined map with its artifacts and scores
every intermediate result against ground truth when one is supplied.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path

import numpy as np

from artifacts import sanitize_filename, save_confidence, save_error_map, sidecar_paths
from config import build_gdr_params, build_ldr_params, build_rig, get_thread_count
from errors import ConfigError, InvalidInputError
from evalkit import CameraRig, EvalReport, MaskMode, evaluate_disparity
from gdr import GdrParams, refine_global
from image_io import (
    read_disparity,
    read_json,
    read_mask,
    read_pfm,
    read_pfm_header,
    read_raster,
    write_json,
    write_mask,
    write_pfm,
    write_png8,
)
from imgcore import (
    downsample_disparity,
    downsample_half,
    require_same_size,
    resize_nearest,
    upsample_disparity,
)
from ldr import LdrParams, refine_local
from synth import SyntheticScene

logger = logging.getLogger(__name__)

# Priorless global refinement must ask for more pyramid levels than this
PRIORLESS_MIN_LEVELS = GdrParams().n


class Stage(str, Enum):
    LDR = "ldr"
    GDR = "gdr"
    FULL = "full"


@dataclass
class PipelinePaths:
    left: Path
    right: Path
    output: Path
    init_disparity: Path | None = None
    gt_disparity: Path | None = None
    gt_depth: Path | None = None
    occlusion_mask: Path | None = None

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None:
                setattr(self, f.name, Path(value))

    def inputs(self) -> dict[str, Path]:
        return {
            f.name: getattr(self, f.name)
            for f in fields(self)
            if f.name != "output" and getattr(self, f.name) is not None
        }


@dataclass
class PipelineConfig:
    paths: PipelinePaths
    stage: Stage = Stage.FULL
    ldr: LdrParams = field(default_factory=LdrParams)
    gdr: GdrParams = field(default_factory=GdrParams)
    disparity_sign: str = "negate"
    half_resolution: bool = False
    eval_full_res: bool = True
    rig: CameraRig | None = None

    def __post_init__(self):
        try:
            self.stage = Stage(self.stage)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.disparity_sign not in ("as-stored", "negate"):
            raise ConfigError(f"unknown disparity_sign {self.disparity_sign!r}")

    @classmethod
    def from_config(cls, config: dict, paths: PipelinePaths) -> "PipelineConfig":
        """Build from a merged config dict (see ``config.load_config``)."""
        return cls(
            paths=paths,
            stage=config["stage"],
            ldr=build_ldr_params(config),
            gdr=build_gdr_params(config),
            disparity_sign=config["disparity_sign"],
            half_resolution=bool(config["half_resolution"]),
            eval_full_res=bool(config["eval_full_res"]),
            rig=build_rig(config),
        )

    def validate(self) -> None:
        """Check inputs and outputs before any compute; raises ConfigError."""
        inputs = self.paths.inputs()
        for name, path in inputs.items():
            if not path.exists():
                raise ConfigError(f"{name} not found: {path}")

        if self.paths.init_disparity is None:
            if self.stage in (Stage.LDR, Stage.FULL):
                raise ConfigError(f"stage {self.stage.value} requires an initial disparity")
            if self.gdr.n <= PRIORLESS_MIN_LEVELS:
                raise ConfigError(
                    f"stage gdr without an initial disparity needs more than "
                    f"{PRIORLESS_MIN_LEVELS} pyramid levels (got n={self.gdr.n})"
                )
        if self.paths.gt_depth is not None and self.rig is None:
            raise ConfigError("gt_depth needs a camera rig (focal_px, baseline_mm)")

        resolved_inputs = {p.resolve() for p in inputs.values()}
        for path in sidecar_paths(self.paths.output).values():
            if path.resolve() in resolved_inputs:
                raise ConfigError(f"output {path} would overwrite an input")

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "disparity_sign": self.disparity_sign,
            "half_resolution": self.half_resolution,
            "eval_full_res": self.eval_full_res,
            "ldr": self.ldr.to_dict(),
            "gdr": self.gdr.to_dict(),
            "rig": self.rig.to_dict() if self.rig else None,
            "paths": {k: str(v) for k, v in vars(self.paths).items() if v is not None},
        }


@dataclass
class RunReport:
    """Timings (seconds), evaluation per stage and the parameters used."""

    timings: dict[str, float] = field(default_factory=dict)
    evaluations: dict[str, list[EvalReport]] = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    shape: tuple[int, int] = (0, 0)

    def rmse(self, stage: str, mode: MaskMode = MaskMode.INCLUDED) -> float:
        for report in self.evaluations[stage]:
            if MaskMode(report.mask_mode) is mode:
                return report.rmse_disparity_px
        raise KeyError(f"no {MaskMode(mode).value} evaluation for stage {stage}")

    def to_dict(self) -> dict:
        return {
            "timings": dict(self.timings),
            "evaluations": {k: [r.to_dict() for r in v] for k, v in self.evaluations.items()},
            "parameters": self.parameters,
            "outputs": list(self.outputs),
            "shape": list(self.shape),
        }


@dataclass
class _GroundTruth:
    disp: np.ndarray | None = None
    depth: np.ndarray | None = None
    occlusion: np.ndarray | None = None


def _signed(disp: np.ndarray, sign: str) -> np.ndarray:
    return -disp if sign == "negate" else disp


def _load_ground_truth(cfg: PipelineConfig, shape) -> _GroundTruth:
    gt = _GroundTruth()
    paths = cfg.paths
    if paths.gt_disparity is not None:
        gt.disp = _signed(read_disparity(paths.gt_disparity), cfg.disparity_sign)
        if gt.disp.shape != shape:
            raise InvalidInputError(f"ground truth {gt.disp.shape} does not match images {shape}")
    if paths.gt_depth is not None:
        gt.depth = read_pfm(paths.gt_depth, channels=1)
        if gt.depth.shape != shape:
            raise InvalidInputError(f"ground-truth depth {gt.depth.shape} does not match images {shape}")
    if paths.occlusion_mask is not None:
        gt.occlusion = read_mask(paths.occlusion_mask)
        if gt.occlusion.shape != shape:
            raise InvalidInputError(f"occlusion mask {gt.occlusion.shape} does not match images {shape}")
    return gt


def _evaluation_view(cfg: PipelineConfig, gt: _GroundTruth, full_shape, work_shape):
    """Ground truth and a disparity adapter at the resolution errors are measured at."""
    if not cfg.half_resolution or cfg.eval_full_res:
        if cfg.half_resolution:
            return gt, lambda d: upsample_disparity(d, full_shape)
        return gt, lambda d: d
    reduced = _GroundTruth(
        disp=downsample_disparity(gt.disp) if gt.disp is not None else None,
        depth=resize_nearest(gt.depth, work_shape) if gt.depth is not None else None,
        occlusion=resize_nearest(gt.occlusion, work_shape) if gt.occlusion is not None else None,
    )
    return reduced, lambda d: d


def _output_scale(cfg: PipelineConfig) -> float:
    """PFM scale of the initial disparity file, so outputs keep its byte order."""
    init = cfg.paths.init_disparity
    if init is not None and init.suffix.lower() == ".pfm":
        return read_pfm_header(init).scale
    return -1.0


def run_pipeline(cfg: PipelineConfig) -> RunReport:
    """Run the configured stages and write the refined disparity and its artifacts."""
    cfg.validate()
    report = RunReport(parameters=cfg.to_dict())
    start = time.perf_counter()

    left = read_raster(cfg.paths.left)
    right = read_raster(cfg.paths.right)
    require_same_size(left, right, "left and right images")
    full_shape = left.shape[:2]

    init = None
    if cfg.paths.init_disparity is not None:
        init = _signed(read_disparity(cfg.paths.init_disparity), cfg.disparity_sign)
        require_same_size(left, init, "images and initial disparity")
    gt = _load_ground_truth(cfg, full_shape)

    if cfg.half_resolution:
        left = downsample_half(left)
        right = downsample_half(right)
        if init is not None:
            init = downsample_disparity(init)
    work_shape = left.shape[:2]
    report.shape = work_shape

    eval_gt, to_eval = _evaluation_view(cfg, gt, full_shape, work_shape)

    def evaluate(name: str, disp: np.ndarray) -> None:
        if eval_gt.disp is None:
            return
        report.evaluations[name] = evaluate_disparity(
            to_eval(disp), eval_gt.disp, eval_gt.occlusion, cfg.rig, eval_gt.depth
        )
        logger.info(f"{name}: RMSE {report.evaluations[name][0].rmse_disparity_px:.4f} px")

    if init is not None:
        evaluate("raw", init)

    current = init
    confidence = None
    if cfg.stage in (Stage.LDR, Stage.FULL):
        t0 = time.perf_counter()
        current, confidence = refine_local(left, right, current, cfg.ldr)
        report.timings["ldr"] = time.perf_counter() - t0
        logger.info(f"LDR finished in {report.timings['ldr']:.3f}s")
        evaluate("ldr", current)

    if cfg.stage in (Stage.GDR, Stage.FULL):
        t0 = time.perf_counter()
        current = refine_global(left, right, current, cfg.gdr)
        report.timings["gdr"] = time.perf_counter() - t0
        logger.info(f"GDR finished in {report.timings['gdr']:.3f}s")
        evaluate("gdr", current)

    paths = sidecar_paths(cfg.paths.output)
    cfg.paths.output.parent.mkdir(parents=True, exist_ok=True)
    write_pfm(paths["disparity"], _signed(current, cfg.disparity_sign), _output_scale(cfg))
    report.outputs.append(str(paths["disparity"]))
    if confidence is not None:
        report.outputs.extend(str(p) for p in save_confidence(cfg.paths.output, confidence))
    if eval_gt.disp is not None:
        error_path = save_error_map(cfg.paths.output, to_eval(current), eval_gt.disp)
        report.outputs.append(str(error_path))

    report.timings["total"] = time.perf_counter() - start
    report.outputs.append(str(paths["report"]))
    write_json(paths["report"], report.to_dict())
    return report


def load_manifest(path: str | Path, config: dict, output_dir: str | Path | None = None) -> list[PipelineConfig]:
    """Read a batch manifest: ``{"samples": [{"name", "left", "right", ...}]}``.

    Relative sample paths resolve against the manifest's directory. Samples
    without an ``output`` write ``<output_dir>/<name>.pfm``.
    """
    path = Path(path)
    data = read_json(path)
    samples = data.get("samples") if isinstance(data, dict) else None
    if not samples:
        raise ConfigError(f"manifest {path} has no samples")
    base = path.parent
    out_dir = Path(output_dir) if output_dir is not None else base / "refined"

    def resolve(value):
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    configs = []
    for i, sample in enumerate(samples):
        name = sanitize_filename(sample.get("name") or f"sample_{i:03d}")
        try:
            sample_paths = PipelinePaths(
                left=resolve(sample["left"]),
                right=resolve(sample["right"]),
                output=resolve(sample.get("output")) or out_dir / f"{name}.pfm",
                init_disparity=resolve(sample.get("init_disparity")),
                gt_disparity=resolve(sample.get("gt_disparity")),
                gt_depth=resolve(sample.get("gt_depth")),
                occlusion_mask=resolve(sample.get("occlusion_mask")),
            )
        except KeyError as e:
            raise ConfigError(f"manifest sample {i} is missing {e.args[0]!r}") from e
        configs.append(PipelineConfig.from_config(config, sample_paths))
    return configs


def run_batch(configs: list[PipelineConfig], threads: int | None = None) -> list[RunReport]:
    """Run independent samples on a thread pool; reports come back in input order."""
    for cfg in configs:
        cfg.validate()
    threads = threads or get_thread_count()
    logger.info(f"Batch of {len(configs)} samples on {threads} thread(s)")
    if threads == 1:
        return [run_pipeline(cfg) for cfg in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run_pipeline, configs))


def export_synthetic_dataset(
    out_dir: str | Path,
    scene: SyntheticScene,
    init: np.ndarray | None = None,
    corruption_mask: np.ndarray | None = None,
) -> list[Path]:
    """Write a scene the way stereo datasets ship: positive disparities, PNG views."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        out_dir / "left.png",
        out_dir / "right.png",
        out_dir / "gt_disparity.pfm",
        out_dir / "occlusion.png",
    ]
    write_png8(written[0], scene.left)
    write_png8(written[1], scene.right)
    write_pfm(written[2], -scene.gt_disp)
    write_mask(written[3], scene.occlusion)
    if init is not None:
        written.append(out_dir / "init_disparity.pfm")
        write_pfm(written[-1], -init)
    if corruption_mask is not None:
        written.append(out_dir / "corruption_mask.png")
        write_mask(written[-1], corruption_mask)
    return written
