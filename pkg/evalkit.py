"""Disparity and depth error metrics.

Every metric takes an explicit validity mask; values outside it never
influence a result.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np

from errors import ConfigError, InvalidInputError
from imgcore import require_channels, require_same_size

logger = logging.getLogger(__name__)

MIN_DISPARITY = 1e-3


class MaskMode(str, Enum):
    INCLUDED = "occlusions-included"
    EXCLUDED = "occlusions-excluded"


@dataclass(frozen=True)
class CameraRig:
    """Rectified stereo rig: focal length in pixels, baseline in millimeters."""

    focal_px: float
    baseline_mm: float

    def __post_init__(self):
        if not (self.focal_px > 0 and self.baseline_mm > 0):
            raise ConfigError(
                f"camera rig needs positive focal_px and baseline_mm, "
                f"got {self.focal_px} and {self.baseline_mm}"
            )

    @classmethod
    def from_dict(cls, data: dict | None) -> "CameraRig | None":
        if not data:
            return None
        return cls(focal_px=float(data["focal_px"]), baseline_mm=float(data["baseline_mm"]))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvalReport:
    """Scores of one disparity map under one mask mode."""

    rmse_disparity_px: float
    rmse_depth_mm: float | None
    valid_pixel_count: int
    mask_mode: MaskMode
    invalid_depth_count: int = 0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["mask_mode"] = MaskMode(self.mask_mode).value
        return data


def _as_mask(valid: np.ndarray) -> np.ndarray:
    return np.asarray(valid).astype(bool)


def rmse_disparity(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> float:
    """Root mean square of ``pred - gt`` over the pixels set in ``valid``."""
    require_same_size(pred, gt, "prediction and ground truth")
    require_same_size(pred, valid, "prediction and mask")
    mask = _as_mask(valid)
    if not mask.any():
        raise InvalidInputError("RMSE needs at least one valid pixel")
    err = np.asarray(pred, dtype=np.float64)[mask] - np.asarray(gt, dtype=np.float64)[mask]
    return float(np.sqrt(np.mean(err**2)))


def disparity_to_depth(disp: np.ndarray, rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate ``z = f * B / |u|``.

    Returns the depth map (mm) and a boolean mask; pixels with
    ``|u| <= 1e-3`` are invalid and hold 0.
    """
    require_channels(np.asarray(disp), 1, "disparity")
    mag = np.abs(np.asarray(disp, dtype=np.float64))
    valid = np.isfinite(mag) & (mag > MIN_DISPARITY)
    depth = np.zeros(mag.shape)
    depth[valid] = rig.focal_px * rig.baseline_mm / mag[valid]
    return depth, valid


def depth_to_disparity(depth: np.ndarray, rig: CameraRig, negative: bool = False) -> np.ndarray:
    """Inverse of ``disparity_to_depth``; non-positive depths map to 0.

    With ``negative`` the result follows the signed ``x + u`` convention of
    a left-view disparity (``u = -f * B / z``).
    """
    depth = np.asarray(depth, dtype=np.float64)
    ok = np.isfinite(depth) & (depth > 0)
    disp = np.zeros(depth.shape)
    disp[ok] = rig.focal_px * rig.baseline_mm / depth[ok]
    return -disp if negative else disp


def _depth_mask(pred, gt_depth, rig, valid):
    pred_depth, ok = disparity_to_depth(pred, rig)
    gt_depth = np.asarray(gt_depth, dtype=np.float64)
    gt_ok = np.isfinite(gt_depth) & (gt_depth > 0)
    mask = _as_mask(valid)
    effective = mask & ok & gt_ok
    return pred_depth, effective, int(np.count_nonzero(mask & ~ok))


def rmse_depth(pred: np.ndarray, gt_depth: np.ndarray, rig: CameraRig, valid: np.ndarray) -> float:
    """Depth RMSE (mm) of a predicted disparity, skipping near-zero disparities."""
    require_same_size(pred, gt_depth, "prediction and ground-truth depth")
    require_same_size(pred, valid, "prediction and mask")
    pred_depth, effective, _ = _depth_mask(pred, gt_depth, rig, valid)
    if not effective.any():
        raise InvalidInputError("no valid pixels left for depth RMSE")
    err = pred_depth[effective] - np.asarray(gt_depth, dtype=np.float64)[effective]
    return float(np.sqrt(np.mean(err**2)))


def evaluate_disparity(
    pred: np.ndarray,
    gt: np.ndarray,
    occlusion: np.ndarray | None = None,
    rig: CameraRig | None = None,
    gt_depth: np.ndarray | None = None,
) -> list[EvalReport]:
    """Score ``pred`` with occlusions included, and excluded when a mask is given.

    ``occlusion`` marks occluded pixels. When a rig is supplied without
    ``gt_depth``, the reference depth is triangulated from ``gt``.
    """
    require_same_size(pred, gt, "prediction and ground truth")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    base = np.isfinite(pred) & np.isfinite(gt)
    modes = [(MaskMode.INCLUDED, base)]
    if occlusion is not None:
        require_same_size(pred, occlusion, "prediction and occlusion mask")
        modes.append((MaskMode.EXCLUDED, base & ~_as_mask(occlusion)))

    if rig is not None and gt_depth is None:
        gt_depth, _ = disparity_to_depth(gt, rig)

    reports = []
    for mode, valid in modes:
        rmse_mm = None
        invalid_depth = 0
        if rig is not None:
            _, effective, invalid_depth = _depth_mask(pred, gt_depth, rig, valid)
            if effective.any():
                rmse_mm = rmse_depth(pred, gt_depth, rig, valid)
            else:
                logger.warning(f"No pixels with valid depth for {mode.value}; depth RMSE skipped")
        reports.append(
            EvalReport(
                rmse_disparity_px=rmse_disparity(pred, gt, valid),
                rmse_depth_mm=rmse_mm,
                valid_pixel_count=int(np.count_nonzero(valid)),
                mask_mode=mode,
                invalid_depth_count=invalid_depth,
            )
        )
    return reports


def summarize_reports(reports: list[EvalReport]) -> dict[str, dict]:
    """Mean and standard deviation of the RMSE values per mask mode."""
    summary = {}
    for mode in MaskMode:
        group = [r for r in reports if MaskMode(r.mask_mode) is mode]
        if not group:
            continue
        disp = np.array([r.rmse_disparity_px for r in group])
        entry = {
            "count": len(group),
            "rmse_disparity_px_mean": float(disp.mean()),
            "rmse_disparity_px_std": float(disp.std()),
        }
        depth = np.array([r.rmse_depth_mm for r in group if r.rmse_depth_mm is not None])
        if depth.size:
            entry["rmse_depth_mm_mean"] = float(depth.mean())
            entry["rmse_depth_mm_std"] = float(depth.std())
        summary[mode.value] = entry
    return summary
