"""Local disparity refinement.

Builds a fused confidence map from a smoothness prior, photo-consistency,
a specular-highlight mask and a border-occlusion mask, then replaces every
low-confidence disparity by the median of the nearest inliers found along
the eight compass directions.
"""

import logging
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy import ndimage

from errors import ConfigError, InvalidInputError
from imgcore import (
    require_channels,
    require_same_size,
    saturation_channel,
    to_grayscale,
    value_channel,
    warp_horizontal,
)

logger = logging.getLogger(__name__)

# (dy, dx) steps of the directional inlier search
DIRECTIONS = (
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
)


class SpecularChannel(str, Enum):
    """HSV channel the specular mask thresholds."""

    SATURATION = "saturation"
    VALUE = "value"


@dataclass
class LdrParams:
    """Tunables of the local stage."""

    alpha_s: float = 20.0
    alpha_p: float = 2.0
    th_f: float = 0.5
    th_s: float = 0.1
    window_w: int = 9
    eps_div: float = 1e-6
    specular_channel: SpecularChannel = SpecularChannel.SATURATION

    def __post_init__(self):
        self.specular_channel = SpecularChannel(self.specular_channel)
        if self.window_w < 3 or self.window_w % 2 == 0:
            raise ConfigError(f"window_w must be odd and >= 3, got {self.window_w}")
        for name in ("th_f", "th_s"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.alpha_s <= 0 or self.alpha_p <= 0:
            raise ConfigError("alpha_s and alpha_p must be positive")
        if self.eps_div <= 0:
            raise ConfigError("eps_div must be positive")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["specular_channel"] = self.specular_channel.value
        return data


def smoothness_confidence(disp: np.ndarray, p: LdrParams) -> np.ndarray:
    """Confidence from agreement with the local ``w x w`` mean disparity."""
    disp = np.asarray(disp, dtype=np.float64)
    local_mean = ndimage.uniform_filter(disp, size=p.window_w, mode="reflect")
    denom = np.maximum(np.abs(local_mean), p.eps_div)
    return np.clip(1.0 - p.alpha_s * np.abs(disp - local_mean) / denom, 0.0, 1.0)


def photo_confidence(
    left: np.ndarray, right: np.ndarray, disp: np.ndarray, p: LdrParams
) -> np.ndarray:
    """Confidence from the relative intensity residual at the matched pixel.

    Pixels whose match falls outside the right image get confidence 0.
    """
    require_channels(left, 1, "left image")
    require_channels(right, 1, "right image")
    require_same_size(left, right, "left and right images")
    require_same_size(left, disp, "image and disparity")
    left = np.asarray(left, dtype=np.float64)
    warped, valid = warp_horizontal(right, disp)
    denom = np.maximum(left, p.eps_div)
    conf = np.clip(1.0 - p.alpha_p * np.abs(left - warped) / denom, 0.0, 1.0)
    return conf * valid


def specular_mask(color_left: np.ndarray, p: LdrParams) -> np.ndarray:
    """1 for usable pixels, 0 inside near-achromatic (or over-bright) highlights."""
    require_channels(color_left, 3, "left color image")
    if p.specular_channel is SpecularChannel.SATURATION:
        keep = saturation_channel(color_left) > p.th_s
    else:
        keep = value_channel(color_left) < p.th_s
    return keep.astype(np.float64)


def border_mask(disp: np.ndarray) -> np.ndarray:
    """1 where ``x + u(x)`` lands inside the right image."""
    disp = np.asarray(disp, dtype=np.float64)
    xs = np.arange(disp.shape[1], dtype=np.float64)[np.newaxis, :] + disp
    return ((xs >= 0.0) & (xs <= disp.shape[1] - 1)).astype(np.float64)


def final_confidence(
    cs: np.ndarray, cp: np.ndarray, ms: np.ndarray, mb: np.ndarray
) -> np.ndarray:
    """Pixelwise product of the two confidence maps and the two masks."""
    require_same_size(cs, cp, "confidence maps")
    require_same_size(cs, ms, "confidence and specular mask")
    require_same_size(cs, mb, "confidence and border mask")
    return np.clip(mb * ms * cp * cs, 0.0, 1.0)


def _directional_inliers(inlier: np.ndarray, disp: np.ndarray, ys, xs, dy: int, dx: int):
    """Disparity of the first inlier met from each (ys, xs) stepping by (dy, dx).

    Entries with no inlier before the image border are NaN.
    """
    h, w = inlier.shape
    found = np.full(ys.shape, np.nan)
    active = np.arange(ys.size)
    cy, cx = ys.copy(), xs.copy()
    while active.size:
        cy = cy + dy
        cx = cx + dx
        inside = (cy >= 0) & (cy < h) & (cx >= 0) & (cx < w)
        active, cy, cx = active[inside], cy[inside], cx[inside]
        hit = inlier[cy, cx]
        found[active[hit]] = disp[cy[hit], cx[hit]]
        miss = ~hit
        active, cy, cx = active[miss], cy[miss], cx[miss]
    return found


def interpolate_outliers(disp: np.ndarray, conf: np.ndarray, p: LdrParams) -> np.ndarray:
    """Replace pixels with ``conf < th_f`` by the median of their directional inliers.

    Inliers are copied unchanged; an outlier with no inlier in any direction
    keeps its value.
    """
    require_same_size(disp, conf, "disparity and confidence")
    disp = np.asarray(disp, dtype=np.float64)
    inlier = np.asarray(conf) >= p.th_f
    out = disp.copy()
    ys, xs = np.nonzero(~inlier)
    if ys.size == 0:
        return out

    candidates = np.stack(
        [_directional_inliers(inlier, disp, ys, xs, dy, dx) for dy, dx in DIRECTIONS]
    )
    has_any = ~np.all(np.isnan(candidates), axis=0)
    if np.any(has_any):
        # nanmedian averages the two middle values for an even count
        medians = np.nanmedian(candidates[:, has_any], axis=0)
        out[ys[has_any], xs[has_any]] = medians

    logger.info(
        f"LDR: {ys.size} outliers, {int(has_any.sum())} interpolated, "
        f"{int((~has_any).sum())} left unchanged"
    )
    return out


def confidence_maps(
    color_left: np.ndarray, color_right: np.ndarray, disp: np.ndarray, p: LdrParams
) -> dict[str, np.ndarray]:
    """All intermediate maps of the local stage, keyed ``cs, cp, ms, mb, cf``."""
    require_channels(color_left, 3, "left color image")
    require_channels(color_right, 3, "right color image")
    require_same_size(color_left, color_right, "left and right images")
    require_same_size(color_left, disp, "image and disparity")
    if not np.all(np.isfinite(disp)):
        raise InvalidInputError("initial disparity contains NaN or Inf")
    left = to_grayscale(color_left)
    right = to_grayscale(color_right)
    maps = {
        "cs": smoothness_confidence(disp, p),
        "cp": photo_confidence(left, right, disp, p),
        "ms": specular_mask(color_left, p),
        "mb": border_mask(disp),
    }
    maps["cf"] = final_confidence(maps["cs"], maps["cp"], maps["ms"], maps["mb"])
    return maps


def refine_local(
    color_left: np.ndarray, color_right: np.ndarray, disp: np.ndarray, p: LdrParams | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Run the local stage; returns the refined disparity and the fused confidence."""
    p = p or LdrParams()
    maps = confidence_maps(color_left, color_right, disp, p)
    refined = interpolate_outliers(disp, maps["cf"], p)
    return refined, maps["cf"]
