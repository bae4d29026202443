"""Synthetic stereo scenes, disparity corruption and a brute-force matching oracle.

Scene disparity models produce dataset-style positive disparities ``d``
(right-image column ``x - d``); the ground truth handed back is the signed
internal disparity ``u`` with ``x + u`` landing on the right-image match.
"""

import logging
import math
from dataclasses import asdict, dataclass, fields
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from errors import InvalidInputError
from gdr import descriptor_field
from imgcore import as_gray, require_same_size

logger = logging.getLogger(__name__)

TEXTURE_RANGE = (0.15, 0.7)
OCTAVE_SIGMAS = (1.0, 2.0, 4.0)
OCTAVE_WEIGHTS = (0.2, 0.3, 0.5)
# Chromatic tint keeps saturation well above the specular threshold
COLOR_TINT = (1.0, 0.55, 0.45)
FIXED_POINT_ITERS = 30
MAX_BLOBS = 100_000


class Texture(str, Enum):
    RANDOM_SMOOTH = "random-smooth"
    CHECKER = "checker"
    RAMP = "ramp"


class DisparityModel(str, Enum):
    CONSTANT = "constant"
    SINUSOID = "sinusoid"
    TILTED_PLANE = "tilted-plane"


def _from_dict(cls, data: dict):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise InvalidInputError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


@dataclass
class SceneSpec:
    """Recipe for a synthetic rectified pair.

    ``disparity`` is the constant value, or the offset of the sinusoid and
    plane models. ``amplitude``/``period`` shape the sinusoid, ``slope`` and
    ``slope_y`` the plane.
    """

    width: int = 128
    height: int = 96
    texture: Texture = Texture.RANDOM_SMOOTH
    disparity_model: DisparityModel = DisparityModel.CONSTANT
    disparity: float = 4.0
    amplitude: float = 0.0
    period: float = 64.0
    slope: float = 0.0
    slope_y: float = 0.0
    illum_a: float = 1.0
    illum_b: float = 0.0
    specular_blobs: int = 0
    specular_radius: int = 4
    checker_size: int = 8
    seed: int = 0

    def __post_init__(self):
        self.texture = Texture(self.texture)
        self.disparity_model = DisparityModel(self.disparity_model)
        if self.width < 8 or self.height < 8:
            raise InvalidInputError(f"scene must be at least 8x8, got {self.width}x{self.height}")
        if self.illum_a <= 0:
            raise InvalidInputError(f"illum_a must be positive, got {self.illum_a}")
        if self.period <= 0:
            raise InvalidInputError("period must be positive")
        if self.specular_blobs < 0 or self.specular_radius < 1:
            raise InvalidInputError("specular blob count must be >= 0 and radius >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "SceneSpec":
        return _from_dict(cls, data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["texture"] = self.texture.value
        data["disparity_model"] = self.disparity_model.value
        return data

    def positive_disparity(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Dataset-style disparity ``d`` at (possibly fractional) columns ``xs``."""
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        if self.disparity_model is DisparityModel.CONSTANT:
            return np.full(np.broadcast(xs, ys).shape, float(self.disparity))
        if self.disparity_model is DisparityModel.SINUSOID:
            d = self.disparity + self.amplitude * np.sin(2.0 * np.pi * xs / self.period)
            return d + 0.0 * ys
        return self.disparity + self.slope * xs + self.slope_y * ys

    def max_slope(self) -> float:
        if self.disparity_model is DisparityModel.SINUSOID:
            return abs(self.amplitude) * 2.0 * np.pi / self.period
        if self.disparity_model is DisparityModel.TILTED_PLANE:
            return abs(self.slope)
        return 0.0


@dataclass
class CorruptionSpec:
    """Spikes and holes (blobs of ``gt +/- blob_magnitude``) plus one wrong region.

    Blobs are added until both ``blob_count`` is reached and ``blob_fraction``
    of the image is covered. The region covers ``region_fraction`` of the
    image and holds ``mean(gt) + region_offset``.
    """

    blob_count: int = 0
    blob_radius: int = 5
    blob_magnitude: float = 10.0
    blob_fraction: float = 0.0
    region_fraction: float = 0.0
    region_offset: float = 15.0
    seed: int = 0

    def __post_init__(self):
        for name in ("blob_fraction", "region_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")
        if self.blob_count < 0 or self.blob_radius < 1:
            raise InvalidInputError("blob_count must be >= 0 and blob_radius >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "CorruptionSpec":
        return _from_dict(cls, data)

    def to_dict(self) -> dict:
        return asdict(self)


class SyntheticScene(NamedTuple):
    left: np.ndarray
    right: np.ndarray
    gt_disp: np.ndarray
    occlusion: np.ndarray


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def make_texture(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    """Single-channel texture with values in ``TEXTURE_RANGE``."""
    h, w = spec.height, spec.width
    lo, hi = TEXTURE_RANGE
    if spec.texture is Texture.CHECKER:
        ys, xs = np.mgrid[0:h, 0:w]
        cells = (ys // spec.checker_size + xs // spec.checker_size) % 2
        return np.where(cells == 1, hi, lo).astype(np.float64)
    if spec.texture is Texture.RAMP:
        return np.broadcast_to(np.linspace(lo, hi, w), (h, w)).copy()

    noise = rng.random((h, w))
    tex = sum(
        weight * ndimage.gaussian_filter(noise, sigma, mode="reflect")
        for sigma, weight in zip(OCTAVE_SIGMAS, OCTAVE_WEIGHTS)
    )
    tex = (tex - tex.min()) / max(tex.max() - tex.min(), 1e-12)
    return lo + (hi - lo) * tex


def _sample_rows(img: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Linear interpolation along rows at columns ``xs``, clamped to the image."""
    h, w = xs.shape
    xs = np.clip(xs, 0.0, w - 1)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2)
    frac = (xs - x0)[:, :, np.newaxis]
    rows = np.arange(h)[:, np.newaxis]
    return (1.0 - frac) * img[rows, x0] + frac * img[rows, x0 + 1]


def _solve_ground_truth(spec: SceneSpec) -> np.ndarray:
    ys, xs = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    xr = xs - spec.positive_disparity(xs, ys)
    for _ in range(FIXED_POINT_ITERS):
        xr = xs - spec.positive_disparity(xr, ys)
    return xr - xs


def _disk(shape, cy: float, cx: float, radius: float) -> np.ndarray:
    ys, xs = np.ogrid[0 : shape[0], 0 : shape[1]]
    return (ys - cy) ** 2 + (xs - cx) ** 2 <= radius**2


def gen_scene(spec: SceneSpec) -> SyntheticScene:
    """Render a textured pair with known disparity.

    Returns left and right RGB images, the signed ground-truth disparity and
    the border-occlusion mask (True where ``x + u`` leaves the right image).
    """
    h, w = spec.height, spec.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    d = spec.positive_disparity(xs, ys)
    bound = w / 4.0
    if np.max(np.abs(d)) > bound:
        raise InvalidInputError(f"disparity magnitude {np.max(np.abs(d)):.3f} exceeds width/4 = {bound}")
    if spec.max_slope() >= 1.0:
        raise InvalidInputError("disparity must change by less than one pixel per column")

    rng = _rng(spec.seed)
    tex = make_texture(spec, rng)
    left = tex[:, :, np.newaxis] * np.asarray(COLOR_TINT)

    # right(xr) shows the left pixel at xr + d(xr)
    right = np.clip(spec.illum_a * _sample_rows(left, xs + d) + spec.illum_b, 0.0, 1.0)

    gt = _solve_ground_truth(spec)
    target = xs + gt
    occlusion = (target < 0.0) | (target > w - 1)

    for _ in range(spec.specular_blobs):
        cy = rng.uniform(0, h - 1)
        cx = rng.uniform(0, w - 1)
        left[_disk((h, w), cy, cx, spec.specular_radius)] = 1.0
        iy = int(round(cy))
        ix = int(round(cx))
        right[_disk((h, w), cy, cx + gt[iy, ix], spec.specular_radius)] = 1.0

    logger.debug(
        f"Scene {w}x{h} {spec.texture.value}/{spec.disparity_model.value}: "
        f"{int(occlusion.sum())} occluded pixels"
    )
    return SyntheticScene(left=left, right=right, gt_disp=gt, occlusion=occlusion)


def corrupt_disparity_with_mask(
    gt: np.ndarray, spec: CorruptionSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Corrupted copy of ``gt`` and the boolean mask of the pixels that changed."""
    gt = np.asarray(gt, dtype=np.float64)
    out = gt.copy()
    mask = np.zeros(gt.shape, dtype=bool)
    h, w = gt.shape
    rng = _rng(spec.seed)

    placed = 0
    while placed < spec.blob_count or mask.mean() < spec.blob_fraction:
        if placed >= MAX_BLOBS:
            logger.warning(f"Stopped after {MAX_BLOBS} blobs at coverage {mask.mean():.3f}")
            break
        cy = rng.integers(0, h)
        cx = rng.integers(0, w)
        radius = rng.integers(1, spec.blob_radius + 1)
        sign = 1.0 if rng.random() < 0.5 else -1.0
        disk = _disk(gt.shape, cy, cx, radius)
        out[disk] = gt[disk] + sign * spec.blob_magnitude
        mask |= disk
        placed += 1

    if spec.region_fraction > 0:
        side = math.sqrt(spec.region_fraction)
        rh = min(h, max(1, int(round(h * side))))
        rw = min(w, max(1, int(round(w * side))))
        top = int(rng.integers(0, h - rh + 1))
        left = int(rng.integers(0, w - rw + 1))
        out[top : top + rh, left : left + rw] = gt.mean() + spec.region_offset
        mask[top : top + rh, left : left + rw] = True

    return out, mask


def corrupt_disparity(gt: np.ndarray, spec: CorruptionSpec) -> np.ndarray:
    """Copy of ``gt`` with blob outliers and an optional wrong region."""
    return corrupt_disparity_with_mask(gt, spec)[0]


def _candidates(search_range: int):
    yield 0
    for k in range(1, search_range + 1):
        yield -k
        yield k


def brute_force_match(
    left: np.ndarray, right: np.ndarray, search_range: int, eps_desc: float = 1e-6
) -> np.ndarray:
    """Exhaustive integer search minimizing the squared descriptor residual.

    Candidates are visited in order of increasing ``|u|`` and only a strictly
    lower cost replaces the current best, so ties keep the smaller shift.
    """
    left = as_gray(left)
    right = as_gray(right)
    require_same_size(left, right, "left and right images")
    if search_range < 0:
        raise InvalidInputError("search_range must be non-negative")
    src = descriptor_field(left, eps_desc)
    tgt = descriptor_field(right, eps_desc)
    h, w = left.shape

    best = np.zeros((h, w))
    best_cost = np.full((h, w), np.inf)
    for u in _candidates(int(search_range)):
        cost = np.full((h, w), np.inf)
        lo, hi = max(0, -u), min(w, w - u)
        if lo < hi:
            cost[:, lo:hi] = np.sum((tgt[:, lo + u : hi + u] - src[:, lo:hi]) ** 2, axis=2)
        better = cost < best_cost
        best[better] = u
        best_cost[better] = cost[better]
    return best
