"""Image containers and the low-level operations every refinement stage shares.

Images are NumPy ``float64`` arrays of shape ``(H, W)`` or ``(H, W, 3)`` with
intensities in [0, 1]. Disparity maps, confidence maps and masks are ``(H, W)``
arrays. A disparity ``u`` follows the convention that left pixel ``x`` matches
right-image column ``x + u(x)``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from errors import InvalidInputError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])
BLUR_SIGMA = 0.8
BLUR_TAPS = 5
MIN_PYRAMID_SIDE = 8
MIN_DOWNSAMPLE_SIDE = 6


def require_channels(img: np.ndarray, channels: int, name: str = "image") -> None:
    """Raise InvalidInputError unless ``img`` has the given channel count."""
    if channels == 1:
        ok = img.ndim == 2
    else:
        ok = img.ndim == 3 and img.shape[2] == channels
    if not ok:
        raise InvalidInputError(
            f"{name} must have {channels} channel(s), got array of shape {img.shape}"
        )


def require_same_size(a: np.ndarray, b: np.ndarray, names: str = "inputs") -> None:
    """Raise InvalidInputError unless both arrays share height and width."""
    if a.shape[:2] != b.shape[:2]:
        raise InvalidInputError(f"{names} differ in size: {a.shape[:2]} vs {b.shape[:2]}")


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an RGB image to ITU-R 601 luma in [0, 1]."""
    require_channels(img, 3)
    gray = np.asarray(img, dtype=np.float64) @ LUMA_WEIGHTS
    return np.clip(gray, 0.0, 1.0)


def as_gray(img: np.ndarray) -> np.ndarray:
    """Return a single-channel float image, converting RGB input to luma."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return to_grayscale(img)


def saturation_channel(img: np.ndarray) -> np.ndarray:
    """HSV saturation ``(max - min) / max``, 0 where ``max`` is 0."""
    require_channels(img, 3)
    img = np.asarray(img, dtype=np.float64)
    hi = img.max(axis=2)
    lo = img.min(axis=2)
    sat = np.divide(hi - lo, hi, out=np.zeros_like(hi), where=hi > 0)
    return np.clip(sat, 0.0, 1.0)


def value_channel(img: np.ndarray) -> np.ndarray:
    """HSV value, the per-pixel channel maximum."""
    require_channels(img, 3)
    return np.clip(np.asarray(img, dtype=np.float64).max(axis=2), 0.0, 1.0)


def gaussian_kernel(sigma: float = BLUR_SIGMA, taps: int = BLUR_TAPS) -> np.ndarray:
    """Normalized 1-D Gaussian kernel with an odd number of taps."""
    half = taps // 2
    x = np.arange(-half, half + 1, dtype=np.float64)
    kernel = np.exp(-(x**2) / (2.0 * sigma**2))
    return kernel / kernel.sum()


def blur(img: np.ndarray, sigma: float = BLUR_SIGMA, taps: int = BLUR_TAPS) -> np.ndarray:
    """Separable Gaussian blur over the two spatial axes with reflected borders."""
    kernel = gaussian_kernel(sigma, taps)
    out = ndimage.correlate1d(np.asarray(img, dtype=np.float64), kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def _sample_grid(shape: tuple[int, int], new_shape: tuple[int, int]):
    h, w = shape
    new_h, new_w = new_shape
    rows = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    cols = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    rows = np.clip(rows, 0, h - 1)
    cols = np.clip(cols, 0, w - 1)
    return np.meshgrid(rows, cols, indexing="ij")


def resize_bilinear(img: np.ndarray, new_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample to ``new_shape`` (rows, cols) using pixel-center alignment."""
    img = np.asarray(img, dtype=np.float64)
    new_shape = (int(new_shape[0]), int(new_shape[1]))
    if img.shape[:2] == new_shape:
        return img.copy()
    grid_r, grid_c = _sample_grid(img.shape[:2], new_shape)
    if img.ndim == 2:
        return ndimage.map_coordinates(img, [grid_r, grid_c], order=1, mode="nearest")
    out = np.empty(new_shape + img.shape[2:], dtype=np.float64)
    for c in range(img.shape[2]):
        out[:, :, c] = ndimage.map_coordinates(
            img[:, :, c], [grid_r, grid_c], order=1, mode="nearest"
        )
    return out


def resize_nearest(img: np.ndarray, new_shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour resample, used for masks so they stay binary."""
    img = np.asarray(img)
    grid_r, grid_c = _sample_grid(img.shape[:2], new_shape)
    return img[np.rint(grid_r).astype(int), np.rint(grid_c).astype(int)]


def half_shape(shape: tuple[int, ...]) -> tuple[int, int]:
    return math.ceil(shape[0] / 2), math.ceil(shape[1] / 2)


def downsample_half(img: np.ndarray) -> np.ndarray:
    """Blur (sigma 0.8, 5 taps) then resample to ``ceil(dim / 2)``."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[0] < MIN_DOWNSAMPLE_SIDE or img.shape[1] < MIN_DOWNSAMPLE_SIDE:
        raise InvalidInputError(
            f"image of size {img.shape[:2]} is too small to downsample "
            f"(needs at least {MIN_DOWNSAMPLE_SIDE}x{MIN_DOWNSAMPLE_SIDE})"
        )
    return resize_bilinear(blur(img), half_shape(img.shape))


def downsample_disparity(disp: np.ndarray) -> np.ndarray:
    """Half-resolution disparity: spatial downsample with values scaled by 0.5."""
    return downsample_half(disp) * 0.5


def upsample_disparity(disp: np.ndarray, new_shape: tuple[int, int]) -> np.ndarray:
    """Bilinear upsample to ``new_shape`` with values scaled by 2."""
    return resize_bilinear(disp, new_shape) * 2.0


@dataclass
class Pyramid:
    """Image pyramid, level 0 finest, each level half the previous one."""

    levels: list[np.ndarray]
    requested_levels: int = 0
    shapes: list[tuple[int, int]] = field(init=False)

    def __post_init__(self):
        self.shapes = [lvl.shape[:2] for lvl in self.levels]

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, index: int) -> np.ndarray:
        return self.levels[index]

    @property
    def coarsest(self) -> np.ndarray:
        return self.levels[-1]


def max_pyramid_levels(shape: tuple[int, ...]) -> int:
    """Largest level count whose coarsest level is still at least 8x8."""
    count = 1
    h, w = shape[:2]
    while True:
        h, w = math.ceil(h / 2), math.ceil(w / 2)
        if h < MIN_PYRAMID_SIDE or w < MIN_PYRAMID_SIDE:
            return count
        count += 1


def build_pyramid(img: np.ndarray, n: int) -> Pyramid:
    """Build an ``n``-level pyramid, reducing ``n`` when the image is too small."""
    if n < 1:
        raise InvalidInputError(f"pyramid needs at least one level, got {n}")
    img = np.asarray(img, dtype=np.float64)
    allowed = max_pyramid_levels(img.shape)
    if n > allowed:
        logger.warning(
            f"Pyramid reduced from {n} to {allowed} levels for image of size {img.shape[:2]}"
        )
    levels = [img]
    for _ in range(min(n, allowed) - 1):
        levels.append(downsample_half(levels[-1]))
    return Pyramid(levels=levels, requested_levels=n)


def warp_horizontal(img: np.ndarray, disp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample ``img`` at ``(x + u(x, y), y)`` with linear interpolation.

    Returns the warped image and a validity mask that is 1 where the sample
    position lies inside ``[0, W - 1]``; invalid samples are set to 0.
    """
    img = np.asarray(img, dtype=np.float64)
    disp = np.asarray(disp, dtype=np.float64)
    require_channels(disp, 1, "disparity")
    require_same_size(img, disp, "image and disparity")
    h, w = disp.shape

    xs = np.arange(w, dtype=np.float64)[np.newaxis, :] + disp
    valid = (xs >= 0.0) & (xs <= w - 1)
    xs = np.clip(xs, 0.0, w - 1)
    x0 = np.floor(xs).astype(np.intp)
    if w > 1:
        np.minimum(x0, w - 2, out=x0)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = xs - x0
    rows = np.arange(h)[:, np.newaxis]

    if img.ndim == 3:
        frac = frac[:, :, np.newaxis]
    out = (1.0 - frac) * img[rows, x0] + frac * img[rows, x1]
    mask = valid.astype(np.float64)
    if img.ndim == 3:
        out *= mask[:, :, np.newaxis]
    else:
        out *= mask
    return out, mask
