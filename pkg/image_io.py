"""Reading and writing disparity maps, images, masks and JSON documents.

Disparity and confidence maps use PFM; colour images, masks and rendered
maps use PNG through OpenCV.
"""

import json
import re
from pathlib import Path
from typing import Any, NamedTuple

import cv2
import numpy as np

from errors import FormatError, InvalidInputError

PFM_DIMS = re.compile(rb"^\s*(\d+)\s+(\d+)\s*$")
RASTER_SCALES = {np.dtype(np.uint8): 255.0, np.dtype(np.uint16): 65535.0}


def _read_header_line(data: bytes, offset: int) -> tuple[bytes, int]:
    end = data.find(b"\n", offset)
    if end < 0:
        raise FormatError("PFM header line is not terminated", offset)
    return data[offset:end].strip(), end + 1


class PfmHeader(NamedTuple):
    channels: int
    width: int
    height: int
    scale: float
    payload_offset: int

    @property
    def dtype(self) -> np.dtype:
        # negative scale means little-endian
        return np.dtype("<f4") if self.scale < 0 else np.dtype(">f4")


def _parse_pfm_header(data: bytes) -> PfmHeader:
    magic, offset = _read_header_line(data, 0)
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise FormatError(f"not a PFM file: bad magic {magic[:8]!r}", 0)

    dims_at = offset
    dims, offset = _read_header_line(data, offset)
    match = PFM_DIMS.match(dims)
    if not match:
        raise FormatError(f"malformed PFM dimensions {dims[:32]!r}", dims_at)
    width, height = int(match.group(1)), int(match.group(2))
    if width < 1 or height < 1:
        raise FormatError(f"invalid PFM size {width}x{height}", dims_at)

    scale_at = offset
    scale_line, offset = _read_header_line(data, offset)
    try:
        scale = float(scale_line)
    except ValueError:
        raise FormatError(f"malformed PFM scale {scale_line[:32]!r}", scale_at) from None
    if scale == 0.0 or not np.isfinite(scale):
        raise FormatError(f"invalid PFM scale {scale}", scale_at)
    return PfmHeader(channels, width, height, scale, offset)


def read_pfm_header(path: str | Path) -> PfmHeader:
    """Parse only the header of a PFM file."""
    with open(path, "rb") as f:
        head = f.read(256)
    return _parse_pfm_header(head)


def read_pfm(path: str | Path, channels: int | None = None) -> np.ndarray:
    """Load a PFM file as ``float64`` with rows top-down.

    Values are multiplied by ``|scale|``; pass the header's scale back to
    ``write_pfm`` to reproduce the original payload.

    Args:
        path: File to read
        channels: Expected channel count (1 or 3); None accepts either

    Returns:
        ``(H, W)`` array for ``Pf`` files, ``(H, W, 3)`` for ``PF`` files
    """
    data = Path(path).read_bytes()
    header = _parse_pfm_header(data)
    if channels is not None and channels != header.channels:
        raise FormatError(f"expected a {channels}-channel PFM, {path} has {header.channels}", 0)

    count = header.width * header.height * header.channels
    needed = count * header.dtype.itemsize
    offset = header.payload_offset
    if len(data) - offset < needed:
        raise FormatError(
            f"truncated PFM payload: need {needed} bytes, found {len(data) - offset}",
            len(data),
        )
    values = np.frombuffer(data, dtype=header.dtype, count=count, offset=offset)
    if header.channels == 1:
        shape = (header.height, header.width)
    else:
        shape = (header.height, header.width, 3)
    out = np.flipud(values.reshape(shape)).astype(np.float64)
    if abs(header.scale) != 1.0:
        out *= abs(header.scale)
    return out


def write_pfm(path: str | Path, buf: np.ndarray, scale: float = -1.0) -> None:
    """Write a PFM with rows bottom-up.

    The sign of ``scale`` picks the byte order (negative is little-endian)
    and values are stored divided by ``|scale|``.
    """
    if scale == 0.0 or not np.isfinite(scale):
        raise InvalidInputError(f"invalid PFM scale {scale}")
    buf = np.asarray(buf)
    if buf.ndim == 2:
        magic = b"Pf"
    elif buf.ndim == 3 and buf.shape[2] == 3:
        magic = b"PF"
    else:
        raise InvalidInputError(f"PFM holds 1 or 3 channels, got shape {buf.shape}")
    height, width = buf.shape[:2]
    if abs(scale) != 1.0:
        buf = np.asarray(buf, dtype=np.float64) / abs(scale)
    dtype = "<f4" if scale < 0 else ">f4"
    payload = np.ascontiguousarray(np.flipud(buf), dtype=dtype).tobytes()
    header = magic + b"\n" + f"{width} {height}\n{float(scale)}\n".encode("ascii")
    Path(path).write_bytes(header + payload)


def read_raster(path: str | Path) -> np.ndarray:
    """Load an 8- or 16-bit PNG as an RGB ``float64`` image in [0, 1].

    Grayscale files are replicated to three channels; alpha is dropped.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"image not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot decode image {path}")
    scale = RASTER_SCALES.get(raw.dtype)
    if scale is None:
        raise FormatError(f"unsupported bit depth {raw.dtype} in {path}")
    if raw.ndim == 2:
        rgb = np.repeat(raw[:, :, np.newaxis], 3, axis=2)
    elif raw.shape[2] == 4:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGRA2RGB)
    elif raw.shape[2] == 3:
        rgb = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    else:
        raise FormatError(f"unsupported channel count {raw.shape[2]} in {path}")
    return rgb.astype(np.float64) / scale


def to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png8(path: str | Path, img: np.ndarray) -> None:
    """Write a [0, 1] image as 8-bit PNG (RGB input is stored as such)."""
    data = to_uint8(img)
    if data.ndim == 3:
        data = cv2.cvtColor(data, cv2.COLOR_RGB2BGR)
    if not cv2.imwrite(str(path), data):
        raise OSError(f"could not write {path}")


def read_mask(path: str | Path) -> np.ndarray:
    """Boolean mask, True where the stored pixel is nonzero in any channel."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mask not found: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot decode mask {path}")
    return raw.any(axis=2) if raw.ndim == 3 else raw != 0


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    if not cv2.imwrite(str(path), np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8)):
        raise OSError(f"could not write {path}")


def read_disparity(path: str | Path) -> np.ndarray:
    """Disparity from PFM, or from a 16-bit PNG holding ``d * 256``."""
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return read_pfm(path, channels=1)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise FormatError(f"cannot decode disparity {path}")
    if raw.dtype != np.uint16 or raw.ndim != 2:
        raise FormatError(f"disparity PNG must be single-channel 16-bit, got {raw.dtype} {raw.shape}")
    return raw.astype(np.float64) / 256.0


def read_json(path: str | Path) -> Any:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(f"invalid JSON in {path}: {e.msg}", e.pos) from e


def write_json(path: str | Path, data: Any) -> None:
    with open(path, "w") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
