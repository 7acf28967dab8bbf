"""Image containers, PNM I/O and the preprocessing steps applied to face crops."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class GrayImage:
    """Real-valued intensities in [0, 255], stored as a read-only (height, width) array."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"GrayImage needs a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("GrayImage values must be finite")
        if arr.min() < 0 or arr.max() > 255:
            raise ValueError(f"GrayImage values must lie in [0, 255], got [{arr.min()}, {arr.max()}]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @classmethod
    def clipped(cls, arr) -> "GrayImage":
        return cls(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 255.0))

    def __eq__(self, other) -> bool:
        return isinstance(other, GrayImage) and np.array_equal(self.data, other.data)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class RgbImage:
    """(height, width, 3) channels in [0, 255]."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3 or arr.shape[2] != 3 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError(f"RgbImage needs a (h, w, 3) array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or arr.min() < 0 or arr.max() > 255:
            raise ValueError("RgbImage channels must be finite and within [0, 255]")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CropRect:
    x: int
    y: int
    w: int
    h: int

    def inside(self, width: int, height: int) -> bool:
        return self.x >= 0 and self.y >= 0 and self.w >= 1 and self.h >= 1 and (
            self.x + self.w <= width and self.y + self.h <= height
        )


def rgb_to_gray(img: RgbImage) -> GrayImage:
    return GrayImage(img.data.sum(axis=2) / 3.0)


def median_filter(img: GrayImage, radius: int = 1) -> GrayImage:
    """Median over a (2r+1)^2 window with edge replication; radius 0 is the identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return img
    return GrayImage(ndimage.median_filter(img.data, size=2 * radius + 1, mode="nearest"))


def crop(img: GrayImage, rect: CropRect) -> GrayImage:
    if not rect.inside(img.width, img.height):
        raise ValueError(f"crop {rect} falls outside a {img.width}x{img.height} image")
    return GrayImage(img.data[rect.y : rect.y + rect.h, rect.x : rect.x + rect.w])


def _bilinear_axis(n_in: int, n_out: int):
    # pixel-centre alignment, coordinates clamped to the source extent
    pos = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def resize_to(img: GrayImage, w: int, h: int) -> GrayImage:
    """Bilinear resampling to ``w`` x ``h`` (pixel centres aligned)."""
    if w < 1 or h < 1:
        raise ValueError("target size must be >= 1")
    if (h, w) == img.shape:
        return img
    y0, y1, fy = _bilinear_axis(img.height, h)
    x0, x1, fx = _bilinear_axis(img.width, w)
    d = img.data
    top = d[y0][:, x0] * (1 - fx) + d[y0][:, x1] * fx
    bot = d[y1][:, x0] * (1 - fx) + d[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return GrayImage.clipped(out)


def preprocess(img: GrayImage | RgbImage, rect: CropRect | None = None, radius: int = 1,
               size: tuple[int, int] | None = (64, 64)) -> GrayImage:
    """Gray conversion, crop, median filtering and resize, in that order."""
    gray = rgb_to_gray(img) if isinstance(img, RgbImage) else img
    if rect is not None:
        gray = crop(gray, rect)
    gray = median_filter(gray, radius)
    if size is not None:
        gray = resize_to(gray, size[0], size[1])
    return gray


# ---------------------------------------------------------------------------
# PNM files


_PNM_TOKEN = re.compile(rb"(?:\s|#[^\n]*\n?)*([^\s#]+)")


def _pnm_header(raw: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        m = _PNM_TOKEN.match(raw, pos)
        if m is None:
            raise ValueError("truncated PNM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def read_pnm(path: str | os.PathLike) -> GrayImage | RgbImage:
    """Read a P2/P3/P5/P6 file; gray formats give GrayImage, colour formats RgbImage."""
    raw = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _pnm_header(raw, 4)
    w, h, maxval = int(w), int(h), int(maxval)
    channels = 3 if magic in (b"P3", b"P6") else 1
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported PNM magic {magic!r}")
    n = w * h * channels
    if magic in (b"P5", b"P6"):
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        start = pos + 1  # exactly one whitespace byte after maxval
        values = np.frombuffer(raw, dtype=dtype, count=n, offset=start).astype(np.float64)
    else:
        values = np.array(raw[pos:].split()[:n], dtype=np.float64)
        if values.size != n:
            raise ValueError(f"{path}: expected {n} samples, found {values.size}")
    values = values * (255.0 / maxval)
    if channels == 3:
        return RgbImage(values.reshape(h, w, 3))
    return GrayImage(values.reshape(h, w))


def write_pgm(path: str | os.PathLike, img: GrayImage, binary: bool = True) -> None:
    """Write 8-bit PGM; values are rounded to the nearest integer."""
    pixels = np.rint(img.data).astype(np.uint8)
    header = f"{'P5' if binary else 'P2'}\n{img.width} {img.height}\n255\n".encode()
    if binary:
        body = pixels.tobytes()
    else:
        body = "\n".join(" ".join(str(v) for v in row) for row in pixels).encode() + b"\n"
    atomic_write(path, header + body)


def write_ppm(path: str | os.PathLike, img: RgbImage) -> None:
    pixels = np.rint(img.data).astype(np.uint8)
    header = f"P6\n{img.width} {img.height}\n255\n".encode()
    atomic_write(path, header + pixels.tobytes())


def load_image(path: str | os.PathLike) -> GrayImage | RgbImage:
    """PNM natively; other raster formats through Pillow when it is installed."""
    suffix = Path(path).suffix.lower()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return read_pnm(path)
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValueError(f"{path}: only PNM is supported without Pillow") from exc
    with Image.open(path) as im:
        if im.mode in ("L", "I", "I;16", "F"):
            return GrayImage.clipped(np.asarray(im.convert("F"), dtype=np.float64))
        return RgbImage(np.asarray(im.convert("RGB"), dtype=np.float64))


def atomic_write(path: str | os.PathLike, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_bytes(payload)
    os.replace(tmp, path)
