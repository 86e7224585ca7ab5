"""Image and mask handling: decoding, luminance, rescaling, cropping and
dense sampling grids."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

LUMA_WEIGHTS = (0.299, 0.587, 0.114)


class ImageFormatError(ValueError):
    """Raised when a file exists but cannot be decoded as an image."""


@dataclass(frozen=True)
class RasterImage:
    data: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) pixel array, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError("image must be non-empty")
        object.__setattr__(self, "data", np.ascontiguousarray(data, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GrayImage:
    data: np.ndarray  # (height, width) float64 in [0, 1]

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.size == 0:
            raise ValueError(f"expected non-empty (H, W) array, got {data.shape}")
        if not np.all((data >= 0.0) & (data <= 1.0)):
            raise ValueError("luminance values must lie in [0, 1]")
        object.__setattr__(self, "data", np.ascontiguousarray(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ForegroundMask:
    """Binary foreground flags. An all-background mask is representable
    (it yields empty grids); operations that need foreground check for it."""

    data: np.ndarray  # (height, width) bool

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2 or data.size == 0:
            raise ValueError(f"expected non-empty (H, W) array, got {data.shape}")
        object.__setattr__(self, "data", np.ascontiguousarray(data != 0))

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
    def full(cls, height: int, width: int) -> "ForegroundMask":
        return cls(np.ones((height, width), dtype=bool))


@dataclass(frozen=True)
class SamplingGrid:
    step: int
    scales: tuple[int, ...]
    keypoints: np.ndarray  # (N, 3) int: x, y, scale index

    def __len__(self):
        return len(self.keypoints)


def _open(path) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    return img


def load_image(path) -> RasterImage:
    img = _open(path)
    return RasterImage(np.asarray(img.convert("RGB")))


def load_mask(path) -> ForegroundMask:
    """Single-channel mask file; any nonzero value is foreground."""
    img = _open(path)
    if img.mode not in ("L", "1", "P", "I", "I;16"):
        img = img.convert("L")
    return ForegroundMask(np.asarray(img) != 0)


def save_image(image: RasterImage, path) -> None:
    Image.fromarray(image.data, mode="RGB").save(path)


def save_mask(mask: ForegroundMask, path) -> None:
    Image.fromarray(mask.data.astype(np.uint8) * 255, mode="L").save(path)


def to_grayscale(image: RasterImage) -> GrayImage:
    rgb = image.data.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    lum = (r * rgb[..., 0] + g * rgb[..., 1] + b * rgb[..., 2]) / 255.0
    return GrayImage(np.clip(lum, 0.0, 1.0))


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    # pixel-centre alignment; identity when n_out == n_in
    scale = n_in / n_out
    return (np.arange(n_out) + 0.5) * scale - 0.5


def _bilinear_axis(n_out, n_in):
    pos = np.clip(_source_coords(n_out, n_in), 0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = pos - lo
    return lo, hi, frac


def resize_to_height(image: RasterImage, mask: ForegroundMask,
                     target_height: int) -> tuple[RasterImage, ForegroundMask]:
    """Rescale image (bilinear) and mask (nearest) to ``target_height``,
    preserving the aspect ratio."""
    if target_height < 1:
        raise ValueError("target_height must be >= 1")
    if mask.shape != image.data.shape[:2]:
        raise ValueError("mask and image dimensions differ")
    h, w = image.height, image.width
    new_w = max(1, int(np.floor(w * target_height / h + 0.5)))
    new_h = target_height
    if (new_h, new_w) == (h, w):
        return image, mask

    y0, y1, fy = _bilinear_axis(new_h, h)
    x0, x1, fx = _bilinear_axis(new_w, w)
    src = image.data.astype(np.float64)
    fy = fy[:, None, None]
    fx = fx[None, :, None]
    top = src[y0][:, x0] + fx * (src[y0][:, x1] - src[y0][:, x0])
    bot = src[y1][:, x0] + fx * (src[y1][:, x1] - src[y1][:, x0])
    out = top + fy * (bot - top)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)

    ny = np.clip(np.floor((np.arange(new_h) + 0.5) * h / new_h), 0, h - 1).astype(int)
    nx = np.clip(np.floor((np.arange(new_w) + 0.5) * w / new_w), 0, w - 1).astype(int)
    m = mask.data.astype(np.float64)[ny][:, nx] >= 0.5
    return RasterImage(out), ForegroundMask(m)


def crop_to_mask(image: RasterImage, mask: ForegroundMask) -> tuple[RasterImage, ForegroundMask]:
    if mask.shape != image.data.shape[:2]:
        raise ValueError("mask and image dimensions differ")
    rows = np.flatnonzero(mask.data.any(axis=1))
    cols = np.flatnonzero(mask.data.any(axis=0))
    if rows.size == 0:
        raise ValueError("mask has no foreground pixels")
    ys = slice(rows[0], rows[-1] + 1)
    xs = slice(cols[0], cols[-1] + 1)
    return RasterImage(image.data[ys, xs]), ForegroundMask(mask.data[ys, xs])


def integral_image(values: np.ndarray) -> np.ndarray:
    """Summed-area table with a leading zero row/column."""
    out = np.zeros((values.shape[0] + 1, values.shape[1] + 1) + values.shape[2:],
                   dtype=np.result_type(values.dtype, np.int64))
    out[1:, 1:] = values.cumsum(axis=0).cumsum(axis=1)
    return out


def patch_bounds(x, y, size, width, height):
    """Clipped [x0, x1) x [y0, y1) of the ``size`` square centred at (x, y).

    The unclipped patch starts at ``x - size // 2``; works on arrays too.
    """
    x0 = np.asarray(x) - size // 2
    y0 = np.asarray(y) - size // 2
    return (np.clip(x0, 0, width), np.clip(x0 + size, 0, width),
            np.clip(y0, 0, height), np.clip(y0 + size, 0, height))


def build_grid(mask: ForegroundMask, step: int, scales, coverage_threshold: float = 0.5) -> SamplingGrid:
    if step < 1:
        raise ValueError("step must be >= 1")
    scales = tuple(int(s) for s in scales)
    if not scales:
        raise ValueError("at least one scale is required")
    if any(s < 1 for s in scales):
        raise ValueError("patch sizes must be positive")
    if any(b <= a for a, b in zip(scales, scales[1:])):
        raise ValueError("scales must be strictly increasing")

    h, w = mask.shape
    table = integral_image(mask.data.astype(np.int64))
    ys, xs = np.meshgrid(np.arange(0, h, step), np.arange(0, w, step), indexing="ij")
    xs, ys = xs.ravel(), ys.ravel()

    keep = []
    for s in scales:
        x0, x1, y0, y1 = patch_bounds(xs, ys, s, w, h)
        area = (x1 - x0) * (y1 - y0)
        fg = table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]
        # fg / area >= t, without dividing; near-ties are settled exactly
        target = coverage_threshold * area
        ok = fg >= target
        for i in np.flatnonzero(np.abs(fg - target) <= 1e-9 * np.maximum(area, 1)):
            ok[i] = Fraction(int(fg[i])) >= Fraction(coverage_threshold) * int(area[i])
        keep.append((area > 0) & ok)
    keep = np.stack(keep, axis=1)  # (lattice points, scales), lattice row-major by y then x

    pt, sc = np.nonzero(keep)
    keypoints = np.stack([xs[pt], ys[pt], sc], axis=1).astype(np.int64)
    return SamplingGrid(step=step, scales=scales, keypoints=keypoints.reshape(-1, 3))
