"""Dense colour features: patch-mean RGB and 11-term Color Name vectors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptors import DescriptorSet
from .imaging import ForegroundMask, RasterImage, build_grid, integral_image, patch_bounds

COLOR_NAMES = ("black", "blue", "brown", "grey", "green", "orange",
               "pink", "purple", "red", "white", "yellow")

PROTOTYPES = {
    "black": (0, 0, 0),
    "blue": (0, 0, 255),
    "brown": (139, 69, 19),
    "grey": (128, 128, 128),
    "green": (0, 128, 0),
    "orange": (255, 165, 0),
    "pink": (255, 192, 203),
    "purple": (128, 0, 128),
    "red": (255, 0, 0),
    "white": (255, 255, 255),
    "yellow": (255, 255, 0),
}

COLOR_SCALES = (8, 16)
FALLBACK_TAU = 60.0


@dataclass(frozen=True)
class ColorNameTable:
    bins_per_channel: int
    table: np.ndarray  # (bins**3, 11), rows indexed r * bins**2 + g * bins + b

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        b = self.bins_per_channel
        if b < 1 or table.shape != (b ** 3, len(COLOR_NAMES)):
            raise ValueError(f"table must have shape ({b ** 3}, 11), got {table.shape}")
        if np.any(table < 0) or np.any(np.abs(table.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("every table row must be a probability distribution")
        object.__setattr__(self, "table", table)

    def bin_index(self, rgb) -> np.ndarray:
        """Row index for 8-bit (or real-valued, in [0, 255]) colours."""
        rgb = np.asarray(rgb, dtype=np.float64)
        b = self.bins_per_channel
        q = np.clip(np.floor(rgb * b / 256.0), 0, b - 1).astype(np.int64)
        return (q[..., 0] * b + q[..., 1]) * b + q[..., 2]

    def lookup(self, rgb) -> np.ndarray:
        return self.table[self.bin_index(rgb)]


def fallback_table(bins_per_channel: int = 32, tau: float = FALLBACK_TAU) -> ColorNameTable:
    """Soft nearest-prototype table evaluated at each bin's centre colour."""
    b = bins_per_channel
    centers = (np.arange(b) + 0.5) * (256.0 / b) - 0.5
    r, g, bl = np.meshgrid(centers, centers, centers, indexing="ij")
    rgb = np.stack([r.ravel(), g.ravel(), bl.ravel()], axis=1)
    protos = np.array([PROTOTYPES[name] for name in COLOR_NAMES], dtype=np.float64)
    d2 = ((rgb[:, None, :] - protos[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / (2 * tau * tau)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    p /= p.sum(axis=1, keepdims=True)
    return ColorNameTable(b, p)


def read_cn_table(path) -> ColorNameTable:
    lines = Path(path).read_text().split("\n")
    header = lines[0].split()
    if len(header) != 2 or header[0] != "CN":
        raise ValueError(f"{path}: expected header 'CN <bins_per_channel>'")
    bins = int(header[1])
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != bins ** 3:
        raise ValueError(f"{path}: expected {bins ** 3} rows, found {len(rows)}")
    return ColorNameTable(bins, np.array(rows, dtype=np.float64))


def write_cn_table(table: ColorNameTable, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"CN {table.bins_per_channel}\n")
        for row in table.table:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


_DEFAULT_TABLE = None


def default_table() -> ColorNameTable:
    global _DEFAULT_TABLE
    if _DEFAULT_TABLE is None:
        _DEFAULT_TABLE = fallback_table()
    return _DEFAULT_TABLE


def rgb_to_cn(rgb, table: ColorNameTable | None = None) -> np.ndarray:
    table = table or default_table()
    return table.lookup(rgb)


def patch_means(image: RasterImage, xs, ys, size: int) -> np.ndarray:
    """Mean RGB over each clipped ``size`` square; exact integer sums."""
    table = integral_image(image.data.astype(np.int64))
    x0, x1, y0, y1 = patch_bounds(xs, ys, size, image.width, image.height)
    sums = table[y1, x1] - table[y0, x1] - table[y1, x0] + table[y0, x0]
    area = ((x1 - x0) * (y1 - y0))[:, None]
    return sums / area


def dense_color(image: RasterImage, mask: ForegroundMask, descriptor: str = "cn",
                step: int = 5, scale_count: int = 2, scales=None,
                table: ColorNameTable | None = None,
                coverage_threshold: float = 0.5) -> DescriptorSet:
    if descriptor not in ("cn", "rgb"):
        raise ValueError(f"unknown colour descriptor {descriptor!r}")
    if mask.shape != image.data.shape[:2]:
        raise ValueError("mask and image dimensions differ")
    if scales is None:
        if scale_count < 1:
            raise ValueError("scale_count must be >= 1")
        scales = tuple(8 * 2 ** k for k in range(scale_count))
    scales = tuple(sorted(int(s) for s in scales))
    dim = len(COLOR_NAMES) if descriptor == "cn" else 3
    grid = build_grid(mask, step, scales, coverage_threshold)
    kp = grid.keypoints
    if len(kp) == 0:
        return DescriptorSet.empty(dim, descriptor)

    means = np.empty((len(kp), 3))
    for si, s in enumerate(scales):
        rows = np.flatnonzero(kp[:, 2] == si)
        if rows.size:
            means[rows] = patch_means(image, kp[rows, 0], kp[rows, 1], s)
    vectors = rgb_to_cn(means, table) if descriptor == "cn" else means / 255.0
    return DescriptorSet(vectors, positions=kp[:, :2], scale_index=kp[:, 2],
                         descriptor_id=descriptor, meta={"scales": scales})
