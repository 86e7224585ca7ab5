"""Local binary pattern texture descriptors.

Codes use bilinear sampling on a circle of radius R with P points, bit k set
when the k-th neighbour is >= the centre (ties count as 1), k = 0 being the
least significant bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .imaging import ForegroundMask, GrayImage
from .shape import central_gradients

MAPPINGS = ("u2", "ri", "riu2")
VALID_PR = ((8, 1), (16, 2))
PRICO_OFFSETS = (2, 4)
GRADIENT_EPS = 1e-6


@dataclass(frozen=True)
class LbpSpec:
    P: int
    R: int
    mapping: str

    def __post_init__(self):
        if (self.P, self.R) not in VALID_PR:
            raise ValueError(f"(P, R) must be one of {VALID_PR}, got {(self.P, self.R)}")
        if self.mapping not in MAPPINGS:
            raise ValueError(f"mapping must be one of {MAPPINGS}, got {self.mapping!r}")

    @property
    def name(self) -> str:
        return f"lbp-{self.mapping}-{self.P}-{self.R}"


BASE_SPECS = tuple(LbpSpec(P, R, m) for P, R in VALID_PR for m in MAPPINGS)


@dataclass(frozen=True)
class MappingTable:
    P: int
    kind: str
    bins: int
    code_to_bin: np.ndarray

    def __call__(self, codes):
        return self.code_to_bin[codes]


def _rotate_right(codes: np.ndarray, P: int, k: int = 1) -> np.ndarray:
    mask = (1 << P) - 1
    return ((codes >> k) | (codes << (P - k))) & mask


def _popcount(codes: np.ndarray, P: int) -> np.ndarray:
    return sum((codes >> k) & 1 for k in range(P))


def transitions(codes, P: int) -> np.ndarray:
    """Number of circular 0/1 changes in each P-bit code."""
    codes = np.asarray(codes, dtype=np.int64)
    return _popcount(codes ^ _rotate_right(codes, P), P)


@lru_cache(maxsize=None)
def build_mapping(P: int, kind: str) -> MappingTable:
    if P not in (8, 16):
        raise ValueError(f"P must be 8 or 16, got {P}")
    if kind not in MAPPINGS:
        raise ValueError(f"unknown mapping {kind!r}")
    codes = np.arange(1 << P, dtype=np.int64)
    uniform = transitions(codes, P) <= 2
    if kind == "u2":
        table = np.full(codes.shape, uniform.sum(), dtype=np.int64)
        table[uniform] = np.arange(uniform.sum())
    elif kind == "riu2":
        table = np.where(uniform, _popcount(codes, P), P + 1)
    else:
        smallest = codes.copy()
        rotated = codes
        for _ in range(P - 1):
            rotated = _rotate_right(rotated, P)
            smallest = np.minimum(smallest, rotated)
        reps = np.unique(smallest)
        table = np.searchsorted(reps, smallest)
    table = table.astype(np.int64)
    table.setflags(write=False)
    return MappingTable(P, kind, int(table.max()) + 1, table)


def _neighbour_offsets(P: int, R: float):
    angles = 2 * np.pi * np.arange(P) / P
    # rounding snaps the axis-aligned samples onto exact pixel positions
    dx = np.round(R * np.cos(angles), 12)
    dy = np.round(-R * np.sin(angles), 12)
    return dx, dy


def _sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Bilinear value at (xs + dx, ys + dy); exact for constant images."""
    fx0 = np.floor(dx)
    fy0 = np.floor(dy)
    fx = dx - fx0
    fy = dy - fy0
    x0 = xs + int(fx0)
    y0 = ys + int(fy0)
    x1 = x0 + (1 if fx > 0 else 0)
    y1 = y0 + (1 if fy > 0 else 0)
    a = img[y0, x0]
    b = img[y0, x1]
    c = img[y1, x0]
    d = img[y1, x1]
    return a + fx * (b - a) + fy * (c - a) + fx * fy * (a - b - c + d)


def lbp_code(gray: GrayImage, center, P: int, R: int) -> int:
    x, y = center
    img = gray.data
    if not (R <= x < img.shape[1] - R and R <= y < img.shape[0] - R):
        raise ValueError(f"centre {center} lacks a full radius-{R} neighbourhood")
    xs = np.array([x])
    ys = np.array([y])
    code = 0
    for k, (dx, dy) in enumerate(zip(*_neighbour_offsets(P, R))):
        if _sample(img, ys, xs, dx, dy)[0] >= img[y, x]:
            code |= 1 << k
    return code


def lbp_code_map(gray: GrayImage, P: int, R: int) -> np.ndarray:
    """Codes at every pixel with a full neighbourhood; -1 elsewhere."""
    img = gray.data
    h, w = img.shape
    out = np.full((h, w), -1, dtype=np.int64)
    if h <= 2 * R or w <= 2 * R:
        return out
    ys, xs = np.mgrid[R:h - R, R:w - R]
    center = img[ys, xs]
    codes = np.zeros(ys.shape, dtype=np.int64)
    for k, (dx, dy) in enumerate(zip(*_neighbour_offsets(P, R))):
        codes |= (_sample(img, ys, xs, dx, dy) >= center).astype(np.int64) << k
    out[R:h - R, R:w - R] = codes
    return out


def _normalized(counts: np.ndarray) -> np.ndarray:
    total = counts.sum()
    if total == 0:
        return np.zeros(counts.shape, dtype=np.float64)
    return counts / total


def lbp_counts(gray: GrayImage, mask: ForegroundMask, spec: LbpSpec) -> np.ndarray:
    if mask.shape != gray.data.shape:
        raise ValueError("mask and image dimensions differ")
    mapping = build_mapping(spec.P, spec.mapping)
    codes = lbp_code_map(gray, spec.P, spec.R)
    valid = (codes >= 0) & mask.data
    return np.bincount(mapping(codes[valid]), minlength=mapping.bins)


def lbp_histogram(gray: GrayImage, mask: ForegroundMask, spec: LbpSpec) -> np.ndarray:
    return _normalized(lbp_counts(gray, mask, spec))


def mslbp(gray: GrayImage, mask: ForegroundMask) -> np.ndarray:
    return np.concatenate([lbp_histogram(gray, mask, LbpSpec(8, 1, "u2")),
                           lbp_histogram(gray, mask, LbpSpec(16, 2, "u2"))])


def gradient_directions(gray: np.ndarray) -> np.ndarray:
    gx, gy = central_gradients(gray)
    theta = np.arctan2(gy, gx)
    theta[np.hypot(gx, gy) < GRADIENT_EPS] = 0.0
    return theta


def prico_counts(gray: GrayImage, mask: ForegroundMask, offsets=PRICO_OFFSETS) -> np.ndarray:
    """Raw (len(offsets), 590) co-occurrence counts."""
    if mask.shape != gray.data.shape:
        raise ValueError("mask and image dimensions differ")
    u2 = build_mapping(8, "u2")
    riu2 = build_mapping(8, "riu2")
    codes = lbp_code_map(gray, 8, 1)
    h, w = codes.shape
    theta = gradient_directions(gray.data)
    ys, xs = np.nonzero((codes >= 0) & mask.data)
    th = theta[ys, xs]
    p_bins = riu2(codes[ys, xs])
    out = np.zeros((len(offsets), u2.bins * riu2.bins), dtype=np.int64)
    for i, d in enumerate(offsets):
        qx = xs + np.rint(d * np.cos(th)).astype(np.int64)
        qy = ys + np.rint(d * np.sin(th)).astype(np.int64)
        inside = (qx >= 0) & (qx < w) & (qy >= 0) & (qy < h)
        q_codes = np.full(xs.shape, -1, dtype=np.int64)
        q_codes[inside] = codes[qy[inside], qx[inside]]
        ok = q_codes >= 0
        joint = u2(q_codes[ok]) * riu2.bins + p_bins[ok]
        out[i] = np.bincount(joint, minlength=out.shape[1])
    return out


def prico_lbp(gray: GrayImage, mask: ForegroundMask, offsets=PRICO_OFFSETS) -> np.ndarray:
    counts = prico_counts(gray, mask, offsets)
    return np.concatenate([_normalized(row) for row in counts])


def texture_features(gray: GrayImage, mask: ForegroundMask, kind: str, spec: LbpSpec | None = None,
                     offsets=PRICO_OFFSETS) -> np.ndarray:
    """Dispatch for the eight texture descriptors."""
    if kind == "lbp":
        return lbp_histogram(gray, mask, spec)
    if kind == "mslbp":
        return mslbp(gray, mask)
    if kind == "prico":
        return prico_lbp(gray, mask, offsets)
    raise ValueError(f"unknown texture descriptor {kind!r}")
