"""Dense upright SIFT on a multi-scale sampling grid."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .descriptors import DescriptorSet
from .imaging import ForegroundMask, GrayImage, build_grid

SIFT_SCALES = (16, 24, 32, 40, 48)
SPATIAL_BINS = 4
ORIENTATION_BINS = 8
SIFT_DIM = SPATIAL_BINS * SPATIAL_BINS * ORIENTATION_BINS
CLIP = 0.2
_CHUNK = 256


def sift_scales(scale_count: int) -> tuple[int, ...]:
    if scale_count < 1:
        raise ValueError("scale_count must be >= 1")
    return tuple(16 + 8 * k for k in range(scale_count))


def central_gradients(gray: np.ndarray):
    """Central differences (d/dx, d/dy).

    A component is zero on the two border lines where its central
    difference is undefined (no one-sided fallback).
    """
    gx = np.zeros_like(gray, dtype=np.float64)
    gy = np.zeros_like(gray, dtype=np.float64)
    gx[:, 1:-1] = (gray[:, 2:] - gray[:, :-2]) / 2.0
    gy[1:-1, :] = (gray[2:, :] - gray[:-2, :]) / 2.0
    return gx, gy


def orientation_maps(gray: np.ndarray) -> np.ndarray:
    """Gradient magnitude split linearly between the two nearest of the
    8 orientation bins, shape (H, W, 8)."""
    gx, gy = central_gradients(gray)
    mag = np.sqrt(gx * gx + gy * gy)
    theta = np.mod(np.arctan2(gy, gx), 2 * np.pi)
    o = theta / (2 * np.pi / ORIENTATION_BINS)
    lo = np.floor(o)
    frac = o - lo
    lo = lo.astype(np.int64) % ORIENTATION_BINS
    hi = (lo + 1) % ORIENTATION_BINS
    out = np.zeros(gray.shape + (ORIENTATION_BINS,))
    rows, cols = np.indices(gray.shape)
    # lo != hi at every pixel, so plain fancy assignment is safe
    out[rows, cols, lo] = mag * (1.0 - frac)
    out[rows, cols, hi] = mag * frac
    return out


def spatial_weights(patch_size: int) -> np.ndarray:
    """(4, patch_size) weights: linear bin interpolation times the 1-D
    Gaussian factor (sigma = patch_size / 2) along one patch axis."""
    s = patch_size
    width = s / SPATIAL_BINS
    u = np.arange(s)
    b = (u + 0.5) / width - 0.5
    bins = np.arange(SPATIAL_BINS)[:, None]
    tri = np.maximum(0.0, 1.0 - np.abs(b[None, :] - bins))
    sigma = s / 2.0
    gauss = np.exp(-((u - (s - 1) / 2.0) ** 2) / (2 * sigma * sigma))
    return tri * gauss[None, :]


def normalize_sift(raw: np.ndarray) -> np.ndarray:
    """L2 normalise, clip at 0.2, renormalise. All-zero rows stay zero."""
    out = np.zeros_like(raw)
    norm = np.sqrt(np.einsum("ij,ij->i", raw, raw))
    live = norm > 0
    v = raw[live] / norm[live, None]
    v = np.minimum(v, CLIP)
    norm2 = np.sqrt(np.einsum("ij,ij->i", v, v))
    out[live] = v / norm2[:, None]
    return out


def _pool(padded: np.ndarray, xs, ys, s: int) -> np.ndarray:
    """Raw (unnormalised) descriptors for keypoints at one patch size.

    ``padded`` is the orientation stack zero-padded by ``s`` on each side,
    so clipped patch regions contribute nothing.
    """
    weights = spatial_weights(s)
    windows = sliding_window_view(padded, (s, s), axis=(0, 1))  # (.., .., 8, s, s)
    top = np.asarray(ys) - s // 2 + s
    left = np.asarray(xs) - s // 2 + s
    out = np.empty((len(top), SIFT_DIM))
    for start in range(0, len(top), _CHUNK):
        sl = slice(start, start + _CHUNK)
        patches = windows[top[sl], left[sl]]  # (n, 8, s_v, s_u)
        t = np.tensordot(patches, weights, axes=([3], [1]))  # (n, 8, v, j)
        d = np.tensordot(t, weights, axes=([2], [1]))  # (n, 8, j, i)
        out[sl] = d.transpose(0, 3, 2, 1).reshape(len(patches), SIFT_DIM)
    return out


def sift_at(gray: GrayImage, center, patch_size: int) -> np.ndarray:
    """128-D descriptor of the ``patch_size`` square centred at (x, y)."""
    x, y = center
    maps = orientation_maps(gray.data)
    padded = np.pad(maps, ((patch_size, patch_size), (patch_size, patch_size), (0, 0)))
    raw = _pool(padded, [x], [y], patch_size)
    return normalize_sift(raw)[0]


def dense_sift(gray: GrayImage, mask: ForegroundMask, step: int = 4, scale_count: int = 5,
               scales=None, coverage_threshold: float = 0.5) -> DescriptorSet:
    """Dense SIFT over the foreground; rows ordered by (y, x, scale)."""
    if mask.shape != gray.data.shape:
        raise ValueError("mask and image dimensions differ")
    if scales is None:
        scales = sift_scales(scale_count)
    scales = tuple(sorted(int(s) for s in scales))
    grid = build_grid(mask, step, scales, coverage_threshold)
    kp = grid.keypoints
    if len(kp) == 0:
        return DescriptorSet.empty(SIFT_DIM, "sift")

    maps = orientation_maps(gray.data)
    raw = np.empty((len(kp), SIFT_DIM))
    for si, s in enumerate(scales):
        rows = np.flatnonzero(kp[:, 2] == si)
        if rows.size == 0:
            continue
        padded = np.pad(maps, ((s, s), (s, s), (0, 0)))
        raw[rows] = _pool(padded, kp[rows, 0], kp[rows, 1], s)
    vectors = normalize_sift(raw)
    return DescriptorSet(vectors, positions=kp[:, :2], scale_index=kp[:, 2],
                         descriptor_id="sift", meta={"scales": scales})
