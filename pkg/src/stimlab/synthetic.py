"""Synthetic "season" datasets that isolate one visual attribute.

Each image is a garment silhouette (shape) filled with a colour (palette)
and overlaid with a micro-texture. In variant ``shape`` the season decides
the silhouette only; in ``palette`` the colour only; in ``texture`` the
micro-texture only. The remaining two attributes are drawn at random.

Design constraints that keep the attributes separable:

* palettes share one luminance, so grey-level descriptors cannot see them;
* micro-textures are zero-mean integer patterns with period 2. Central
  differences at x compare pixels x-1 and x+1, which have the same parity,
  so these patterns leave image gradients unchanged, and even-sized patch
  means are unchanged too. LBP neighbours at distance 1 see them directly.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .evaluation import DatasetManifest, ManifestEntry, write_manifest
from .imaging import ForegroundMask, RasterImage, save_image, save_mask

VARIANTS = ("shape", "palette", "texture")
N_SEASONS = 8
GARMENT_LUMA = 115.0
_W = np.array([0.299, 0.587, 0.114])

# checker, vertical-stripe and horizontal-stripe components, each +-1
_BASIS = (np.array([[1, -1], [-1, 1]]), np.array([[1, -1], [1, -1]]), np.array([[1, 1], [-1, -1]]))
_TEXTURE_MIX = ((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1),
                (-1, 1, 1), (0, 1, 1), (1, 1, 0), (1, 0, 1))


def texture_cell(k: int, amplitude: int = 12) -> np.ndarray:
    """2x2 integer tile of micro-texture ``k`` (zero mean)."""
    mix = _TEXTURE_MIX[k]
    cell = sum(c * b for c, b in zip(mix, _BASIS)) * amplitude
    return cell.astype(np.int64)


def _chroma_basis():
    e1 = np.array([1.0, 0.0, 0.0]) - _W[0] / (_W @ _W) * _W
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(_W, e1)
    e2 /= np.linalg.norm(e2)
    return e1, e2


def palette_color(k: int, jitter: float = 0.0, chroma: float = 60.0) -> np.ndarray:
    """Iso-luminant garment colour for palette ``k`` (RGB floats)."""
    e1, e2 = _chroma_basis()
    phi = 2 * np.pi * k / N_SEASONS + jitter
    rgb = GARMENT_LUMA + chroma * (np.cos(phi) * e1 + np.sin(phi) * e2)
    # chroma directions are orthogonal to the luma weights, so luma is exact
    return rgb


def silhouette(k: int, size: int, scale: float, dx: float, dy: float) -> np.ndarray:
    """Boolean mask of silhouette ``k`` on a size x size canvas."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    u = (xx - c - dx) / (scale * size / 2)
    v = (yy - c - dy) / (scale * size / 2)
    au, av = np.abs(u), np.abs(v)
    if k == 0:  # disk
        m = u * u + v * v <= 0.85
    elif k == 1:  # square
        m = (au <= 0.78) & (av <= 0.78)
    elif k == 2:  # A-line dress (triangle)
        m = (v >= -0.95) & (v <= 0.9) & (au <= 0.1 + 0.55 * (v + 0.95))
    elif k == 3:  # plus
        m = ((au <= 0.3) & (av <= 0.95)) | ((av <= 0.3) & (au <= 0.95))
    elif k == 4:  # ring
        r2 = u * u + v * v
        m = (r2 <= 0.9) & (r2 >= 0.3)
    elif k == 5:  # diamond
        m = au + av <= 1.1
    elif k == 6:  # trousers: two legs joined at the waist
        m = ((v <= -0.45) & (v >= -0.95) & (au <= 0.75)) | \
            ((v > -0.45) & (v <= 0.95) & (au <= 0.75) & (au >= 0.15))
    elif k == 7:  # T-shirt
        m = ((v >= -0.9) & (v <= -0.35) & (au <= 0.95)) | ((v > -0.35) & (v <= 0.9) & (au <= 0.45))
    else:
        raise ValueError(f"unknown silhouette {k}")
    return m


def render(shape: int, palette: int, texture: int, rng: np.random.Generator,
           size: int = 96, noise: float = 2.0) -> tuple[RasterImage, ForegroundMask]:
    scale = rng.uniform(0.78, 0.95)
    dx, dy = rng.uniform(-3, 3, size=2)
    mask = silhouette(shape, size, scale, dx, dy)

    fg = palette_color(palette, jitter=rng.uniform(-0.12, 0.12))
    # background: random hue; luminance a little above or below the garment,
    # enough for a silhouette edge but weaker than the micro-texture
    luma = GARMENT_LUMA + rng.choice([-1, 1]) * rng.uniform(5, 8)
    e1, e2 = _chroma_basis()
    phi = rng.uniform(0, 2 * np.pi)
    bg = luma + rng.uniform(0, 40) * (np.cos(phi) * e1 + np.sin(phi) * e2)

    base = np.where(mask[..., None], fg, bg)
    base = base + np.clip(rng.normal(0.0, noise, size=(size, size)), -3 * noise, 3 * noise)[..., None]
    base = np.floor(base + 0.5)
    tile = texture_cell(texture)
    pattern = np.tile(tile, (size // 2 + 1, size // 2 + 1))[:size, :size]
    pixels = base + pattern[..., None]
    if pixels.min() < 0 or pixels.max() > 255:
        raise AssertionError("synthetic image would clip; adjust palette or texture amplitude")
    return RasterImage(pixels.astype(np.uint8)), ForegroundMask(mask)


def generate(variant: str, seed: int = 0, per_season: int = 40, size: int = 96):
    """Yield (image, mask, season label) for one variant."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    rng = np.random.default_rng([seed, VARIANTS.index(variant)])
    for season in range(N_SEASONS):
        for _ in range(per_season):
            attrs = {name: int(rng.integers(N_SEASONS)) for name in VARIANTS}
            attrs[variant] = season
            image, mask = render(attrs["shape"], attrs["palette"], attrs["texture"], rng, size)
            yield image, mask, f"season{season}", attrs


def write_dataset(out_dir, variant: str, seed: int = 0, per_season: int = 40,
                  size: int = 96) -> Path:
    """Write PNG images/masks and a manifest; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (image, mask, label, attrs) in enumerate(generate(variant, seed, per_season, size)):
        img_path = out_dir / f"{variant}_{i:04d}.png"
        mask_path = out_dir / f"{variant}_{i:04d}_mask.png"
        save_image(image, img_path)
        save_mask(mask, mask_path)
        entries.append(ManifestEntry(str(img_path), str(mask_path), label,
                                     {k: str(v) for k, v in attrs.items()}))
    manifest_path = out_dir / f"{variant}.tsv"
    write_manifest(DatasetManifest(tuple(entries), variant), manifest_path, relative_to=out_dir)
    return manifest_path
