"""Descriptor configuration and per-image extraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from .color import ColorNameTable, dense_color
from .descriptors import DescriptorSet
from .imaging import (ForegroundMask, RasterImage, crop_to_mask, resize_to_height,
                      to_grayscale)
from .shape import dense_sift
from .texture import PRICO_OFFSETS, LbpSpec, lbp_histogram, mslbp, prico_lbp

KINDS = ("sift", "cn", "rgb", "lbp", "mslbp", "prico")
LOCAL_KINDS = ("sift", "cn", "rgb")
_DEFAULT_STEP = {"sift": 4, "cn": 5, "rgb": 5}
_DEFAULT_SCALES = {"sift": 5, "cn": 2, "rgb": 2}


@dataclass(frozen=True)
class DescriptorConfig:
    kind: str
    step: int = 0  # 0: the descriptor's default
    scale_count: int = 0
    coverage: float = 0.5
    lbp_P: int = 8
    lbp_R: int = 1
    lbp_mapping: str = "u2"
    prico_offsets: tuple = PRICO_OFFSETS
    target_height: int = 0  # 0: keep size
    crop: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"descriptor kind must be one of {KINDS}, got {self.kind!r}")
        if self.step < 0 or self.scale_count < 0 or self.target_height < 0:
            raise ValueError("step, scale_count and target_height must be non-negative")
        if not 0 <= self.coverage <= 1:
            raise ValueError("coverage must lie in [0, 1]")
        if self.kind == "lbp":
            LbpSpec(self.lbp_P, self.lbp_R, self.lbp_mapping)
        if self.kind == "prico" and (not self.prico_offsets or min(self.prico_offsets) < 1):
            raise ValueError("prico offsets must be positive")
        object.__setattr__(self, "prico_offsets", tuple(int(d) for d in self.prico_offsets))

    @property
    def is_local(self) -> bool:
        return self.kind in LOCAL_KINDS

    @property
    def effective_step(self) -> int:
        return self.step or _DEFAULT_STEP.get(self.kind, 1)

    @property
    def effective_scale_count(self) -> int:
        return self.scale_count or _DEFAULT_SCALES.get(self.kind, 1)

    @property
    def descriptor_id(self) -> str:
        if self.kind == "lbp":
            return LbpSpec(self.lbp_P, self.lbp_R, self.lbp_mapping).name
        return self.kind

    def canonical(self) -> str:
        """Stable text form, used for cache keys."""
        return ";".join(f"{k}={v}" for k, v in sorted(asdict(self).items()))


def preprocess(image: RasterImage, mask: ForegroundMask, config: DescriptorConfig):
    if config.crop:
        image, mask = crop_to_mask(image, mask)
    if config.target_height:
        image, mask = resize_to_height(image, mask, config.target_height)
    return image, mask


def extract(image: RasterImage, mask: ForegroundMask, config: DescriptorConfig,
            cn_table: ColorNameTable | None = None) -> DescriptorSet:
    image, mask = preprocess(image, mask, config)
    kind = config.kind
    if kind in ("cn", "rgb"):
        return dense_color(image, mask, kind, step=config.effective_step,
                           scale_count=config.effective_scale_count, table=cn_table,
                           coverage_threshold=config.coverage)
    gray = to_grayscale(image)
    if kind == "sift":
        return dense_sift(gray, mask, step=config.effective_step,
                          scale_count=config.effective_scale_count,
                          coverage_threshold=config.coverage)
    if kind == "lbp":
        hist = lbp_histogram(gray, mask, LbpSpec(config.lbp_P, config.lbp_R, config.lbp_mapping))
    elif kind == "mslbp":
        hist = mslbp(gray, mask)
    else:
        hist = prico_lbp(gray, mask, config.prico_offsets)
    return DescriptorSet.single(hist, config.descriptor_id)
