from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DescriptorSet:
    """N local feature vectors with their sampling positions.

    ``vectors`` is stored as float32, which is also the on-disk precision of
    the feature cache, so a cache round trip is lossless.
    """

    vectors: np.ndarray
    positions: np.ndarray = None
    scale_index: np.ndarray = None
    descriptor_id: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=np.float32)
        if vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {vectors.shape}")
        n = vectors.shape[0]
        positions = (None if self.positions is None
                     else np.asarray(self.positions, dtype=np.int32).reshape(-1, 2))
        scale_index = (np.zeros(n, dtype=np.int32) if self.scale_index is None
                       else np.asarray(self.scale_index, dtype=np.int32).reshape(-1))
        if (positions is not None and len(positions) != n) or len(scale_index) != n:
            raise ValueError("positions/scale_index length must match the number of vectors")
        if not np.all(np.isfinite(vectors)):
            raise ValueError("descriptor vectors must be finite")
        object.__setattr__(self, "vectors", np.ascontiguousarray(vectors))
        if positions is not None:
            positions = np.ascontiguousarray(positions)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "scale_index", np.ascontiguousarray(scale_index))

    def __len__(self):
        return self.vectors.shape[0]

    @property
    def has_positions(self) -> bool:
        return self.positions is not None

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, dimension: int, descriptor_id: str = "") -> "DescriptorSet":
        return cls(np.zeros((0, dimension), dtype=np.float32), positions=np.zeros((0, 2)),
                   descriptor_id=descriptor_id)

    @classmethod
    def single(cls, vector, descriptor_id: str = "") -> "DescriptorSet":
        """A one-row set holding an image-level vector (e.g. an LBP histogram)."""
        return cls(np.asarray(vector, dtype=np.float32)[None, :], descriptor_id=descriptor_id)

    def same_as(self, other: "DescriptorSet") -> bool:
        """Bitwise equality of every stored array."""
        return (self.descriptor_id == other.descriptor_id
                and self.vectors.shape == other.vectors.shape
                and self.vectors.tobytes() == other.vectors.tobytes()
                and (self.positions is None) == (other.positions is None)
                and (self.positions is None or np.array_equal(self.positions, other.positions))
                and np.array_equal(self.scale_index, other.scale_index))
