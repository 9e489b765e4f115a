from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from drat.core.errors import ContractViolation


class SkeletonSequence(BaseModel):
    """Joint coordinates per frame, in pixels of the H/2 × W/2 feature grid."""

    model_config = ConfigDict(extra="forbid")

    T: int = Field(ge=1)
    R: int = Field(ge=1)
    frames: List[List[List[float]]]

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.frames) != self.T:
            raise ValueError(f"{len(self.frames)} frames listed, T={self.T}")
        for t, frame in enumerate(self.frames):
            if len(frame) != self.R:
                raise ValueError(f"frame {t} has {len(frame)} joints, R={self.R}")
            if any(len(joint) != 2 for joint in frame):
                raise ValueError(f"frame {t} has a joint that is not an (x, y) pair")
        return self

    @classmethod
    def from_array(cls, coords: np.ndarray) -> "SkeletonSequence":
        coords = np.asarray(coords, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ContractViolation(f"skeleton array must be T×R×2, got {coords.shape}")
        return cls(T=coords.shape[0], R=coords.shape[1], frames=coords.tolist())

    def to_array(self) -> np.ndarray:
        return np.asarray(self.frames, dtype=np.float64).reshape(self.T, self.R, 2)

    def check_bounds(self, grid_height: int, grid_width: int) -> None:
        coords = self.to_array()
        x, y = coords[..., 0], coords[..., 1]
        if np.any(x < 0) or np.any(x >= grid_width) or np.any(y < 0) or np.any(y >= grid_height):
            raise ContractViolation(
                f"skeleton leaves the {grid_height}x{grid_width} grid",
                context={"x_range": [float(x.min()), float(x.max())], "y_range": [float(y.min()), float(y.max())]},
            )


class ManifestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    video: str
    skeleton: str
    label: int = Field(ge=0)
    split: Literal["train", "test"]


class DatasetInfo(BaseModel):
    """Provenance written next to the manifest."""

    num_classes: int
    samples_per_class: int
    frames: int
    height: int
    width: int
    joints: int
    seed: int
    class_names: List[str]
    split_counts: Dict[str, int]
    test_fraction: float = 0.2
    root: Optional[str] = None
