from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union
import json
import logging

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from drat.core.errors import ContractViolation, UsageError

logger = logging.getLogger(__name__)

AblationName = Literal["deformable", "joint", "temporal"]
ModalMode = Literal["none", "single", "cross"]


class AttentionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: int = Field(gt=0)
    heads: int = Field(gt=0)
    kernel: int = Field(default=2, gt=0)
    offset_stride: int = Field(default=2, gt=0)
    offset_range: float = Field(default=0.5, gt=0)

    @model_validator(mode="after")
    def _heads_divide_width(self):
        if self.width % self.heads:
            raise ValueError(f"width {self.width} is not divisible by {self.heads} heads")
        return self

    @property
    def head_width(self) -> int:
        return self.width // self.heads


class ModelConfig(BaseModel):
    """Model shape, optimizer and run switches. Unset window/stride fields resolve from the others."""

    model_config = ConfigDict(extra="forbid")

    # shapes
    channels: int = Field(default=8, gt=0)
    frames: int = Field(default=12, gt=0)
    height: int = Field(default=32, gt=0)
    width: int = Field(default=32, gt=0)
    joints: int = Field(default=5, gt=0)
    num_classes: int = Field(default=4, ge=2)

    # blocks
    layers: int = Field(default=2, ge=0)
    heads: int = Field(default=4, gt=0)
    kernel: int = Field(default=2, gt=0)
    offset_stride: Optional[int] = Field(default=None, gt=0)
    offset_range: float = Field(default=0.5, gt=0)
    wnd_joint: Optional[int] = Field(default=None, gt=0)
    wnd_temp: Optional[int] = Field(default=None, gt=0)
    joint_stride: Optional[int] = Field(default=None, gt=0)
    temporal_stride: Optional[int] = Field(default=None, gt=0)
    sigma: float = Field(default=1.0, gt=0)

    # optimizer
    learning_rate: float = Field(default=1e-3, ge=0)
    weight_decay: float = Field(default=0.05, ge=0)
    warmup_fraction: float = Field(default=0.05, ge=0, le=1)
    total_steps: int = Field(default=2000, ge=0)
    batch_size: int = Field(default=8, gt=0)
    betas: Tuple[float, float] = (0.9, 0.999)
    eps: float = Field(default=1e-8, gt=0)

    # run switches
    seed: int = 42
    train_backbone: bool = False
    ablate: List[AblationName] = Field(default_factory=list)
    modal_tokens: ModalMode = "cross"

    @model_validator(mode="after")
    def _resolve_and_check(self):
        if self.height % 8 or self.width % 8:
            raise ValueError(f"height and width must be divisible by 8, got {self.height}x{self.width}")
        if (4 * self.channels) % self.heads:
            raise ValueError(f"4*channels={4 * self.channels} is not divisible by {self.heads} heads")
        self.ablate = sorted(set(self.ablate))

        if self.offset_stride is None:
            self.offset_stride = self.kernel
        if self.wnd_joint is None:
            self.wnd_joint = min(self.joints, 4)
        if self.wnd_temp is None:
            self.wnd_temp = min(self.frames, 4)
        if self.joint_stride is None:
            self.joint_stride = max(1, self.wnd_joint // 2)
        if self.temporal_stride is None:
            self.temporal_stride = max(1, self.wnd_temp // 2)

        if self.wnd_joint > self.joints:
            raise ValueError(f"wnd_joint {self.wnd_joint} exceeds joints {self.joints}")
        if self.wnd_temp > self.frames:
            raise ValueError(f"wnd_temp {self.wnd_temp} exceeds frames {self.frames}")
        if self.joint_stride > self.wnd_joint or self.temporal_stride > self.wnd_temp:
            raise ValueError("window strides must not exceed their window sizes")
        if "deformable" not in self.ablate:
            smallest = min(self.frames, self.height // 8, self.width // 8)
            if self.kernel > smallest:
                raise ValueError(f"kernel {self.kernel} exceeds the smallest feature extent {smallest}")
        return self

    @property
    def width4(self) -> int:
        """Token width 4C."""
        return 4 * self.channels

    @property
    def feature_height(self) -> int:
        return self.height // 8

    @property
    def feature_width(self) -> int:
        return self.width // 8

    @property
    def pose_grid(self) -> Tuple[int, int]:
        return self.height // 2, self.width // 2

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_fraction * self.total_steps))

    def enabled(self, block: str) -> bool:
        return block not in self.ablate

    def attention(self) -> AttentionConfig:
        return AttentionConfig(
            width=self.width4,
            heads=self.heads,
            kernel=self.kernel,
            offset_stride=self.offset_stride,
            offset_range=self.offset_range,
        )


class RunConfig(ModelConfig):
    """A ModelConfig plus optional paths, as read from ``--config`` files."""

    data: Optional[str] = None
    out: Optional[str] = None

    def model(self) -> ModelConfig:
        return ModelConfig(**self.model_dump(exclude={"data", "out"}))


def build_config(cls, **values):
    """Validate ``values`` into ``cls``; invalid values are usage errors."""
    try:
        return cls(**values)
    except ValidationError as exc:
        raise UsageError(f"Invalid configuration: {exc.errors(include_url=False)}") from exc


def load_run_config(path: Optional[Union[str, Path]], **overrides) -> RunConfig:
    values = {}
    if path is not None:
        path = Path(path)
        try:
            values = json.loads(path.read_text())
        except OSError as exc:
            raise UsageError(f"Cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"Config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(values, dict):
            raise UsageError(f"Config file {path} must hold a JSON object")
        logger.info(f"Loaded run config from {path}")
    values.update({key: value for key, value in overrides.items() if value is not None})
    return build_config(RunConfig, **values)


def check_clip_shape(config: ModelConfig, video_shape: Tuple[int, ...], skeleton_shape: Tuple[int, ...]) -> None:
    expected_video = (3, config.frames, config.height, config.width)
    expected_skeleton = (config.frames, config.joints, 2)
    if tuple(video_shape) != expected_video:
        raise ContractViolation(f"clip video shape {tuple(video_shape)} != configured {expected_video}")
    if tuple(skeleton_shape) != expected_skeleton:
        raise ContractViolation(f"skeleton shape {tuple(skeleton_shape)} != configured {expected_skeleton}")
