from typing import Tuple

import numpy as np

from drat.core import ops
from drat.core.conv import conv3d
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.nn.module import Module, init_tensor, zeros

STAGE_KERNEL = (1, 2, 2)
STAGE_STRIDE = (1, 2, 2)


class BackboneStub(Module):
    """
    Three seeded conv stages (1×2×2 kernels, spatial stride 2, tanh) standing in
    for a pretrained video backbone.

    Stage 1 gives F_a (C×T×H/2×W/2) and stage 3 gives F_b (4C×T×H/8×W/8).
    Frozen unless ``trainable``.
    """

    def __init__(self, channels: int, seed: int, bias: bool = False, trainable: bool = False):
        rng = np.random.default_rng(seed)
        widths = [3, channels, 2 * channels, 4 * channels]
        self.channels = channels
        self.stages = []
        for index, (c_in, c_out) in enumerate(zip(widths[:-1], widths[1:])):
            fan_in = c_in * STAGE_KERNEL[1] * STAGE_KERNEL[2]
            stage = _Stage(
                init_tensor(rng, (c_out, c_in) + STAGE_KERNEL, 1.5 / np.sqrt(fan_in), name=f"stage{index}"),
                zeros((c_out,)) if bias else None,
            )
            self.stages.append(stage)
        self.trainable = trainable
        if not trainable:
            self.freeze()

    def __call__(self, video: Tensor) -> Tuple[Tensor, Tensor]:
        if video.ndim != 4 or video.shape[0] != 3:
            raise ContractViolation(f"video must be 3×T×H×W, got {video.shape}")
        height, width = video.shape[2:]
        if height % 8 or width % 8:
            raise ContractViolation(f"video height and width must be divisible by 8, got {height}x{width}")
        f_a = self.stages[0](video)
        f_b = self.stages[2](self.stages[1](f_a))
        return f_a, f_b


class _Stage(Module):
    def __init__(self, kernel: Tensor, bias):
        self.kernel = kernel
        self.bias = bias

    def __call__(self, x: Tensor) -> Tensor:
        return ops.tanh(conv3d(x, self.kernel, STAGE_STRIDE, self.bias))
