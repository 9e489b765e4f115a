"""Pose tokens: Gaussian joint heatmaps pooled against F_a, then projected to the token width."""
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from drat.core import ops
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.models.dataset import SkeletonSequence
from drat.nn.module import Linear, Module


@dataclass
class JointHeatmap:
    values: np.ndarray  # (T, R, grid_h, grid_w)
    sigma: float

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape


def gaussian_heatmap(
    skeleton: Union[SkeletonSequence, np.ndarray],
    sigma: float,
    grid: Tuple[int, int],
) -> JointHeatmap:
    """
    values[t, r, j, i] = exp(-((i - x)^2 + (j - y)^2) / (2 sigma^2)) with i the
    column and j the row of the grid. Unnormalized.
    """
    if sigma <= 0:
        raise ContractViolation(f"sigma must be positive, got {sigma}")
    coords = skeleton.to_array() if isinstance(skeleton, SkeletonSequence) else np.asarray(skeleton, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ContractViolation(f"skeleton must be T×R×2, got {coords.shape}")
    grid_h, grid_w = grid
    cols = np.arange(grid_w, dtype=np.float64)
    rows = np.arange(grid_h, dtype=np.float64)
    dx2 = (cols[None, None, None, :] - coords[..., 0][..., None, None]) ** 2
    dy2 = (rows[None, None, :, None] - coords[..., 1][..., None, None]) ** 2
    return JointHeatmap(np.exp(-(dx2 + dy2) / (2.0 * sigma * sigma)), float(sigma))


def raw_pose_tokens(f_a: Tensor, heatmap: JointHeatmap) -> Tensor:
    """Per channel, sum F_a weighted by each joint heatmap: (C, T, gh, gw) -> (C, T, R)."""
    if f_a.ndim != 4:
        raise ContractViolation(f"F_a must be C×T×H×W, got {f_a.shape}")
    channels, frames, grid_h, grid_w = f_a.shape
    t_h, joints, h_h, w_h = heatmap.shape
    if (t_h, h_h, w_h) != (frames, grid_h, grid_w):
        raise ContractViolation(f"heatmap {heatmap.shape} does not match F_a {f_a.shape}")
    cells = grid_h * grid_w
    features = ops.transpose(ops.reshape(f_a, (channels, frames, cells)), (1, 0, 2))
    weights = Tensor(np.transpose(heatmap.values.reshape(frames, joints, cells), (0, 2, 1)))
    pooled = ops.matmul(features, weights)  # (T, C, R)
    return ops.transpose(pooled, (1, 0, 2))


class PoseTokenizer(Module):
    def __init__(self, channels: int, rng: np.random.Generator, init_scale: float = 0.02):
        self.projection = Linear(channels, 4 * channels, rng, scale=init_scale, bias_scale=init_scale)

    def __call__(self, f_a: Tensor, heatmap: JointHeatmap) -> Tensor:
        """P with shape (4C, T, R)."""
        raw = raw_pose_tokens(f_a, heatmap)
        projected = self.projection(ops.transpose(raw, (1, 2, 0)))  # (T, R, 4C)
        return ops.transpose(projected, (2, 0, 1))
