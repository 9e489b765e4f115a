"""
3D deformable attention.

An offset network predicts a displacement for every cell of a coarse reference
grid; tokens are gathered from Z by trilinear sampling at the displaced points
and serve as keys/values for attention from the full token set.

Coordinates are normalized to [-1, 1] per axis and ordered (x, y, z) =
(width, height, time). A normalized value q maps to index (q + 1) / 2 * (n - 1).
"""
from typing import Dict, List, Sequence, Tuple

import numpy as np

from drat.core import ops
from drat.core.conv import as_triple, conv3d, conv_output_extents
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.models.config import AttentionConfig
from drat.nn.attention import AttentionBlock, active_recorder
from drat.nn.module import LayerNorm, Linear, Module, init_tensor, zeros

_SNAP = 1e-12


def reference_grid(
    extents: Sequence[int],
    kernel=1,
    stride=1,
) -> np.ndarray:
    """
    Regular lattice in normalized coordinates, one point per output cell of a
    valid conv over ``extents`` (T, H, W).

    Each axis with m > 1 cells spans [-1, 1] evenly, so its first and last points
    land on the first and last input index. A single cell maps to 0.
    Returns (3, T~, H~, W~) with channels (x, y, z).
    """
    out = conv_output_extents(extents, as_triple(kernel, "kernel"), as_triple(stride, "stride"))
    axes = [np.linspace(-1.0, 1.0, m) if m > 1 else np.zeros(m) for m in out]
    z, y, x = np.meshgrid(axes[0], axes[1], axes[2], indexing="ij")
    return np.stack([x, y, z])


def deformed_points(grid: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """Reference points plus offsets, clamped to [-1, 1]."""
    return np.clip(grid + offsets, -1.0, 1.0)


def _axis_coordinates(q: np.ndarray, extent: int):
    """Lower corner index, fractional weight and d(index)/dq for one axis."""
    if extent == 1:
        zero = np.zeros(q.shape)
        return np.zeros(q.shape, dtype=np.int64), zero, zero, 0
    clamped = np.clip(q, -1.0, 1.0)
    idx = (clamped + 1.0) / 2.0 * (extent - 1)
    nearest = np.round(idx)
    idx = np.where(np.abs(idx - nearest) < _SNAP, nearest, idx)
    lower = np.clip(np.floor(idx), 0, extent - 2).astype(np.int64)
    frac = idx - lower
    inside = (q > -1.0) & (q < 1.0)
    dscale = np.where(inside, (extent - 1) / 2.0, 0.0)
    return lower, frac, dscale, 1


def three_d_token_search(z: Tensor, grid: np.ndarray, offsets: Tensor) -> Tensor:
    """
    Trilinearly sample Z (C, T, H, W) at ``grid + offsets`` (3, T~, H~, W~).

    Out-of-range points are clamped to the volume. Gradients flow to Z and to the
    offsets; the offset gradient is zero along an axis where the point is clamped.
    """
    if z.ndim != 4:
        raise ContractViolation(f"Z must be C×T×H×W, got {z.shape}")
    if grid.shape != offsets.shape or grid.shape[0] != 3:
        raise ContractViolation(f"grid {grid.shape} and offsets {offsets.shape} must both be 3×T~×H~×W~")
    channels, frames, height, width = z.shape
    out_shape = grid.shape[1:]
    q = (grid + offsets.data).reshape(3, -1)

    x0, fx, sx, ox = _axis_coordinates(q[0], width)
    y0, fy, sy, oy = _axis_coordinates(q[1], height)
    t0, ft, st, ot = _axis_coordinates(q[2], frames)

    flat_z = z.data.reshape(channels, -1)
    corners: List[Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, Tuple[int, int, int]]] = []
    for ct in (0, 1):
        for cy in (0, 1):
            for cx in (0, 1):
                wt = ft if ct else 1.0 - ft
                wy = fy if cy else 1.0 - fy
                wx = fx if cx else 1.0 - fx
                flat = (t0 + ct * ot) * height * width + (y0 + cy * oy) * width + (x0 + cx * ox)
                corners.append((flat, wx, wy, wt, (cx, cy, ct)))

    out = np.zeros((channels, q.shape[1]))
    for flat, wx, wy, wt, _ in corners:
        out += flat_z[:, flat] * (wx * wy * wt)

    z_shape = z.shape

    def backward(g: np.ndarray):
        g_flat = g.reshape(channels, -1)
        grad_z = np.zeros((frames * height * width, channels))
        grad_q = np.zeros((3, q.shape[1]))
        for flat, wx, wy, wt, (cx, cy, ct) in corners:
            np.add.at(grad_z, flat, (g_flat * (wx * wy * wt)).T)
            g_dot = (g_flat * flat_z[:, flat]).sum(axis=0)
            grad_q[0] += (1.0 if cx else -1.0) * wy * wt * g_dot
            grad_q[1] += (1.0 if cy else -1.0) * wx * wt * g_dot
            grad_q[2] += (1.0 if ct else -1.0) * wx * wy * g_dot
        grad_q *= np.stack([sx, sy, st])
        return grad_z.T.reshape(z_shape), grad_q.reshape(grid.shape)

    return Tensor.from_op(out.reshape((channels,) + out_shape), (z, offsets), backward, "three_d_token_search")


class OffsetNetwork(Module):
    """
    conv3d(k, stride) -> LayerNorm -> GELU -> 1×1×1 conv to 3 channels -> tanh -> × offset_range.

    The last layer starts at zero so initial offsets vanish.
    """

    def __init__(self, config: AttentionConfig, rng: np.random.Generator):
        width, k = config.width, config.kernel
        self.kernel = config.kernel
        self.stride = config.offset_stride
        self.offset_range = config.offset_range
        self.conv_weight = init_tensor(rng, (width, width, k, k, k), 1.0 / np.sqrt(width * k ** 3))
        self.conv_bias = zeros((width,))
        self.norm = LayerNorm(width)
        self.project = Linear(width, 3, rng, scale=0.0)

    def __call__(self, z: Tensor) -> Tensor:
        hidden = conv3d(z, self.conv_weight, self.stride, self.conv_bias)  # (W, T~, H~, W~)
        hidden = ops.gelu(self.norm(ops.transpose(hidden, (1, 2, 3, 0))))
        raw = ops.tanh(self.project(hidden))  # (T~, H~, W~, 3)
        return ops.transpose(ops.scale(raw, self.offset_range), (3, 0, 1, 2))


def _flatten_tokens(volume: Tensor, modal: Sequence[Tensor]) -> Tensor:
    """[flatten(volume) ‖ modal...] as (n, C) token rows."""
    channels = volume.shape[0]
    parts = [ops.reshape(volume, (channels, -1))]
    parts.extend(ops.reshape(m, (channels, m.shape[1] * m.shape[2])) for m in modal)
    return ops.transpose(ops.concat(parts, axis=1), (1, 0))


class DeformableAttention(Module):
    """Updates Z and the modal tokens passed alongside it (each C×T×1)."""

    def __init__(self, config: AttentionConfig, rng: np.random.Generator):
        self.config = config
        self.offsets = OffsetNetwork(config, rng)
        self.block = AttentionBlock(config.width, config.heads, rng)
        self._grids: Dict[Tuple[int, ...], np.ndarray] = {}

    def grid_for(self, extents: Tuple[int, int, int]) -> np.ndarray:
        if extents not in self._grids:
            self._grids[extents] = reference_grid(extents, self.config.kernel, self.config.offset_stride)
        return self._grids[extents]

    def __call__(self, z: Tensor, modal: Sequence[Tensor], tag: str = "deformable") -> Tuple[Tensor, List[Tensor]]:
        if z.ndim != 4 or z.shape[0] != self.config.width:
            raise ContractViolation(f"Z must be {self.config.width}×T×H×W, got {z.shape}")
        channels, frames = z.shape[:2]
        for m in modal:
            if m.shape != (channels, frames, 1):
                raise ContractViolation(f"modal token shape {m.shape} != {(channels, frames, 1)}")

        offsets = self.offsets(z)
        grid = self.grid_for(tuple(z.shape[1:]))
        sampled = three_d_token_search(z, grid, offsets)

        recorder = active_recorder()
        if recorder is not None:
            recorder.points[tag] = deformed_points(grid, offsets.data)

        queries = _flatten_tokens(z, modal)
        context = _flatten_tokens(sampled, modal)
        meta = {
            "kind": "deformable",
            "volume_tokens": int(np.prod(z.shape[1:])),
            "sampled_tokens": int(np.prod(sampled.shape[1:])),
            "modal_tokens": len(modal) * frames,
        }
        out = ops.transpose(self.block(queries, context, tag=tag, meta=meta), (1, 0))  # (C, n)

        volume = int(np.prod(z.shape[1:]))
        z_out = ops.reshape(ops.slice_axis(out, 1, 0, volume), z.shape)
        modal_out = []
        for index in range(len(modal)):
            start = volume + index * frames
            modal_out.append(ops.reshape(ops.slice_axis(out, 1, start, start + frames), (channels, frames, 1)))
        return z_out, modal_out
