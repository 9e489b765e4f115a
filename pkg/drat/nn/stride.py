"""
Windowed (stride) attention along the joint axis and along the time axis.

Query windows start at multiples of the stride; key/value windows are the same
lattice shifted by one stride, so query window j attending to kv window j links
neighbouring groups. Overlapping query outputs are averaged back onto the axis.
"""
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from drat.core import ops
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.nn.attention import AttentionBlock
from drat.nn.module import Module


@dataclass(frozen=True)
class WindowPlan:
    axis_length: int
    wnd: int
    stride: int
    query_starts: Tuple[int, ...]
    kv_starts: Tuple[int, ...]

    def pairing(self, j: int) -> int:
        return min(j, len(self.kv_starts) - 1)

    @property
    def windows(self) -> List[Tuple[int, int]]:
        """(query start, kv start) per query window."""
        return [(q, self.kv_starts[self.pairing(j)]) for j, q in enumerate(self.query_starts)]

    def coverage(self) -> np.ndarray:
        counts = np.zeros(self.axis_length, dtype=np.int64)
        for start in self.query_starts:
            counts[start : start + self.wnd] += 1
        return counts


def _lattice(first: int, length: int, wnd: int, stride: int) -> List[int]:
    return list(range(first, length - wnd + 1, stride))


def _cover_tail(starts: List[int], length: int, wnd: int) -> List[int]:
    if starts[-1] + wnd < length:
        starts.append(length - wnd)
    return starts


def window_starts(axis_length: int, wnd: int, stride: Optional[int] = None) -> WindowPlan:
    if not (1 <= wnd <= axis_length):
        raise ContractViolation(f"window {wnd} must lie in [1, {axis_length}]")
    stride = max(1, wnd // 2) if stride is None else stride
    if not (1 <= stride <= wnd):
        raise ContractViolation(f"stride {stride} must lie in [1, {wnd}]")
    queries = _cover_tail(_lattice(0, axis_length, wnd, stride), axis_length, wnd)
    kv = _lattice(stride, axis_length, wnd, stride) or [0]
    kv = _cover_tail(kv, axis_length, wnd)
    return WindowPlan(axis_length, wnd, stride, tuple(queries), tuple(kv))


def _window_rows(x: Tensor, axis: int, start: int, wnd: int, extra: Sequence[Tensor]) -> Tensor:
    """
    Slice ``wnd`` positions of ``x`` (C, A, B) along ``axis`` (1 or 2), append
    ``extra`` along axis 2 and return (tokens, C) rows in (axis-1, axis-2) order.
    """
    piece = ops.slice_axis(x, axis, start, start + wnd)
    if extra:
        piece = ops.concat([piece] + list(extra), axis=2)
    channels, a, b = piece.shape
    return ops.reshape(ops.transpose(piece, (1, 2, 0)), (a * b, channels))


def _rows_to_volume(rows: Tensor, a: int, b: int) -> Tensor:
    channels = rows.shape[1]
    return ops.transpose(ops.reshape(rows, (a, b, channels)), (2, 0, 1))


class JointStrideAttention(Module):
    """
    Attention within windows of ``wnd`` joints across all frames, with the modal
    tokens appended to every window.
    """

    def __init__(self, width: int, heads: int, wnd: int, rng: np.random.Generator, stride: Optional[int] = None):
        self.wnd = wnd
        self.stride = stride
        self.block = AttentionBlock(width, heads, rng)

    def plan(self, joints: int) -> WindowPlan:
        return window_starts(joints, self.wnd, self.stride)

    def __call__(self, p: Tensor, modal: Sequence[Tensor], tag: str = "joint") -> Tuple[Tensor, List[Tensor]]:
        if p.ndim != 3:
            raise ContractViolation(f"P must be C×T×R, got {p.shape}")
        channels, frames, joints = p.shape
        for m in modal:
            if m.shape != (channels, frames, 1):
                raise ContractViolation(f"modal token shape {m.shape} != {(channels, frames, 1)}")
        plan = self.plan(joints)
        slots = self.wnd + len(modal)

        joint_parts: List[Tensor] = []
        modal_parts: List[List[Tensor]] = [[] for _ in modal]
        for j, (q_start, kv_start) in enumerate(plan.windows):
            queries = _window_rows(p, 2, q_start, self.wnd, modal)
            context = _window_rows(p, 2, kv_start, self.wnd, modal)
            meta = {
                "kind": "joint",
                "window": j,
                "query_start": q_start,
                "kv_start": kv_start,
                "wnd": self.wnd,
                "frames": frames,
                "slots": slots,
            }
            out = _rows_to_volume(self.block(queries, context, tag=tag, meta=meta), frames, slots)
            joint_parts.append(ops.slice_axis(out, 2, 0, self.wnd))
            for index in range(len(modal)):
                modal_parts[index].append(ops.slice_axis(out, 2, self.wnd + index, self.wnd + index + 1))

        p_out = ops.overlap_mean(joint_parts, plan.query_starts, joints, axis=2)
        return p_out, [ops.stack_mean(parts) for parts in modal_parts]


class TemporalStrideAttention(Module):
    """
    Attention within windows of ``wnd`` frames over every token of those frames:
    RGB cells, joints and modal tokens.
    """

    def __init__(self, width: int, heads: int, wnd: int, rng: np.random.Generator, stride: Optional[int] = None):
        self.wnd = wnd
        self.stride = stride
        self.block = AttentionBlock(width, heads, rng)

    def plan(self, frames: int) -> WindowPlan:
        return window_starts(frames, self.wnd, self.stride)

    def __call__(
        self, z: Tensor, p: Tensor, modal: Sequence[Tensor], tag: str = "temporal"
    ) -> Tuple[Tensor, Tensor, List[Tensor]]:
        if z.ndim != 4 or p.ndim != 3 or z.shape[:2] != p.shape[:2]:
            raise ContractViolation(f"Z {z.shape} and P {p.shape} must share C×T")
        channels, frames, height, width = z.shape
        cells, joints = height * width, p.shape[2]
        for m in modal:
            if m.shape != (channels, frames, 1):
                raise ContractViolation(f"modal token shape {m.shape} != {(channels, frames, 1)}")
        tokens = ops.concat([ops.reshape(z, (channels, frames, cells)), p] + list(modal), axis=2)
        per_step = tokens.shape[2]
        plan = self.plan(frames)

        parts: List[Tensor] = []
        for j, (q_start, kv_start) in enumerate(plan.windows):
            queries = _window_rows(tokens, 1, q_start, self.wnd, ())
            context = _window_rows(tokens, 1, kv_start, self.wnd, ())
            meta = {
                "kind": "temporal",
                "window": j,
                "query_start": q_start,
                "kv_start": kv_start,
                "wnd": self.wnd,
                "tokens_per_step": per_step,
                "cells": cells,
                "joints": joints,
            }
            parts.append(_rows_to_volume(self.block(queries, context, tag=tag, meta=meta), self.wnd, per_step))

        merged = ops.overlap_mean(parts, plan.query_starts, frames, axis=1)
        z_out = ops.reshape(ops.slice_axis(merged, 2, 0, cells), z.shape)
        p_out = ops.slice_axis(merged, 2, cells, cells + joints)
        modal_out = [
            ops.slice_axis(merged, 2, cells + joints + i, cells + joints + i + 1) for i in range(len(modal))
        ]
        return z_out, p_out, modal_out
