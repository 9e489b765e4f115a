"""Counted query-key products of stride attention against full attention."""
from typing import Optional

import numpy as np

from drat.core.counters import count_ops
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor, no_grad
from drat.models.reports import ComplexityReport
from drat.nn.stride import JointStrideAttention, TemporalStrideAttention
from drat.verification.oracle import full_attention_oracle

TRIAL_WIDTH = 8
TRIAL_HEADS = 2


def _oracle_dot_products(tokens: int, rng: np.random.Generator) -> int:
    x = rng.normal(size=(tokens, TRIAL_WIDTH))
    with count_ops() as counter:
        full_attention_oracle(x, x, x, TRIAL_HEADS)
    return counter.dot_products


def _report(axis, frames, joints, per_step, wnd, plan, stride_dots, oracle_dots) -> ComplexityReport:
    ratio = stride_dots / oracle_dots
    return ComplexityReport(
        axis=axis,
        frames=frames,
        joints=joints,
        tokens_per_step=per_step,
        wnd=wnd,
        stride=plan.stride,
        query_windows=len(plan.query_starts),
        stride_dot_products=stride_dots,
        oracle_dot_products=oracle_dots,
        ratio=ratio,
        sparser=ratio <= 1.0,
    )


def measure_joint_stride(
    joints: int, frames: int, wnd: int, stride: Optional[int] = None, seed: int = 0
) -> ComplexityReport:
    """Joint-stride attention over P (with two modal tokens) against full attention over T·(R+2) tokens."""
    rng = np.random.default_rng(seed)
    layer = JointStrideAttention(TRIAL_WIDTH, TRIAL_HEADS, wnd, rng, stride=stride)
    plan = layer.plan(joints)
    p = Tensor(rng.normal(size=(TRIAL_WIDTH, frames, joints)))
    modal = [Tensor(rng.normal(size=(TRIAL_WIDTH, frames, 1))) for _ in range(2)]
    with no_grad(), count_ops() as counter:
        layer(p, modal)
    per_step = joints + 2
    oracle = _oracle_dot_products(frames * per_step, rng)
    return _report("joints", frames, joints, per_step, wnd, plan, counter.dot_products, oracle)


def measure_temporal_stride(
    frames: int,
    wnd: int,
    cells: int = 1,
    joints: int = 1,
    modal_tokens: int = 3,
    stride: Optional[int] = None,
    seed: int = 0,
) -> ComplexityReport:
    """Temporal-stride attention over D_n = cells + joints + modal tokens per frame against full attention."""
    if cells < 1:
        raise ContractViolation("temporal measurement needs at least one RGB cell per frame")
    rng = np.random.default_rng(seed)
    layer = TemporalStrideAttention(TRIAL_WIDTH, TRIAL_HEADS, wnd, rng, stride=stride)
    plan = layer.plan(frames)
    z = Tensor(rng.normal(size=(TRIAL_WIDTH, frames, 1, cells)))
    p = Tensor(rng.normal(size=(TRIAL_WIDTH, frames, joints)))
    modal = [Tensor(rng.normal(size=(TRIAL_WIDTH, frames, 1))) for _ in range(modal_tokens)]
    with no_grad(), count_ops() as counter:
        layer(z, p, modal)
    per_step = cells + joints + modal_tokens
    oracle = _oracle_dot_products(frames * per_step, rng)
    return _report("time", frames, joints, per_step, wnd, plan, counter.dot_products, oracle)


def growth(small: ComplexityReport, large: ComplexityReport):
    """(stride growth, oracle growth) between two measurements."""
    return (
        large.stride_dot_products / small.stride_dot_products,
        large.oracle_dot_products / small.oracle_dot_products,
    )
