"""
Multi-head attention and the residual attention block shared by the deformable,
joint-stride and temporal-stride layers.
"""
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional

import numpy as np

from drat.core import ops
from drat.core.counters import active_counter
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.nn.module import LayerNorm, Linear, Module, init_tensor


@dataclass
class AttentionRecord:
    tag: str
    weights: np.ndarray  # (heads, queries, keys)
    meta: Dict[str, Any] = field(default_factory=dict)


@dataclass
class AttentionRecorder:
    records: List[AttentionRecord] = field(default_factory=list)
    points: Dict[str, np.ndarray] = field(default_factory=dict)

    def by_tag(self, tag: str) -> List[AttentionRecord]:
        return [r for r in self.records if r.tag == tag]


_recorder: ContextVar[Optional[AttentionRecorder]] = ContextVar("drat_attention_recorder", default=None)


def active_recorder() -> Optional[AttentionRecorder]:
    return _recorder.get()


@contextmanager
def record_attention() -> Iterator[AttentionRecorder]:
    recorder = AttentionRecorder()
    token = _recorder.set(recorder)
    try:
        yield recorder
    finally:
        _recorder.reset(token)


def _split_heads(x: Tensor, heads: int) -> Tensor:
    n, width = x.shape
    return ops.transpose(ops.reshape(x, (n, heads, width // heads)), (1, 0, 2))


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    heads: int,
    scaled: bool = True,
    tag: str = "attention",
    meta: Optional[Dict[str, Any]] = None,
) -> Tensor:
    """softmax(QKᵀ/√d_h)V per head over (n, width) token matrices."""
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ContractViolation("attention expects (tokens, width) matrices")
    if k.shape != v.shape or q.shape[1] != k.shape[1]:
        raise ContractViolation(f"attention shapes disagree: q{q.shape} k{k.shape} v{v.shape}")
    n_q, width = q.shape
    if width % heads:
        raise ContractViolation(f"width {width} is not divisible by {heads} heads")
    head_width = width // heads

    qh, kh, vh = _split_heads(q, heads), _split_heads(k, heads), _split_heads(v, heads)
    scores = ops.matmul(qh, ops.transpose(kh, (0, 2, 1)))
    if scaled:
        scores = ops.scale(scores, 1.0 / np.sqrt(head_width))
    weights = ops.softmax(scores, axis=-1)

    counter = active_counter()
    if counter is not None:
        counter.record_attention(n_q, k.shape[0])
    recorder = active_recorder()
    if recorder is not None:
        recorder.records.append(AttentionRecord(tag, weights.numpy(), dict(meta or {})))

    out = ops.matmul(weights, vh)
    return ops.reshape(ops.transpose(out, (1, 0, 2)), (n_q, width))


class AttentionBlock(Module):
    """
    ``X + MSA(X W_q, X̃ W_k, X̃ W_v)`` followed by ``X + FFN(LN(X))``.

    The FFN expands 4x with GELU. There is no output projection. ``scaled``
    toggles the 1/√d_h factor (switched off only to inject faults).
    """

    def __init__(self, width: int, heads: int, rng: np.random.Generator):
        if width % heads:
            raise ContractViolation(f"width {width} is not divisible by {heads} heads")
        self.width = width
        self.heads = heads
        self.scaled = True
        self.wq = init_tensor(rng, (width, width), 1.0 / np.sqrt(width))
        self.wk = init_tensor(rng, (width, width), 1.0 / np.sqrt(width))
        self.wv = init_tensor(rng, (width, width), 1.0 / np.sqrt(width))
        self.norm = LayerNorm(width)
        self.ffn_in = Linear(width, 4 * width, rng)
        self.ffn_out = Linear(4 * width, width, rng, scale=0.5 / np.sqrt(4 * width))

    def __call__(
        self,
        queries: Tensor,
        context: Tensor,
        tag: str = "attention",
        meta: Optional[Dict[str, Any]] = None,
    ) -> Tensor:
        if queries.ndim != 2 or queries.shape[1] != self.width or context.ndim != 2 or context.shape[1] != self.width:
            raise ContractViolation(
                f"block of width {self.width} got queries {queries.shape} and context {context.shape}"
            )
        attended = multi_head_attention(
            ops.matmul(queries, self.wq),
            ops.matmul(context, self.wk),
            ops.matmul(context, self.wv),
            self.heads,
            scaled=self.scaled,
            tag=tag,
            meta=meta,
        )
        x = ops.add(queries, attended)
        hidden = ops.gelu(self.ffn_in(self.norm(x)))
        return ops.add(x, self.ffn_out(hidden))
