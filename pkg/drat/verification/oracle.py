"""
Reference computations in plain numpy, independent of the autograd ops.

They read weights from live modules but recompute everything else directly.
"""
from typing import Sequence

import numpy as np
from scipy.special import erf

from drat.core.counters import active_counter
from drat.core.errors import ContractViolation
from drat.nn.attention import AttentionBlock

LAYER_NORM_EPS = 1e-5


def full_attention_oracle(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, heads: int, scaled: bool = True
) -> np.ndarray:
    """softmax(Q Kᵀ / √d_h) V per head over every token; (n_q, C)."""
    q, k, v = (np.asarray(a, dtype=np.float64) for a in (q, k, v))
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2 or k.shape != v.shape or q.shape[1] != k.shape[1]:
        raise ContractViolation(f"oracle shapes disagree: q{q.shape} k{k.shape} v{v.shape}")
    n_q, width = q.shape
    if width % heads:
        raise ContractViolation(f"width {width} is not divisible by {heads} heads")
    head_width = width // heads
    out = np.empty((n_q, width))
    for h in range(heads):
        cols = slice(h * head_width, (h + 1) * head_width)
        scores = q[:, cols] @ k[:, cols].T
        if scaled:
            scores = scores / np.sqrt(head_width)
        scores = scores - scores.max(axis=1, keepdims=True)
        weights = np.exp(scores)
        weights /= weights.sum(axis=1, keepdims=True)
        out[:, cols] = weights @ v[:, cols]

    counter = active_counter()
    if counter is not None:
        counter.record_attention(n_q, k.shape[0])
    return out


def reference_layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LAYER_NORM_EPS) * gamma + beta


def reference_gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def reference_block(block: AttentionBlock, queries: np.ndarray, context: np.ndarray) -> np.ndarray:
    """The attention block's output recomputed with the oracle; scaling is always applied."""
    wq, wk, wv = block.wq.data, block.wk.data, block.wv.data
    x = queries + full_attention_oracle(queries @ wq, context @ wk, context @ wv, block.heads)
    normed = reference_layer_norm(x, block.norm.gamma.data, block.norm.beta.data)
    hidden = reference_gelu(normed @ block.ffn_in.weight.data + block.ffn_in.bias.data)
    return x + hidden @ block.ffn_out.weight.data + block.ffn_out.bias.data


def token_rows(parts: Sequence[np.ndarray], axis: int) -> np.ndarray:
    """Concatenate (C, A, B) parts along ``axis`` and return (A·B, C) rows."""
    joined = np.concatenate(parts, axis=axis)
    channels = joined.shape[0]
    return np.transpose(joined, (1, 2, 0)).reshape(-1, channels)
