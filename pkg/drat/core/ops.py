"""
Primitive tensor operations with analytic reverse-mode gradients.

Shapes must match explicitly. The only broadcast is a 1-D vector applied along
the last axis (bias in ``add``, gain in ``mul``).
"""
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import erf, logsumexp

from drat.core.counters import active_counter
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor

LAYER_NORM_EPS = 1e-5
_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

Axis = Optional[Union[int, Tuple[int, ...]]]


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractViolation(message)


def _is_last_axis_vector(a: Tensor, b: Tensor) -> bool:
    return b.ndim == 1 and a.ndim >= 1 and b.shape[0] == a.shape[-1] and a.shape != b.shape


def _sum_to_last_axis(g: np.ndarray) -> np.ndarray:
    return g.reshape(-1, g.shape[-1]).sum(axis=0)


# --------------------------------------------------------------------------- #
# Linear algebra
# --------------------------------------------------------------------------- #


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """``a @ b`` where ``b`` is a 2-D weight or has ``a``'s batch dimensions."""
    _require(a.ndim >= 2 and b.ndim >= 2, f"matmul needs ≥2-D operands, got {a.shape} @ {b.shape}")
    _require(a.shape[-1] == b.shape[-2], f"matmul inner extents differ: {a.shape} @ {b.shape}")
    weight_form = b.ndim == 2
    if not weight_form:
        _require(
            a.ndim == b.ndim and a.shape[:-2] == b.shape[:-2],
            f"matmul batch extents differ: {a.shape} @ {b.shape}",
        )
    out = np.matmul(a.data, b.data)

    counter = active_counter()
    if counter is not None:
        counter.record_macs(int(np.prod(out.shape)) * a.shape[-1])

    a_data, b_data = a.data, b.data

    def backward(g: np.ndarray):
        grad_a = np.matmul(g, np.swapaxes(b_data, -1, -2))
        if weight_form:
            lead = tuple(range(a_data.ndim - 1))
            grad_b = np.tensordot(a_data, g, axes=(lead, lead))
        else:
            grad_b = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return grad_a, grad_b

    return Tensor.from_op(out, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """``x @ weight (+ bias)`` with ``weight`` shaped (in, out)."""
    _require(weight.ndim == 2, f"linear weight must be 2-D, got {weight.shape}")
    out = matmul(x, weight)
    if bias is not None:
        _require(bias.shape == (weight.shape[1],), f"bias {bias.shape} != ({weight.shape[1]},)")
        out = add(out, bias)
    return out


# --------------------------------------------------------------------------- #
# Elementwise
# --------------------------------------------------------------------------- #


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape == b.shape:
        return Tensor.from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")
    _require(_is_last_axis_vector(a, b), f"add shapes differ: {a.shape} + {b.shape}")
    return Tensor.from_op(
        a.data + b.data, (a, b), lambda g: (g, _sum_to_last_axis(g)), "add_bias"
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _require(a.shape == b.shape, f"sub shapes differ: {a.shape} - {b.shape}")
    return Tensor.from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    a_data, b_data = a.data, b.data
    if a.shape == b.shape:
        return Tensor.from_op(
            a_data * b_data, (a, b), lambda g: (g * b_data, g * a_data), "mul"
        )
    _require(_is_last_axis_vector(a, b), f"mul shapes differ: {a.shape} * {b.shape}")
    return Tensor.from_op(
        a_data * b_data,
        (a, b),
        lambda g: (g * b_data, _sum_to_last_axis(g * a_data)),
        "mul_gain",
    )


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return Tensor.from_op(a.data * factor, (a,), lambda g: (g * factor,), "scale")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor.from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)``."""
    x_data = x.data
    cdf = 0.5 * (1.0 + erf(x_data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x_data * x_data)
    return Tensor.from_op(x_data * cdf, (x,), lambda g: (g * (cdf + x_data * pdf),), "gelu")


# --------------------------------------------------------------------------- #
# Normalization
# --------------------------------------------------------------------------- #


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(s, (x,), backward, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    width = x.shape[-1]
    _require(gamma.shape == (width,) and beta.shape == (width,), "layer_norm gain/shift must match last axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    x_hat = centered * inv_std
    gamma_data = gamma.data

    def backward(g: np.ndarray):
        d_hat = g * gamma_data
        grad_x = inv_std / width * (
            width * d_hat
            - d_hat.sum(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=-1, keepdims=True)
        )
        return grad_x, _sum_to_last_axis(g * x_hat), _sum_to_last_axis(g)

    return Tensor.from_op(x_hat * gamma_data + beta.data, (x, gamma, beta), backward, "layer_norm")


# --------------------------------------------------------------------------- #
# Reductions
# --------------------------------------------------------------------------- #


def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = tuple(sorted(a % ndim for a in axes))
    _require(len(set(normalized)) == len(normalized), f"repeated reduction axis in {axis}")
    return normalized


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _normalize_axes(axis, x.ndim)
    in_shape = x.shape
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, in_shape).copy(),)

    return Tensor.from_op(out, (x,), backward, "sum")


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axes, keepdims=keepdims), 1.0 / count)


def cross_entropy(logits: Tensor, labels: Union[int, Sequence[int], np.ndarray]) -> Tensor:
    """Mean softmax cross-entropy; ``logits`` is (K,) or (B, K)."""
    _require(logits.ndim in (1, 2), f"cross_entropy expects (K,) or (B, K), got {logits.shape}")
    batched = logits.ndim == 2
    z = logits.data if batched else logits.data[None, :]
    targets = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    _require(targets.shape == (z.shape[0],), f"{targets.size} labels for {z.shape[0]} rows")
    _require(
        bool(np.all((targets >= 0) & (targets < z.shape[1]))),
        f"labels must lie in [0, {z.shape[1]})",
    )
    rows = np.arange(z.shape[0])
    lse = logsumexp(z, axis=1)
    loss = float(np.mean(lse - z[rows, targets]))

    def backward(g: np.ndarray):
        probs = np.exp(z - lse[:, None])
        probs[rows, targets] -= 1.0
        grad = probs * (float(g) / z.shape[0])
        return (grad if batched else grad[0],)

    return Tensor.from_op(np.array(loss), (logits,), backward, "cross_entropy")


# --------------------------------------------------------------------------- #
# Structural
# --------------------------------------------------------------------------- #


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    _require(len(tensors) > 0, "concat needs at least one tensor")
    ndim = tensors[0].ndim
    axis = axis % ndim
    for t in tensors[1:]:
        _require(
            t.ndim == ndim and all(t.shape[d] == tensors[0].shape[d] for d in range(ndim) if d != axis),
            f"concat extents differ off axis {axis}: {[t.shape for t in tensors]}",
        )
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g: np.ndarray):
        return [
            np.take(g, np.arange(bounds[i], bounds[i + 1]), axis=axis) for i in range(len(tensors))
        ]

    return Tensor.from_op(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward, "concat"
    )


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % x.ndim
    _require(0 <= start < stop <= x.shape[axis], f"slice [{start}:{stop}) outside extent {x.shape[axis]}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    in_shape = x.shape

    def backward(g: np.ndarray):
        grad = np.zeros(in_shape)
        grad[index] = g
        return (grad,)

    return Tensor.from_op(x.data[index].copy(), (x,), backward, "slice")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    in_shape = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ContractViolation(f"cannot reshape {in_shape} to {tuple(shape)}") from exc
    return Tensor.from_op(out, (x,), lambda g: (g.reshape(in_shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    _require(sorted(axes) == list(range(x.ndim)), f"invalid permutation {axes} for {x.ndim}-D tensor")
    inverse = tuple(np.argsort(axes))
    return Tensor.from_op(
        np.transpose(x.data, axes).copy(), (x,), lambda g: (np.transpose(g, inverse),), "transpose"
    )


def overlap_mean(parts: Sequence[Tensor], starts: Sequence[int], length: int, axis: int) -> Tensor:
    """Place each part at its start along ``axis`` and average where parts overlap."""
    _require(len(parts) == len(starts) and len(parts) > 0, "overlap_mean needs one start per part")
    ndim = parts[0].ndim
    axis = axis % ndim
    shape = list(parts[0].shape)
    shape[axis] = length
    coverage = np.zeros(length)
    spans: List[Tuple[int, int]] = []
    for part, start in zip(parts, starts):
        stop = start + part.shape[axis]
        _require(0 <= start and stop <= length, f"part [{start}:{stop}) outside extent {length}")
        expected = tuple(shape[d] if d != axis else part.shape[axis] for d in range(ndim))
        _require(part.shape == expected, f"part shape {part.shape} != {expected}")
        coverage[start:stop] += 1.0
        spans.append((start, stop))
    _require(bool(np.all(coverage > 0)), "overlap_mean parts leave positions uncovered")

    view = [1] * ndim
    view[axis] = length
    inv = (1.0 / coverage).reshape(view)

    total = np.zeros(shape)
    for part, (start, stop) in zip(parts, spans):
        index = [slice(None)] * ndim
        index[axis] = slice(start, stop)
        total[tuple(index)] += part.data

    def backward(g: np.ndarray):
        weighted = g * inv
        grads = []
        for start, stop in spans:
            index = [slice(None)] * ndim
            index[axis] = slice(start, stop)
            grads.append(weighted[tuple(index)].copy())
        return grads

    return Tensor.from_op(total * inv, tuple(parts), backward, "overlap_mean")


def stack_mean(tensors: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of equally shaped tensors."""
    _require(len(tensors) > 0, "stack_mean needs at least one tensor")
    shape = tensors[0].shape
    for t in tensors:
        _require(t.shape == shape, f"stack_mean shapes differ: {[t.shape for t in tensors]}")
    if len(tensors) == 1:
        return tensors[0]
    stacked = concat([reshape(t, (1,) + shape) for t in tensors], axis=0)
    return mean(stacked, axis=0)
