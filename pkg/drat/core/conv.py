"""Valid (unpadded) 3D convolution over C×T×H×W tensors."""
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from drat.core.counters import active_counter
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor

Triple = Tuple[int, int, int]


def as_triple(value: Union[int, Sequence[int]], name: str) -> Triple:
    if isinstance(value, (int, np.integer)):
        triple = (int(value),) * 3
    else:
        triple = tuple(int(v) for v in value)
    if len(triple) != 3 or any(v < 1 for v in triple):
        raise ContractViolation(f"{name} must be a positive int or three positive ints, got {value}")
    return triple  # type: ignore[return-value]


def conv_output_extents(extents: Sequence[int], kernel: Triple, stride: Triple) -> Triple:
    out = []
    for extent, k, s in zip(extents, kernel, stride):
        if extent < k:
            raise ContractViolation(f"extent {extent} is smaller than kernel {k}")
        out.append((extent - k) // s + 1)
    return tuple(out)  # type: ignore[return-value]


def conv3d(
    x: Tensor,
    kernel: Tensor,
    stride: Union[int, Sequence[int]] = 1,
    bias: Optional[Tensor] = None,
) -> Tensor:
    """
    Cross-correlate ``x`` (C_in×T×H×W) with ``kernel`` (C_out×C_in×kt×kh×kw).

    Output extents are ``(n - k) // s + 1`` per axis; there is no padding.
    """
    if x.ndim != 4 or kernel.ndim != 5:
        raise ContractViolation(f"conv3d expects 4-D input and 5-D kernel, got {x.shape}, {kernel.shape}")
    c_out, c_in = kernel.shape[:2]
    if x.shape[0] != c_in:
        raise ContractViolation(f"input has {x.shape[0]} channels, kernel expects {c_in}")
    k = tuple(kernel.shape[2:])
    s = as_triple(stride, "stride")
    out_t, out_h, out_w = conv_output_extents(x.shape[1:], k, s)

    # (C_in, T', H', W', kt, kh, kw), read-only view
    windows = sliding_window_view(x.data, k, axis=(1, 2, 3))[:, :: s[0], :: s[1], :: s[2]]
    out = np.tensordot(kernel.data, windows, axes=([1, 2, 3, 4], [0, 4, 5, 6]))
    if bias is not None:
        if bias.shape != (c_out,):
            raise ContractViolation(f"conv3d bias must be ({c_out},), got {bias.shape}")
        out = out + bias.data[:, None, None, None]

    counter = active_counter()
    if counter is not None:
        counter.record_macs(c_out * out_t * out_h * out_w * c_in * k[0] * k[1] * k[2])

    in_shape = x.shape
    kernel_data = kernel.data

    def backward(g: np.ndarray):
        grad_kernel = np.tensordot(g, windows, axes=([1, 2, 3], [1, 2, 3]))
        grad_x = np.zeros(in_shape)
        for a in range(k[0]):
            for b in range(k[1]):
                for c in range(k[2]):
                    contribution = np.tensordot(kernel_data[:, :, a, b, c], g, axes=([0], [0]))
                    grad_x[
                        :,
                        a : a + s[0] * (out_t - 1) + 1 : s[0],
                        b : b + s[1] * (out_h - 1) + 1 : s[1],
                        c : c + s[2] * (out_w - 1) + 1 : s[2],
                    ] += contribution
        grads = [grad_x, grad_kernel]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2, 3)))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor.from_op(out, parents, backward, "conv3d")
