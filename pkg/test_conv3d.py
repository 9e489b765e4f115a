import numpy as np
import pytest

from drat.core.conv import as_triple, conv3d, conv_output_extents
from drat.core.counters import count_ops
from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor


def direct_conv(x, kernel, stride):
    c_out, _, kt, kh, kw = kernel.shape
    st, sh, sw = stride
    out_shape = conv_output_extents(x.shape[1:], (kt, kh, kw), stride)
    out = np.zeros((c_out,) + out_shape)
    for o in range(c_out):
        for t in range(out_shape[0]):
            for i in range(out_shape[1]):
                for j in range(out_shape[2]):
                    patch = x[:, t * st : t * st + kt, i * sh : i * sh + kh, j * sw : j * sw + kw]
                    out[o, t, i, j] = np.sum(patch * kernel[o])
    return out


@pytest.mark.parametrize("stride", [(1, 1, 1), (1, 2, 2), (2, 1, 3)])
def test_conv3d_matches_direct_loops(rng, stride):
    x = rng.normal(size=(2, 5, 6, 7))
    kernel = rng.normal(size=(3, 2, 2, 2, 2))
    out = conv3d(Tensor(x), Tensor(kernel), stride)
    np.testing.assert_allclose(out.data, direct_conv(x, kernel, stride), atol=1e-12)


def test_conv3d_bias_and_macs(rng):
    x = Tensor(rng.normal(size=(2, 2, 4, 4)))
    kernel = Tensor(np.zeros((3, 2, 1, 2, 2)))
    bias = Tensor(np.array([1.0, 2.0, 3.0]))
    with count_ops() as counter:
        out = conv3d(x, kernel, (1, 2, 2), bias)
    assert out.shape == (3, 2, 2, 2)
    np.testing.assert_allclose(out.data[2], 3.0)
    assert counter.mac_ops == 3 * 2 * 2 * 2 * 2 * 1 * 2 * 2


def test_conv3d_input_gradient_is_adjoint(rng):
    x = Tensor(rng.normal(size=(2, 4, 5, 5)), requires_grad=True)
    kernel = Tensor(rng.normal(size=(3, 2, 2, 3, 2)), requires_grad=True)
    out = conv3d(x, kernel, (1, 2, 1))
    g = rng.normal(size=out.shape)
    out.backward(g)
    # <conv(x), g> is linear in x, so <grad_x, x> must equal it
    assert np.sum(x.grad * x.data) == pytest.approx(np.sum(out.data * g))
    assert np.sum(kernel.grad * kernel.data) == pytest.approx(np.sum(out.data * g))


def test_conv3d_rejects_bad_shapes():
    with pytest.raises(ContractViolation):
        conv3d(Tensor(np.ones((2, 1, 1, 1))), Tensor(np.ones((1, 2, 2, 2, 2))))
    with pytest.raises(ContractViolation):
        conv3d(Tensor(np.ones((3, 2, 2, 2))), Tensor(np.ones((1, 2, 1, 1, 1))))


def test_as_triple():
    assert as_triple(2, "k") == (2, 2, 2)
    assert as_triple([1, 2, 3], "k") == (1, 2, 3)
    with pytest.raises(ContractViolation):
        as_triple(0, "k")


def test_single_window_is_full_product_sum(rng):
    x = rng.normal(size=(1, 3, 3, 3))
    kernel = rng.normal(size=(1, 1, 3, 3, 3))
    out = conv3d(Tensor(x), Tensor(kernel))
    assert out.shape == (1, 1, 1, 1)
    assert out.data.item() == pytest.approx(np.sum(x[0] * kernel[0, 0]))


def test_delta_kernel_crops_center(rng):
    x = rng.normal(size=(1, 5, 6, 7))
    kernel = np.zeros((1, 1, 3, 3, 3))
    kernel[0, 0, 1, 1, 1] = 1.0
    out = conv3d(Tensor(x), Tensor(kernel))
    np.testing.assert_array_equal(out.data, x[:, 1:-1, 1:-1, 1:-1])


def test_output_extent_formula():
    assert conv_output_extents((12, 12, 12), (7, 7, 7), (7, 7, 7)) == (1, 1, 1)
    assert conv_output_extents((12, 4, 4), (2, 2, 2), (2, 2, 2)) == (6, 2, 2)
