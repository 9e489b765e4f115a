import numpy as np
import pytest

from drat.core import ops
from drat.core.counters import OpCounter, count_ops
from drat.core.errors import ContractViolation, NumericError
from drat.core.tensor import Tensor, is_grad_enabled, no_grad


def test_backward_accumulates_through_shared_parent():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    y = ops.sum(ops.add(ops.mul(x, x), x))
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + 1)


def test_backward_twice_accumulates_into_leaf():
    x = Tensor([2.0], requires_grad=True)
    ops.sum(ops.scale(x, 3.0)).backward()
    ops.sum(ops.scale(x, 3.0)).backward()
    np.testing.assert_allclose(x.grad, [6.0])


def test_deep_chain_does_not_recurse():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x
    for _ in range(5000):
        y = ops.scale(y, 1.0)
    ops.sum(y).backward()
    np.testing.assert_allclose(x.grad, np.ones(2))


def test_no_grad_skips_graph():
    x = Tensor(np.ones(3), requires_grad=True)
    with no_grad():
        assert not is_grad_enabled()
        y = ops.scale(x, 2.0)
    assert is_grad_enabled()
    assert not y.requires_grad
    with pytest.raises(ContractViolation):
        y.backward()


def test_shape_mismatch_is_contract_violation():
    with pytest.raises(ContractViolation):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))
    with pytest.raises(ContractViolation):
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))


def test_last_axis_bias_broadcast():
    x = Tensor(np.zeros((2, 3, 4)), requires_grad=True)
    b = Tensor(np.arange(4.0), requires_grad=True)
    out = ops.add(x, b)
    np.testing.assert_allclose(out.data[1, 2], np.arange(4.0))
    ops.sum(out).backward()
    np.testing.assert_allclose(b.grad, np.full(4, 6.0))


def test_non_finite_values_raise_numeric_error():
    with pytest.raises(NumericError):
        Tensor([np.nan])
    x = Tensor([1e200, 1e200])
    with pytest.raises(NumericError):
        ops.mul(x, x)


def test_zero_extent_rejected():
    with pytest.raises(ContractViolation):
        Tensor(np.ones((0, 3)))


def test_softmax_rows_sum_to_one_and_resist_overflow():
    x = Tensor([[1000.0, 1001.0, 999.0], [0.0, 0.0, 0.0]])
    s = ops.softmax(x, axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), 1.0)
    np.testing.assert_allclose(s.data[1], np.full(3, 1 / 3))


def test_layer_norm_normalizes_last_axis(rng):
    x = Tensor(rng.uniform(-20, 20, size=(4, 6)))
    out = ops.layer_norm(x, Tensor(np.ones(6)), Tensor(np.zeros(6)))
    np.testing.assert_allclose(out.data.mean(axis=-1), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.data.var(axis=-1), 1.0, rtol=1e-4)


def test_gelu_matches_known_values():
    out = ops.gelu(Tensor([0.0, 1.0, -1.0]))
    np.testing.assert_allclose(out.data, [0.0, 0.8413447460685429, -0.15865525393145707], rtol=1e-12)


def test_cross_entropy_of_uniform_logits_is_log_k():
    loss = ops.cross_entropy(Tensor(np.zeros(4)), 2)
    assert loss.item() == pytest.approx(np.log(4))
    batched = ops.cross_entropy(Tensor(np.zeros((3, 5))), [0, 1, 4])
    assert batched.item() == pytest.approx(np.log(5))
    with pytest.raises(ContractViolation):
        ops.cross_entropy(Tensor(np.zeros(4)), 4)


def test_overlap_mean_averages_covered_positions():
    a = Tensor(np.ones((1, 3)))
    b = Tensor(np.full((1, 3), 3.0))
    out = ops.overlap_mean([a, b], [0, 2], 5, axis=1)
    np.testing.assert_allclose(out.data, [[1.0, 1.0, 2.0, 3.0, 3.0]])
    with pytest.raises(ContractViolation):
        ops.overlap_mean([a], [0], 5, axis=1)


def test_stack_mean_and_concat_slice():
    a, b = Tensor(np.ones((2, 2))), Tensor(np.full((2, 2), 3.0))
    np.testing.assert_allclose(ops.stack_mean([a, b]).data, np.full((2, 2), 2.0))
    joined = ops.concat([a, b], axis=1)
    assert joined.shape == (2, 4)
    np.testing.assert_allclose(ops.slice_axis(joined, 1, 2, 4).data, b.data)


def test_counter_records_matmul_macs():
    a, b = Tensor(np.ones((3, 4))), Tensor(np.ones((4, 5)))
    with count_ops() as counter:
        ops.matmul(a, b)
    assert counter.mac_ops == 3 * 4 * 5
    assert counter.snapshot() == {"dot_products": 0, "mac_ops": 60}
    ops.matmul(a, b)
    assert counter.mac_ops == 60


def test_counter_can_be_reused():
    counter = OpCounter()
    counter.record_attention(3, 7)
    assert counter.dot_products == 21
    counter.reset()
    assert counter.dot_products == 0


def test_softmax_is_shift_invariant(rng):
    x = rng.normal(size=(3, 5))
    shifted = ops.softmax(Tensor(x + 17.25)).data
    np.testing.assert_allclose(ops.softmax(Tensor(x)).data, shifted, atol=1e-12)


def test_concat_then_slice_is_identity(rng):
    a, b = Tensor(rng.normal(size=(2, 3))), Tensor(rng.normal(size=(2, 4)))
    joined = ops.concat([a, b], axis=1)
    np.testing.assert_array_equal(ops.slice_axis(joined, 1, 0, 3).data, a.data)
    np.testing.assert_array_equal(ops.slice_axis(joined, 1, 3, 7).data, b.data)


def test_gelu_slope_at_zero():
    x = Tensor([0.0], requires_grad=True)
    ops.sum(ops.gelu(x)).backward()
    assert x.grad[0] == pytest.approx(0.5)
