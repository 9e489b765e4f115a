import numpy as np
import pytest

from drat.core import ops
from drat.core.errors import ContractViolation
from drat.core.gradcheck import check_gradients
from drat.core.tensor import Tensor
from drat.nn.attention import record_attention
from drat.nn.stride import JointStrideAttention, TemporalStrideAttention, window_starts
from drat.verification.complexity import growth, measure_joint_stride, measure_temporal_stride
from drat.verification.oracle import reference_block, token_rows


@pytest.mark.parametrize(
    "length, wnd, stride, queries, kv",
    [
        (8, 4, None, (0, 2, 4), (2, 4)),
        (9, 4, None, (0, 2, 4, 5), (2, 4, 5)),
        (5, 2, None, (0, 1, 2, 3), (1, 2, 3)),
        (7, 4, None, (0, 2, 3), (2, 3)),
        (4, 4, None, (0,), (0,)),
        (10, 4, 4, (0, 4, 6), (4, 6)),
        (6, 1, None, (0, 1, 2, 3, 4, 5), (1, 2, 3, 4, 5)),
    ],
)
def test_window_lattices(length, wnd, stride, queries, kv):
    plan = window_starts(length, wnd, stride)
    assert plan.query_starts == queries
    assert plan.kv_starts == kv
    assert plan.coverage().min() >= 1


def test_pairing_reuses_last_kv_window():
    plan = window_starts(5, 2)
    assert plan.windows == [(0, 1), (1, 2), (2, 3), (3, 3)]


@pytest.mark.parametrize("length, wnd, stride", [(3, 4, None), (5, 0, None), (8, 4, 5), (8, 4, 0)])
def test_invalid_windows(length, wnd, stride):
    with pytest.raises(ContractViolation):
        window_starts(length, wnd, stride)


def test_joint_single_window_matches_oracle(rng):
    layer = JointStrideAttention(8, 2, 5, rng)
    p = rng.normal(size=(8, 3, 5))
    modal = [rng.normal(size=(8, 3, 1)) for _ in range(2)]
    p_out, modal_out = layer(Tensor(p), [Tensor(m) for m in modal])
    rows = token_rows([p] + modal, axis=2)
    expected = reference_block(layer.block, rows, rows)
    got = token_rows([p_out.data] + [m.data for m in modal_out], axis=2)
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_temporal_single_window_matches_oracle(rng):
    layer = TemporalStrideAttention(8, 2, 3, rng)
    z = rng.normal(size=(8, 3, 2, 2))
    p = rng.normal(size=(8, 3, 4))
    modal = [rng.normal(size=(8, 3, 1)) for _ in range(3)]
    z_out, p_out, modal_out = layer(Tensor(z), Tensor(p), [Tensor(m) for m in modal])
    rows = token_rows([z.reshape(8, 3, 4), p] + modal, axis=2)
    expected = reference_block(layer.block, rows, rows)
    got = token_rows([z_out.data.reshape(8, 3, 4), p_out.data] + [m.data for m in modal_out], axis=2)
    np.testing.assert_allclose(got, expected, atol=1e-9)


def test_joint_windows_attend_to_shifted_keys(rng):
    layer = JointStrideAttention(8, 2, 2, rng)
    p = Tensor(rng.normal(size=(8, 2, 5)))
    modal = [Tensor(rng.normal(size=(8, 2, 1)))]
    with record_attention() as recorder:
        p_out, modal_out = layer(p, modal, tag="joint")
    assert p_out.shape == (8, 2, 5)
    assert modal_out[0].shape == (8, 2, 1)
    records = recorder.by_tag("joint")
    assert [(r.meta["query_start"], r.meta["kv_start"]) for r in records] == [(0, 1), (1, 2), (2, 3), (3, 3)]
    # (wnd + modal) tokens per frame, two frames
    assert records[0].weights.shape == (2, 6, 6)


def test_temporal_windows_keep_shapes(rng):
    layer = TemporalStrideAttention(8, 2, 2, rng)
    z = Tensor(rng.normal(size=(8, 5, 1, 2)))
    p = Tensor(rng.normal(size=(8, 5, 3)))
    modal = [Tensor(rng.normal(size=(8, 5, 1))) for _ in range(2)]
    with record_attention() as recorder:
        z_out, p_out, modal_out = layer(z, p, modal, tag="temporal")
    assert z_out.shape == z.shape and p_out.shape == p.shape
    assert [m.shape for m in modal_out] == [(8, 5, 1), (8, 5, 1)]
    record = recorder.by_tag("temporal")[0]
    assert record.meta["tokens_per_step"] == 2 + 3 + 2
    assert record.weights.shape == (2, 14, 14)


def test_stride_layers_gradients(rng):
    joint = JointStrideAttention(4, 2, 2, rng)
    temporal = TemporalStrideAttention(4, 2, 2, rng)
    z = Tensor(rng.normal(size=(4, 3, 1, 2)), requires_grad=True)
    p = Tensor(rng.normal(size=(4, 3, 3)), requires_grad=True)
    m = Tensor(rng.normal(size=(4, 3, 1)), requires_grad=True)
    w_z = Tensor(rng.normal(size=z.shape))
    w_p = Tensor(rng.normal(size=p.shape))
    w_m = Tensor(rng.normal(size=m.shape))

    def evaluate():
        p1, (m1,) = joint(p, [m])
        z2, p2, (m2,) = temporal(z, p1, [m1])
        total = ops.add(ops.sum(ops.mul(z2, w_z)), ops.sum(ops.mul(p2, w_p)))
        return ops.add(total, ops.sum(ops.mul(m2, w_m)))

    targets = [("z", z), ("p", p), ("m", m)] + list(joint.named_parameters()) + list(temporal.named_parameters())
    result = check_gradients(evaluate, targets, components=4, seed=2, floor=1e-5)
    assert result.max_relative_error < 1e-4


def test_joint_stride_counts():
    expected = {8: (432, 400), 16: (1008, 1296), 32: (2160, 4624)}
    for joints, (stride_dots, oracle_dots) in expected.items():
        report = measure_joint_stride(joints, 2, 4)
        assert (report.stride_dot_products, report.oracle_dot_products) == (stride_dots, oracle_dots)
    assert not measure_joint_stride(8, 2, 4).sparser
    assert measure_joint_stride(32, 2, 4).ratio == pytest.approx(2160 / 4624)


def test_joint_growth_is_linear_against_quadratic():
    stride_growth, oracle_growth = growth(measure_joint_stride(64, 2, 4), measure_joint_stride(128, 2, 4))
    assert stride_growth == pytest.approx(9072 / 4464)
    assert 1.8 <= stride_growth <= 2.2
    assert 3.8 <= oracle_growth <= 4.2


def test_temporal_growth_is_linear_against_quadratic():
    small, large = measure_temporal_stride(32, 4), measure_temporal_stride(64, 4)
    assert small.tokens_per_step == 5
    assert small.stride_dot_products == 15 * 400
    stride_growth, oracle_growth = growth(small, large)
    assert stride_growth == pytest.approx(12400 / 6000)
    assert oracle_growth == pytest.approx(4.0)


def test_coverage_over_random_lengths(rng):
    for _ in range(200):
        length = int(rng.integers(1, 40))
        wnd = int(rng.integers(1, length + 1))
        plan = window_starts(length, wnd)
        assert plan.coverage().min() >= 1
        assert all(start + wnd <= length for start in plan.query_starts + plan.kv_starts)
        assert list(plan.query_starts) == sorted(set(plan.query_starts))
