import numpy as np
import pytest

from drat.core.errors import ContractViolation
from drat.core.tensor import Tensor
from drat.models.dataset import SkeletonSequence
from drat.nn.pose import PoseTokenizer, gaussian_heatmap, raw_pose_tokens


def test_heatmap_peaks_at_joint():
    skeleton = np.array([[[3.0, 1.0], [0.0, 4.0]]])  # T=1, R=2
    heatmap = gaussian_heatmap(skeleton, 1.0, (5, 6))
    assert heatmap.shape == (1, 2, 5, 6)
    assert heatmap.values[0, 0, 1, 3] == 1.0
    assert np.unravel_index(np.argmax(heatmap.values[0, 1]), (5, 6)) == (4, 0)
    assert heatmap.values[0, 0, 1, 4] == pytest.approx(np.exp(-0.5))


def test_heatmap_accepts_skeleton_sequence():
    sequence = SkeletonSequence(T=1, R=1, frames=[[[1.5, 2.5]]])
    heatmap = gaussian_heatmap(sequence, 2.0, (4, 4))
    assert heatmap.sigma == 2.0
    assert heatmap.values[0, 0, 2, 1] == pytest.approx(np.exp(-0.5 / 8.0))


def test_heatmap_rejects_bad_input():
    with pytest.raises(ContractViolation):
        gaussian_heatmap(np.zeros((2, 3, 2)), 0.0, (4, 4))
    with pytest.raises(ContractViolation):
        gaussian_heatmap(np.zeros((2, 3)), 1.0, (4, 4))


def test_raw_tokens_are_heatmap_weighted_sums(rng):
    f_a = rng.normal(size=(3, 2, 4, 5))
    skeleton = rng.uniform(0, 4, size=(2, 3, 2))
    heatmap = gaussian_heatmap(skeleton, 1.0, (4, 5))
    tokens = raw_pose_tokens(Tensor(f_a), heatmap)
    assert tokens.shape == (3, 2, 3)
    expected = np.einsum("cthw,trhw->ctr", f_a, heatmap.values)
    np.testing.assert_allclose(tokens.data, expected, atol=1e-12)


def test_raw_tokens_check_grid():
    heatmap = gaussian_heatmap(np.zeros((2, 1, 2)), 1.0, (3, 3))
    with pytest.raises(ContractViolation):
        raw_pose_tokens(Tensor(np.ones((2, 2, 4, 4))), heatmap)


def test_tokenizer_projects_to_four_c(rng):
    tokenizer = PoseTokenizer(3, rng)
    f_a = Tensor(rng.normal(size=(3, 2, 4, 4)))
    heatmap = gaussian_heatmap(rng.uniform(0, 3, size=(2, 5, 2)), 1.0, (4, 4))
    p = tokenizer(f_a, heatmap)
    assert p.shape == (12, 2, 5)
    assert tokenizer.num_parameters() == 3 * 12 + 12
    assert np.abs(tokenizer.projection.weight.data).max() < 0.2


def test_unit_features_give_heatmap_mass(rng):
    skeleton = rng.uniform(0, 5, size=(2, 3, 2))
    heatmap = gaussian_heatmap(skeleton, 1.0, (6, 6))
    tokens = raw_pose_tokens(Tensor(np.ones((4, 2, 6, 6))), heatmap)
    np.testing.assert_allclose(tokens.data[1], heatmap.values.sum(axis=(2, 3)), atol=1e-12)


def test_narrow_heatmap_reads_the_joint_pixel(rng):
    heatmap = gaussian_heatmap(np.array([[[2.0, 3.0]]]), 0.1, (6, 6))
    values = heatmap.values[0, 0]
    assert values.sum() - values[3, 2] < 1e-6
    f_a = rng.normal(size=(2, 1, 6, 6))
    tokens = raw_pose_tokens(Tensor(f_a), gaussian_heatmap(np.array([[[2.0, 3.0]]]), 0.2, (6, 6)))
    np.testing.assert_allclose(tokens.data[:, 0, 0], f_a[:, 0, 3, 2], atol=1e-4)


def test_raw_tokens_are_linear_and_joint_equivariant(rng):
    skeleton = rng.uniform(0, 5, size=(2, 4, 2))
    heatmap = gaussian_heatmap(skeleton, 1.0, (6, 6))
    f, g = rng.normal(size=(3, 2, 6, 6)), rng.normal(size=(3, 2, 6, 6))
    combined = raw_pose_tokens(Tensor(2.0 * f - 0.5 * g), heatmap).data
    separate = 2.0 * raw_pose_tokens(Tensor(f), heatmap).data - 0.5 * raw_pose_tokens(Tensor(g), heatmap).data
    np.testing.assert_allclose(combined, separate, atol=1e-10)

    order = np.array([2, 0, 3, 1])
    permuted = raw_pose_tokens(Tensor(f), gaussian_heatmap(skeleton[:, order], 1.0, (6, 6))).data
    np.testing.assert_allclose(permuted, raw_pose_tokens(Tensor(f), heatmap).data[:, :, order], atol=1e-12)


def test_zero_features_give_projection_bias(rng):
    tokenizer = PoseTokenizer(2, rng)
    heatmap = gaussian_heatmap(rng.uniform(0, 3, size=(2, 3, 2)), 1.0, (4, 4))
    p = tokenizer(Tensor(np.zeros((2, 2, 4, 4))), heatmap)
    np.testing.assert_allclose(p.data, np.broadcast_to(tokenizer.projection.bias.data[:, None, None], (8, 2, 3)))
