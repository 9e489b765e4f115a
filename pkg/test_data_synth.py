import json

import numpy as np
import pytest

from drat.core.errors import ContractViolation, DataIOError
from drat.data.synth import (
    CLASS_NAMES,
    generate_dataset,
    load_clip,
    load_dataset_info,
    load_manifest,
    load_samples,
    make_clip,
    read_skeleton,
    skeleton_motion,
)
from drat.models.dataset import SkeletonSequence

GRID = (16, 16)


def motion(name, seed=0, frames=12, joints=5):
    return skeleton_motion(CLASS_NAMES.index(name), np.random.default_rng(seed), frames, GRID, joints)


def test_clips_are_a_pure_function_of_seed_and_index():
    a = make_clip(3, 42, 4, 5, 6, 32, 32, 5)
    b = make_clip(3, 42, 4, 5, 6, 32, 32, 5)
    c = make_clip(4, 42, 4, 5, 6, 32, 32, 5)
    np.testing.assert_array_equal(a.video, b.video)
    np.testing.assert_array_equal(a.skeleton, b.skeleton)
    assert not np.array_equal(a.skeleton, c.skeleton)
    assert a.video.dtype == np.float32
    assert a.video.shape == (3, 6, 32, 32)
    assert a.skeleton.shape == (6, 5, 2)
    assert a.label == 0 and make_clip(5, 42, 4, 5, 6, 32, 32, 5).label == 1


@pytest.mark.parametrize("label", range(len(CLASS_NAMES)))
def test_every_program_stays_on_the_grid(label):
    for seed in range(20):
        skeleton = skeleton_motion(label, np.random.default_rng(seed), 12, GRID, 5)
        SkeletonSequence.from_array(skeleton).check_bounds(*GRID)


def test_translation_programs_move_the_centroid():
    assert np.diff(motion("translate-right").mean(axis=1)[:, 0]).min() > 0
    assert np.diff(motion("translate-left").mean(axis=1)[:, 0]).max() < 0
    assert np.diff(motion("translate-down").mean(axis=1)[:, 1]).min() > 0
    assert np.diff(motion("translate-up").mean(axis=1)[:, 1]).max() < 0


def test_scale_programs_change_spread():
    def spread(skeleton):
        return np.linalg.norm(skeleton - skeleton.mean(axis=1, keepdims=True), axis=-1).mean(axis=1)

    assert np.diff(spread(motion("expand"))).min() > 0
    assert np.diff(spread(motion("contract"))).max() < 0


def test_orbits_turn_in_opposite_directions():
    def mean_turn(skeleton):
        rel = skeleton - skeleton.mean(axis=1, keepdims=True)
        angles = np.unwrap(np.arctan2(rel[..., 1], rel[..., 0]), axis=0)
        return float((angles[-1] - angles[0]).mean())

    assert mean_turn(motion("orbit-clockwise")) > 2.0
    assert mean_turn(motion("orbit-counterclockwise")) < -2.0


def test_single_frame_clip():
    skeleton = motion("expand", frames=1)
    assert skeleton.shape == (1, 5, 2)


def test_displacement_features_are_linearly_separable():
    """A ridge classifier on joint displacements separates the four translation programs."""
    def features(indices):
        rows, labels = [], []
        for index in indices:
            clip = make_clip(index, 9, 4, 50, 12, 32, 32, 5)
            rows.append(np.append((clip.skeleton - clip.skeleton[0]).ravel(), 1.0))
            labels.append(clip.label)
        return np.array(rows), np.array(labels)

    indices = np.arange(200)
    test_mask = indices % 5 == 0
    x_train, y_train = features(indices[~test_mask])
    x_test, y_test = features(indices[test_mask])
    targets = np.eye(4)[y_train]
    weights = np.linalg.solve(x_train.T @ x_train + 1e-2 * np.eye(x_train.shape[1]), x_train.T @ targets)
    acc = np.mean(np.argmax(x_test @ weights, axis=1) == y_test)
    assert acc >= 0.9


def test_generate_dataset_layout(tmp_path, tiny_dataset):
    root = tmp_path / "data"
    assert tiny_dataset.root == str(root)
    assert tiny_dataset.split_counts == {"train": 8, "test": 2}
    entries = load_manifest(root)
    assert len(entries) == 10
    assert (root / "clips" / "clip_00000.tnsr").exists()
    assert (root / "skeletons" / "clip_00009.json").exists()
    for label in range(2):
        assert sum(e.split == "test" for e in entries if e.label == label) == 1

    provenance = json.loads((root / "dataset.json").read_text())
    assert "root" not in provenance
    assert load_dataset_info(root).class_names == CLASS_NAMES[:2]


def test_loaded_clip_matches_generator(tmp_path, tiny_dataset):
    root = tmp_path / "data"
    video, skeleton = load_clip(root / "clips" / "clip_00004.tnsr")
    clip = make_clip(4, 3, 2, 5, 4, 16, 16, 3)
    np.testing.assert_array_equal(video, clip.video.astype(np.float64))
    np.testing.assert_array_equal(skeleton, clip.skeleton)
    sequence = read_skeleton(root / "skeletons" / "clip_00004.json")
    assert (sequence.T, sequence.R) == (4, 3)


def test_thread_count_does_not_change_output(tmp_path):
    kwargs = dict(num_classes=2, samples_per_class=3, frames=3, height=16, width=16, joints=2, seed=5)
    generate_dataset(tmp_path / "one", threads=1, **kwargs)
    generate_dataset(tmp_path / "many", threads=4, **kwargs)
    for name in ("manifest.json", "dataset.json", "clips/clip_00005.tnsr", "skeletons/clip_00002.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "many" / name).read_bytes()


def test_load_samples_by_split(tmp_path, tiny_dataset):
    test = load_samples(tmp_path / "data", split="test")
    assert len(test) == 2
    assert all(s.split == "test" for s in test)
    assert test[0].video.shape == (3, 4, 16, 16)


@pytest.mark.parametrize(
    "kwargs",
    [dict(num_classes=1), dict(num_classes=9), dict(height=20), dict(joints=0), dict(samples_per_class=0)],
)
def test_invalid_generation_arguments(tmp_path, kwargs):
    with pytest.raises(ContractViolation):
        generate_dataset(tmp_path / "bad", **kwargs)


def test_missing_manifest_is_data_io_error(tmp_path):
    with pytest.raises(DataIOError):
        load_manifest(tmp_path)
    assert load_dataset_info(tmp_path) is None


def test_skeleton_off_the_clip_grid_is_rejected_on_load(tmp_path, tiny_dataset):
    root = tmp_path / "data"
    path = root / "skeletons" / "clip_00004.json"
    sequence = read_skeleton(path)
    frames = sequence.to_array()
    frames[2, 1] = [8.0, 3.0]  # x == grid width for a 16x16 clip
    path.write_text(json.dumps(SkeletonSequence.from_array(frames).model_dump()))

    with pytest.raises(DataIOError) as info:
        load_clip(root / "clips" / "clip_00004.tnsr")
    assert info.value.context["x_range"][1] == 8.0
    with pytest.raises(DataIOError):
        load_samples(root)
    load_clip(root / "clips" / "clip_00003.tnsr")
