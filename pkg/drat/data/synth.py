"""
Synthetic action clips: an articulated blob figure driven by one of eight motion
programs, rendered to RGB video, with the matching skeleton in F_a pixels.

Every sample is a pure function of (seed, sample index).
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union
import json
import logging

import numpy as np

from drat.core.config import get_settings
from drat.core.errors import ContractViolation, DataIOError
from drat.core.serialization import load_tensor, save_tensor
from drat.models.dataset import DatasetInfo, ManifestEntry, SkeletonSequence

logger = logging.getLogger(__name__)

CLASS_NAMES = [
    "translate-left",
    "translate-right",
    "translate-up",
    "translate-down",
    "orbit-clockwise",
    "orbit-counterclockwise",
    "expand",
    "contract",
]

TEST_FRACTION = 0.2
BLOB_SIGMA = 1.5
NOISE_SCALE = 0.01
# Joint coordinates stay within [EDGE_LOW, extent - EDGE_HIGH]
EDGE_LOW = 0.25
EDGE_HIGH = 1.25
MAX_SCALE = 1.4
MIN_SCALE = 0.6

MANIFEST = "manifest.json"
PROVENANCE = "dataset.json"
CLIP_DIR = "clips"
SKELETON_DIR = "skeletons"

PathLike = Union[str, Path]


@dataclass
class SyntheticClip:
    video: np.ndarray  # (3, T, H, W)
    skeleton: np.ndarray  # (T, R, 2)
    label: int


@dataclass
class Sample:
    index: int
    video: np.ndarray
    skeleton: np.ndarray
    label: int
    split: str
    video_path: str


def _progress(frames: int) -> np.ndarray:
    return np.arange(frames) / (frames - 1) if frames > 1 else np.zeros(1)


def skeleton_motion(
    label: int,
    rng: np.random.Generator,
    frames: int,
    grid: Tuple[int, int],
    joints: int,
) -> np.ndarray:
    """Joint (x, y) per frame for motion program ``label``; shape (T, R, 2)."""
    grid_h, grid_w = grid
    high = np.array([grid_w - EDGE_HIGH, grid_h - EDGE_HIGH])
    span = min(grid_h, grid_w) - (EDGE_LOW + EDGE_HIGH)
    reach = 0.2 * span
    radius = reach / MAX_SCALE
    speed = rng.uniform(0.85, 1.15)
    u = _progress(frames)

    angles = 2.0 * np.pi * np.arange(joints) / joints + rng.uniform(-np.pi / 8, np.pi / 8, size=joints)
    radii = radius * np.where(np.arange(joints) % 2 == 0, 1.0, 0.6)
    center_low, center_high = EDGE_LOW + reach, high - reach

    name = CLASS_NAMES[label]
    center = np.tile(rng.uniform(center_low, center_high), (frames, 1))  # (T, 2)
    scale = np.ones(frames)
    turn = np.zeros(frames)

    if name.startswith("translate"):
        axis = 0 if name in ("translate-left", "translate-right") else 1
        sign = 1.0 if name in ("translate-right", "translate-down") else -1.0
        distance = 0.35 * (grid[1 - axis] - (EDGE_LOW + EDGE_HIGH)) * speed
        if sign > 0:
            start = rng.uniform(center_low, center_high[axis] - distance)
        else:
            start = rng.uniform(center_low + distance, center_high[axis])
        center[:, axis] = start + sign * distance * u
    elif name.startswith("orbit"):
        # image rows grow downward, so a growing angle turns clockwise on screen
        sign = 1.0 if name == "orbit-clockwise" else -1.0
        turn = sign * np.pi * speed * u
    else:
        change = (MAX_SCALE - MIN_SCALE) * speed / 1.15
        scale = MIN_SCALE + change * u if name == "expand" else MAX_SCALE - change * u

    theta = angles[None, :] + turn[:, None]
    rho = radii[None, :] * scale[:, None]
    x = center[:, 0:1] + rho * np.cos(theta)
    y = center[:, 1:2] + rho * np.sin(theta)
    return np.stack([x, y], axis=-1)


def render_video(skeleton: np.ndarray, height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Colored Gaussian blobs at the joints, at twice the F_a resolution."""
    frames, joints, _ = skeleton.shape
    phase = 2.0 * np.pi * np.arange(joints) / joints
    colors = np.stack([np.ones(joints), 0.5 + 0.5 * np.cos(phase), 0.5 + 0.5 * np.sin(phase)])  # (3, R)
    vx = 2.0 * skeleton[..., 0] + 0.5
    vy = 2.0 * skeleton[..., 1] + 0.5
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    d2 = (cols[None, None, None, :] - vx[..., None, None]) ** 2 + (rows[None, None, :, None] - vy[..., None, None]) ** 2
    blobs = np.exp(-d2 / (2.0 * BLOB_SIGMA ** 2))  # (T, R, H, W)
    video = np.tensordot(colors, blobs, axes=([1], [1]))
    return video + NOISE_SCALE * rng.normal(size=video.shape)


def make_clip(
    index: int,
    seed: int,
    num_classes: int,
    samples_per_class: int,
    frames: int,
    height: int,
    width: int,
    joints: int,
) -> SyntheticClip:
    label = index // samples_per_class
    if not 0 <= label < num_classes:
        raise ContractViolation(f"sample {index} is outside {num_classes}×{samples_per_class} samples")
    rng = np.random.default_rng([seed, index])
    skeleton = skeleton_motion(label, rng, frames, (height // 2, width // 2), joints)
    video = render_video(skeleton, height, width, rng)
    return SyntheticClip(video.astype(np.float32), skeleton, label)


def _split(num_classes: int, samples_per_class: int, seed: int) -> List[str]:
    rng = np.random.default_rng(seed)
    splits = ["train"] * (num_classes * samples_per_class)
    held_out = int(round(TEST_FRACTION * samples_per_class))
    for label in range(num_classes):
        members = rng.permutation(np.arange(label * samples_per_class, (label + 1) * samples_per_class))
        for index in members[:held_out]:
            splits[int(index)] = "test"
    return splits


def _clip_name(index: int) -> str:
    return f"clip_{index:05d}"


def skeleton_path_for(clip_path: PathLike) -> Path:
    """clips/clip_NNNNN.tnsr -> skeletons/clip_NNNNN.json"""
    clip_path = Path(clip_path)
    return clip_path.parent.parent / SKELETON_DIR / clip_path.with_suffix(".json").name


def write_skeleton(path: Path, skeleton: np.ndarray) -> None:
    sequence = SkeletonSequence.from_array(skeleton)
    path.write_text(json.dumps(sequence.model_dump()) + "\n")


def read_skeleton(path: PathLike) -> SkeletonSequence:
    path = Path(path)
    try:
        return SkeletonSequence(**json.loads(path.read_text()))
    except OSError as exc:
        raise DataIOError(f"Cannot read skeleton {path}: {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise DataIOError(f"Malformed skeleton file {path}: {exc}") from exc


def read_clip_skeleton(path: PathLike, video: np.ndarray) -> np.ndarray:
    """Skeleton array for a loaded clip; joints must lie on its H/2 × W/2 grid."""
    if video.ndim != 4:
        raise DataIOError(f"Clip video must be 3×T×H×W, got {video.shape}")
    sequence = read_skeleton(path)
    try:
        sequence.check_bounds(video.shape[2] // 2, video.shape[3] // 2)
    except ContractViolation as exc:
        raise DataIOError(f"Skeleton {path} does not fit its clip: {exc.detail}", context=exc.context) from exc
    return sequence.to_array()


def generate_dataset(
    out_dir: PathLike,
    num_classes: int = 4,
    samples_per_class: int = 50,
    frames: int = 12,
    height: int = 32,
    width: int = 32,
    joints: int = 5,
    seed: int = 42,
    threads: Optional[int] = None,
) -> DatasetInfo:
    """Write clips, skeletons, manifest and provenance under ``out_dir``."""
    if not 2 <= num_classes <= len(CLASS_NAMES):
        raise ContractViolation(f"num_classes must lie in [2, {len(CLASS_NAMES)}], got {num_classes}")
    if samples_per_class < 1 or frames < 1 or joints < 1:
        raise ContractViolation("samples_per_class, frames and joints must be positive")
    if height % 8 or width % 8 or height <= 0 or width <= 0:
        raise ContractViolation(f"height and width must be positive multiples of 8, got {height}x{width}")

    root = Path(out_dir)
    try:
        (root / CLIP_DIR).mkdir(parents=True, exist_ok=True)
        (root / SKELETON_DIR).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise DataIOError(f"Cannot create dataset directory {root}: {exc}") from exc

    total = num_classes * samples_per_class
    splits = _split(num_classes, samples_per_class, seed)
    workers = threads or get_settings().threads
    logger.info(f"Generating {total} clips into {root} with {workers} threads")

    def write_one(index: int) -> ManifestEntry:
        clip = make_clip(index, seed, num_classes, samples_per_class, frames, height, width, joints)
        video_rel = f"{CLIP_DIR}/{_clip_name(index)}.tnsr"
        skeleton_rel = f"{SKELETON_DIR}/{_clip_name(index)}.json"
        save_tensor(root / video_rel, clip.video, dtype="float32")
        try:
            write_skeleton(root / skeleton_rel, clip.skeleton)
        except OSError as exc:
            raise DataIOError(f"Cannot write skeleton {root / skeleton_rel}: {exc}") from exc
        return ManifestEntry(video=video_rel, skeleton=skeleton_rel, label=clip.label, split=splits[index])

    with ThreadPoolExecutor(max_workers=workers) as pool:
        entries = list(pool.map(write_one, range(total)))

    counts = {"train": splits.count("train"), "test": splits.count("test")}
    info = DatasetInfo(
        num_classes=num_classes,
        samples_per_class=samples_per_class,
        frames=frames,
        height=height,
        width=width,
        joints=joints,
        seed=seed,
        class_names=CLASS_NAMES[:num_classes],
        split_counts=counts,
        test_fraction=TEST_FRACTION,
    )
    try:
        (root / MANIFEST).write_text(json.dumps([e.model_dump() for e in entries], indent=2) + "\n")
        (root / PROVENANCE).write_text(json.dumps(info.model_dump(exclude={"root"}), indent=2) + "\n")
    except OSError as exc:
        raise DataIOError(f"Cannot write manifest under {root}: {exc}") from exc
    logger.info(f"Dataset ready: {counts['train']} train / {counts['test']} test")
    return info.model_copy(update={"root": str(root)})


def load_manifest(data_dir: PathLike) -> List[ManifestEntry]:
    path = Path(data_dir) / MANIFEST
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataIOError(f"Cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataIOError(f"Manifest {path} is not valid JSON: {exc}") from exc
    try:
        return [ManifestEntry(**item) for item in raw]
    except (TypeError, ValueError) as exc:
        raise DataIOError(f"Malformed manifest {path}: {exc}") from exc


def load_dataset_info(data_dir: PathLike) -> Optional[DatasetInfo]:
    path = Path(data_dir) / PROVENANCE
    if not path.exists():
        return None
    try:
        return DatasetInfo(**json.loads(path.read_text()))
    except (OSError, ValueError, TypeError) as exc:
        raise DataIOError(f"Malformed provenance file {path}: {exc}") from exc


def load_sample(data_dir: PathLike, entry: ManifestEntry, index: int = 0) -> Sample:
    root = Path(data_dir)
    video = load_tensor(root / entry.video)
    skeleton = read_clip_skeleton(root / entry.skeleton, video)
    return Sample(index, video, skeleton, entry.label, entry.split, entry.video)


def load_samples(data_dir: PathLike, split: Optional[str] = None) -> List[Sample]:
    entries = load_manifest(data_dir)
    return [
        load_sample(data_dir, entry, index)
        for index, entry in enumerate(entries)
        if split is None or entry.split == split
    ]


def load_clip(clip_path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Video and skeleton array for a clip file, locating the skeleton beside it."""
    video = load_tensor(clip_path)
    skeleton = read_clip_skeleton(skeleton_path_for(clip_path), video)
    return video, skeleton
