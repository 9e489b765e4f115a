"""Subcommands. Each module exposes ``register(subparsers)`` binding a ``run(args, settings)`` handler."""
from typing import Any, Dict, List, Optional
import json
import sys

from drat.core.errors import UsageError
from drat.data.synth import load_dataset_info
from drat.models.dataset import DatasetInfo


def emit(payload: Any) -> None:
    """Write a command result to stdout as JSON."""
    sys.stdout.write(json.dumps(payload, indent=2) + "\n")
    sys.stdout.flush()


def parse_int_list(raw: str, flag: str) -> List[int]:
    try:
        values = [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag} expects comma-separated integers, got {raw!r}") from exc
    if not values or any(v < 1 for v in values):
        raise UsageError(f"{flag} expects positive integers, got {raw!r}")
    return values


DATASET_KEYS = ("frames", "height", "width", "joints", "num_classes")


def check_dataset_agrees(data_dir, requested: Dict[str, Optional[int]]) -> Optional[DatasetInfo]:
    """
    Compare requested clip dimensions against the dataset's ``dataset.json``.
    Unset (None) values are not compared. Returns the dataset info, or None when
    the directory carries no provenance file.
    """
    info = load_dataset_info(data_dir)
    if info is None:
        return None
    mismatched = {
        key: (getattr(info, key), value)
        for key, value in requested.items()
        if value is not None and getattr(info, key) != value
    }
    if mismatched:
        raise UsageError(f"Config disagrees with dataset {data_dir}: {mismatched}")
    return info
