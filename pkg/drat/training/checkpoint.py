"""Checkpoint directory: params/<name>.tnsr, config.json, metrics.json."""
from pathlib import Path
from typing import Any, Dict, Tuple, Union
import json
import logging

from drat.core.errors import DataIOError
from drat.core.serialization import load_tensor, save_tensor
from drat.models.config import ModelConfig
from drat.nn.transformer import DeformableTransformer

logger = logging.getLogger(__name__)

PARAMS_DIR = "params"
CONFIG_FILE = "config.json"
METRICS_FILE = "metrics.json"
METRICS_LOG = "metrics.jsonl"

PathLike = Union[str, Path]


def save_checkpoint(
    out_dir: PathLike,
    model: DeformableTransformer,
    metrics: Dict[str, Any],
) -> Path:
    root = Path(out_dir)
    try:
        (root / PARAMS_DIR).mkdir(parents=True, exist_ok=True)
        for name, array in model.state_dict().items():
            save_tensor(root / PARAMS_DIR / f"{name}.tnsr", array, dtype="float64")
        (root / CONFIG_FILE).write_text(json.dumps(model.config.model_dump(mode="json"), indent=2) + "\n")
        (root / METRICS_FILE).write_text(json.dumps(metrics, indent=2) + "\n")
    except OSError as exc:
        raise DataIOError(f"Cannot write checkpoint to {root}: {exc}") from exc
    logger.info(f"Checkpoint written to {root}")
    return root


def load_checkpoint(ckpt_dir: PathLike) -> Tuple[DeformableTransformer, Dict[str, Any]]:
    root = Path(ckpt_dir)
    try:
        config = ModelConfig(**json.loads((root / CONFIG_FILE).read_text()))
        metrics_path = root / METRICS_FILE
        metrics = json.loads(metrics_path.read_text()) if metrics_path.exists() else {}
    except OSError as exc:
        raise DataIOError(f"Cannot read checkpoint {root}: {exc}") from exc
    except ValueError as exc:
        raise DataIOError(f"Malformed checkpoint {root}: {exc}") from exc

    model = DeformableTransformer(config)
    state = {name: load_tensor(root / PARAMS_DIR / f"{name}.tnsr") for name, _ in model.named_parameters()}
    model.load_state_dict(state)
    logger.info(f"Loaded checkpoint {root} ({model.num_parameters()} trainable values)")
    return model, metrics
