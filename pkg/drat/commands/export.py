"""Attention maps, deformed sampling points and per-joint attention over time for one clip."""
from pathlib import Path
from typing import Dict, List
import json

import numpy as np

from drat.commands import emit
from drat.core.errors import DataIOError
from drat.core.tensor import no_grad
from drat.data.synth import load_clip
from drat.nn.attention import AttentionRecord, record_attention
from drat.training.checkpoint import load_checkpoint


def register(subparsers) -> None:
    parser = subparsers.add_parser("export-attn", help="export attention maps for one clip")
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--sample", required=True, help="clip file (clips/clip_NNNNN.tnsr)")
    parser.add_argument("--out", required=True, help="JSON output file")
    parser.set_defaults(func=run)


def joint_attention_series(records: List[AttentionRecord], frames: int, joints: int) -> np.ndarray:
    """
    Mean attention received by joint r at frame t in the temporal windows of one
    layer, averaged over heads, queries and the windows whose keys include t.
    Frames that no key window covers stay 0.
    """
    totals = np.zeros((joints, frames))
    counts = np.zeros(frames)
    for record in records:
        meta = record.meta
        per_step, cells = meta["tokens_per_step"], meta["cells"]
        received = record.weights.mean(axis=(0, 1)).reshape(meta["wnd"], per_step)
        span = slice(meta["kv_start"], meta["kv_start"] + meta["wnd"])
        totals[:, span] += received[:, cells : cells + joints].T
        counts[span] += 1
    return np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)


def run(args, settings) -> int:
    model, metrics = load_checkpoint(args.ckpt)
    config = model.config
    video, skeleton = load_clip(args.sample)

    with no_grad(), record_attention() as recorder:
        logits = model(video, skeleton).numpy()

    layers = []
    row_error = 0.0
    for record in recorder.records:
        row_error = max(row_error, float(np.max(np.abs(record.weights.sum(axis=-1) - 1.0))))
        layers.append({"tag": record.tag, "meta": record.meta, "weights": record.weights.tolist()})

    series: Dict[str, list] = {}
    for index in range(config.layers):
        temporal = recorder.by_tag(f"layer{index}.temporal")
        if temporal:
            series[f"layer{index}"] = joint_attention_series(temporal, config.frames, config.joints).tolist()

    payload = {
        "sample": args.sample,
        "config": config.model_dump(mode="json"),
        "seed": config.seed,
        "logits": logits.tolist(),
        "prediction": int(np.argmax(logits)),
        "max_row_sum_error": row_error,
        "attention": layers,
        "deformed_points": {tag: points.tolist() for tag, points in recorder.points.items()},
        "joint_attention": series,
    }
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(payload) + "\n")
    except OSError as exc:
        raise DataIOError(f"Cannot write {out}: {exc}") from exc
    emit({"out": str(out), "records": len(layers), "max_row_sum_error": row_error})
    return 0
