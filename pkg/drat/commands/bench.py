import logging

from drat.commands import check_dataset_agrees, emit, parse_int_list
from drat.core.errors import UsageError
from drat.models.config import build_config, ModelConfig
from drat.training.trainer import train
from drat.verification.complexity import measure_joint_stride, measure_temporal_stride

logger = logging.getLogger(__name__)

DEFAULT_HEIGHT = 32
DEFAULT_WIDTH = 32
DEFAULT_JOINTS = 5


def register(subparsers) -> None:
    parser = subparsers.add_parser("bench", help="count attention products across a sweep")
    parser.add_argument("--axis", required=True, choices=["joints", "time", "stride"])
    parser.add_argument("--values", required=True, help="comma-separated sweep values")
    parser.add_argument("--wnd", type=int, required=True)
    parser.add_argument("--frames", type=int, help="T for the joints and stride sweeps (default 2 and 12)")
    parser.add_argument("--joints", type=int, help=f"R for the time and stride sweeps (default {DEFAULT_JOINTS})")
    parser.add_argument("--height", type=int, help=f"clip height (default {DEFAULT_HEIGHT})")
    parser.add_argument("--width", type=int, help=f"clip width (default {DEFAULT_WIDTH})")
    parser.add_argument("--stride", type=int, help="window stride (default wnd // 2)")
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument(
        "--data", help="stride sweep only: also train briefly per stride on this dataset; clip sizes come from it"
    )
    parser.add_argument("--steps", type=int, default=200, help="training steps per stride with --data")
    parser.set_defaults(func=run)


def run(args, settings) -> int:
    values = parse_int_list(args.values, "--values")
    info = None
    if args.data:
        if args.axis != "stride":
            raise UsageError("--data only applies to --axis stride")
        requested = {"frames": args.frames, "height": args.height, "width": args.width, "joints": args.joints}
        info = check_dataset_agrees(args.data, requested)
        if info is None:
            raise UsageError(f"{args.data} has no dataset.json; create it with `drat generate`")

    height = info.height if info else (args.height or DEFAULT_HEIGHT)
    width = info.width if info else (args.width or DEFAULT_WIDTH)
    joints = info.joints if info else (args.joints or DEFAULT_JOINTS)
    if height % 8 or width % 8:
        raise UsageError("--height and --width must be multiples of 8")
    cells = (height // 8) * (width // 8)
    rows = []

    if args.axis == "joints":
        frames = args.frames or 2
        for value in values:
            rows.append(measure_joint_stride(value, frames, args.wnd, stride=args.stride, seed=args.seed).model_dump())
        config = {"frames": frames, "wnd": args.wnd, "stride": args.stride}
    elif args.axis == "time":
        for frames in values:
            report = measure_temporal_stride(frames, args.wnd, cells=cells, joints=joints, stride=args.stride, seed=args.seed)
            rows.append(report.model_dump())
        config = {"cells": cells, "joints": joints, "wnd": args.wnd, "stride": args.stride}
    else:
        frames = info.frames if info else (args.frames or 12)
        for stride in values:
            row = measure_temporal_stride(
                frames, args.wnd, cells=cells, joints=joints, stride=stride, seed=args.seed
            ).model_dump()
            if info is not None:
                model_config = build_config(
                    ModelConfig,
                    frames=frames,
                    height=height,
                    width=width,
                    joints=joints,
                    num_classes=info.num_classes,
                    wnd_temp=args.wnd,
                    temporal_stride=stride,
                    total_steps=args.steps,
                    seed=args.seed,
                )
                logger.info(f"Training {args.steps} steps with temporal stride {stride}")
                row["test_acc"] = train(model_config, args.data, workers=settings.threads).metrics["final_test_acc"]
            rows.append(row)
        config = {
            "frames": frames,
            "cells": cells,
            "joints": joints,
            "wnd": args.wnd,
            "steps": args.steps if info else 0,
            "num_classes": info.num_classes if info else None,
        }

    emit({"axis": args.axis, "values": values, "seed": args.seed, "config": config, "rows": rows})
    return 0
