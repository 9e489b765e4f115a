from drat.commands import emit
from drat.models.reports import EvalReport
from drat.training.checkpoint import load_checkpoint
from drat.training.trainer import evaluate


def register(subparsers) -> None:
    parser = subparsers.add_parser("eval", help="test-split accuracy of a checkpoint")
    parser.add_argument("--ckpt", required=True)
    parser.add_argument("--data", required=True)
    parser.add_argument(
        "--frames", type=int, help="keep only this many uniformly spaced frames per clip at test time"
    )
    parser.set_defaults(func=run)


def run(args, settings) -> int:
    model, _ = load_checkpoint(args.ckpt)
    config = model.config
    frames = args.frames if args.frames is not None else config.frames
    acc, count = evaluate(model, args.data, test_frames=frames)
    report = EvalReport(
        accuracy=acc,
        samples=count,
        frames=frames,
        train_frames=config.frames,
        seed=config.seed,
        config=config.model_dump(mode="json"),
    )
    emit(report.model_dump())
    return 0
