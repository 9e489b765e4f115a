from drat.commands import emit
from drat.data.synth import generate_dataset


def register(subparsers) -> None:
    parser = subparsers.add_parser("generate", help="write a synthetic action dataset")
    parser.add_argument("--out", required=True, help="dataset directory")
    parser.add_argument("--classes", type=int, default=4)
    parser.add_argument("--samples", type=int, default=50, help="samples per class")
    parser.add_argument("--frames", type=int, default=12)
    parser.add_argument("--height", type=int, default=32)
    parser.add_argument("--width", type=int, default=32)
    parser.add_argument("--joints", type=int, default=5)
    parser.add_argument("--seed", type=int, default=42)
    parser.set_defaults(func=run)


def run(args, settings) -> int:
    info = generate_dataset(
        args.out,
        num_classes=args.classes,
        samples_per_class=args.samples,
        frames=args.frames,
        height=args.height,
        width=args.width,
        joints=args.joints,
        seed=args.seed,
        threads=settings.threads,
    )
    emit(info.model_dump())
    return 0
