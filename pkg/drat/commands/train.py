import logging

from drat.commands import DATASET_KEYS, check_dataset_agrees, emit
from drat.core.errors import UsageError
from drat.models.config import load_run_config
from drat.training.trainer import train

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("train", help="train on a generated dataset")
    parser.add_argument("--data", help="dataset directory (or 'data' in the config file)")
    parser.add_argument("--config", help="JSON run config; unknown keys are rejected")
    parser.add_argument("--out", help="checkpoint directory (or 'out' in the config file)")
    parser.add_argument(
        "--ablate",
        action="append",
        choices=["deformable", "joint", "temporal"],
        help="disable a block; repeat to disable several",
    )
    parser.add_argument("--modal-tokens", choices=["none", "single", "cross"])
    parser.add_argument("--seed", type=int)
    parser.add_argument("--steps", type=int, help="override total_steps")
    parser.set_defaults(func=run)


def run(args, settings) -> int:
    config = load_run_config(
        args.config,
        data=args.data,
        out=args.out,
        ablate=args.ablate,
        modal_tokens=args.modal_tokens,
        seed=args.seed,
        total_steps=args.steps,
    )
    if config.data is None or config.out is None:
        raise UsageError("train needs --data and --out (flags or config file)")

    check_dataset_agrees(config.data, {key: getattr(config, key) for key in DATASET_KEYS})

    model_config = config.model()
    logger.info(f"Training with ablate={model_config.ablate} modal_tokens={model_config.modal_tokens}")
    result = train(model_config, config.data, config.out, workers=settings.threads)
    emit({"metrics": result.metrics, "config": config.model_dump(mode="json"), "seed": config.seed, "checkpoint": config.out})
    return 0
