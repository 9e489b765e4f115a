from drat.commands import emit
from drat.verification.suite import FAULTS, run_equivalence_suite


def register(subparsers) -> None:
    parser = subparsers.add_parser("verify", help="run the equivalence and gradient suite")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--trials", type=int, default=100, help="random cases per equivalence check")
    parser.add_argument("--fault", action="append", choices=list(FAULTS), default=[], help="inject a known fault")
    parser.set_defaults(func=run)


def run(args, settings) -> int:
    report = run_equivalence_suite(seed=args.seed, faults=args.fault, trials=args.trials, threads=settings.threads)
    emit(report.model_dump())
    return 0 if report.passed else 1
