"""
verify - command-line entry point of the verification harness

    verify run --circuit <path> [--attack <path>] --protocol {p1|epr}
               --run {random|comp|xtest|ztest} --trials N --seed S
               --report <path> --format {json|csv|text}
    verify oracle --circuit <path>
    verify check [--suite NAME ...]
    verify history [--limit N]

Exit codes: 0 success, 1 usage / parse / capacity error, 2 criterion failure.
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from app.core.config import settings
from app.core.database import get_db, init_db
from app.core.exceptions import (
    CapacityExceededException,
    NotFoundException,
    UnknownFormatException,
    ValidationException,
)
from app.quantum.circuit import VERDICT_THRESHOLDS, classify_instance, compile_to_gadgets, load_circuit
from app.repositories.experiment_repository import ExperimentRepository
from app.schemas.experiment import ExperimentConfig, ProtocolEnum, ReportFormatEnum, RunPolicyEnum
from app.services.check_service import CheckService
from app.services.experiment_service import ExperimentService
from app.services.report_service import emit_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CRITERION_FAILED = 2

USER_ERRORS = (
    ValidationException,
    CapacityExceededException,
    NotFoundException,
    UnknownFormatException,
    ValueError,
)


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


class VerifyArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with 1; 2 is reserved for failed criteria."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = VerifyArgumentParser(prog="verify", description=settings.APP_NAME)
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a seeded batch of protocol trials")
    run.add_argument("--circuit", required=True)
    run.add_argument("--attack", default=None, help="attack file (epr only)")
    run.add_argument("--protocol", choices=[p.value for p in ProtocolEnum], default=settings.DEFAULT_PROTOCOL)
    run.add_argument("--run", dest="run_policy", choices=[r.value for r in RunPolicyEnum], default="random")
    run.add_argument("--trials", type=int, default=settings.DEFAULT_TRIALS)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--report", default=None, help="write the report here instead of stdout")
    run.add_argument("--format", choices=[f.value for f in ReportFormatEnum], default="json")
    run.add_argument("--workers", type=int, default=settings.DEFAULT_WORKERS)
    run.add_argument("--record", action="store_true", default=settings.RECORD_RUNS,
                     help="append the report to the experiment ledger")

    oracle = commands.add_parser("oracle", help="print p(U) and the instance label")
    oracle.add_argument("--circuit", required=True)

    check = commands.add_parser("check", help="run the built-in property suites")
    check.add_argument("--suite", action="append", choices=CheckService.SUITES, default=None)
    check.add_argument("--seed", type=int, default=0)

    history = commands.add_parser("history", help="list recorded experiment runs")
    history.add_argument("--limit", type=int, default=20)
    history.add_argument("--circuit", default=None)
    return parser


# ========================================
# COMMANDS
# ========================================

def command_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig(
        circuit_path=args.circuit,
        protocol=args.protocol,
        run_policy=args.run_policy,
        trials=args.trials,
        seed=args.seed,
        attack_path=args.attack,
        report_path=args.report,
        format=args.format,
        workers=args.workers,
    )
    if args.record:
        init_db()
        with get_db() as db:
            report = ExperimentService(db).run(config)
    else:
        report = ExperimentService().run(config)

    payload = emit_report(report, config.format)
    if config.report_path:
        Path(config.report_path).write_bytes(payload)
        logger.info(f"Report written to {config.report_path}")
    else:
        sys.stdout.buffer.write(payload)
        sys.stdout.flush()

    for criterion in report.criteria:
        if not criterion.passed:
            logger.error(f"Criterion {criterion.name} failed: {criterion.detail}")
    return EXIT_OK if report.passed else EXIT_CRITERION_FAILED


def command_oracle(args: argparse.Namespace) -> int:
    circuit = load_circuit(args.circuit)
    label = classify_instance(circuit)
    program = compile_to_gadgets(circuit)
    print(f"p(U) = {label.p:.12f}")
    print(f"label: {label.verdict.value} ({VERDICT_THRESHOLDS[label.verdict]})")
    print(f"n = {circuit.n}, T-gadgets after compilation: t = {program.t}")
    return EXIT_OK


def command_check(args: argparse.Namespace) -> int:
    results = CheckService(seed=args.seed).run(args.suite)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
    return EXIT_OK if all(result.passed for result in results) else EXIT_CRITERION_FAILED


def command_history(args: argparse.Namespace) -> int:
    init_db()
    with get_db() as db:
        runs = ExperimentRepository(db).list_recent(args.limit, args.circuit)
        for run in runs:
            attack = run.attack_path or "honest"
            status = "pass" if run.passed else "FAIL"
            print(
                f"{run.id:>5}  {run.created_at:%Y-%m-%d %H:%M}  {run.protocol:<3} {run.run_policy:<6} "
                f"{run.circuit_path} [{attack}] seed={run.seed} "
                f"{run.accepts}/{run.trials} = {run.acceptance:.4f} {status}"
            )
    return EXIT_OK


COMMANDS = {
    "run": command_run,
    "oracle": command_oracle,
    "check": command_check,
    "history": command_history,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except USER_ERRORS as e:
        print(f"verify: error: {e}", file=sys.stderr)
        return EXIT_ERROR


def run() -> None:
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    run()
