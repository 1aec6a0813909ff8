"""
Report Service
Serializes experiment reports as json, csv or text.
"""
import csv
import io
import logging
from typing import List, Union

from app.core.exceptions import UnknownFormatException
from app.schemas.experiment import Report, ReportFormatEnum

logger = logging.getLogger(__name__)

CSV_HEADER = ("run_type", "trials", "accepts", "check_failures", "output_0", "output_1", "acceptance", "ci_low", "ci_high")


def _csv(report: Report) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for run in report.per_run:
        writer.writerow([
            run.run_type, run.trials, run.accepts, run.check_failures, run.output_0, run.output_1,
            f"{run.acceptance:.6f}", f"{run.interval.low:.6f}", f"{run.interval.high:.6f}",
        ])
    writer.writerow([
        "total", report.trials, report.accepts,
        sum(run.check_failures for run in report.per_run),
        sum(run.output_0 for run in report.per_run),
        sum(run.output_1 for run in report.per_run),
        f"{report.acceptance:.6f}", f"{report.interval.low:.6f}", f"{report.interval.high:.6f}",
    ])
    return buffer.getvalue()


def _text(report: Report) -> str:
    config = report.config
    predictions = report.predictions
    lines: List[str] = [
        f"circuit:    {config.circuit_path}",
        f"protocol:   {config.protocol.value}",
        f"run policy: {config.run_policy.value}",
        f"attack:     {config.attack_path or 'none (honest prover)'}",
        f"seed:       {report.seed}",
        f"acceptance: {report.accepts}/{report.trials} = {report.acceptance:.4f} "
        f"[{report.interval.low:.4f}, {report.interval.high:.4f}] at {report.interval.level:.0%}",
        f"oracle:     p = {predictions.p:.6f} ({predictions.label})",
        "",
    ]
    for run in report.per_run:
        lines.append(
            f"  {run.run_type:<6} {run.accepts:>7}/{run.trials:<7} accepted, "
            f"{run.check_failures} check failures, outputs 0:{run.output_0} 1:{run.output_1}"
        )
    if predictions.test_rejection is not None:
        lines += [
            "",
            f"predicted test rejection:  {predictions.test_rejection:.4f}",
            f"comp acceptance bound:     {predictions.comp_acceptance_bound:.4f}",
            f"overall acceptance bound:  {predictions.overall_acceptance_bound:.4f}"
            + ("" if predictions.bound_applies else " (not claimed, p > 1/3)"),
        ]
    if report.criteria:
        lines.append("")
        for criterion in report.criteria:
            status = "PASS" if criterion.passed else "FAIL"
            lines.append(f"[{status}] {criterion.name}: {criterion.detail}")
    return "\n".join(lines) + "\n"


def emit_report(report: Report, fmt: Union[ReportFormatEnum, str]) -> bytes:
    """
    Serialize a report.

    Raises:
        UnknownFormatException: fmt is not json, csv or text
    """
    try:
        fmt = ReportFormatEnum(fmt)
    except ValueError:
        raise UnknownFormatException(f"Unknown report format '{fmt}' (expected json, csv or text)") from None
    if fmt is ReportFormatEnum.JSON:
        return (report.model_dump_json(indent=2) + "\n").encode("utf-8")
    if fmt is ReportFormatEnum.CSV:
        return _csv(report).encode("utf-8")
    return _text(report).encode("utf-8")


def load_report(data: Union[str, bytes]) -> Report:
    return Report.model_validate_json(data)
