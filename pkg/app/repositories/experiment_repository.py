"""
Experiment Repository
Handles database operations for the experiment ledger (append-only)
"""

from typing import List, Optional

from sqlalchemy import desc
from sqlalchemy.orm import Session

from app.core.exceptions import NotFoundException
from app.models.experiment_run import ExperimentRun
from app.schemas.experiment import Report


class ExperimentRepository:
    """Repository for experiment run records"""

    def __init__(self, db: Session):
        self.db = db

    def create(self, report: Report) -> ExperimentRun:
        """
        Record a finished experiment

        Args:
            report: Report produced by the experiment service

        Returns:
            ExperimentRun: Created ledger row
        """
        config = report.config
        run = ExperimentRun(
            circuit_path=config.circuit_path,
            attack_path=config.attack_path,
            protocol=config.protocol.value,
            run_policy=config.run_policy.value,
            seed=str(report.seed),
            trials=report.trials,
            accepts=report.accepts,
            acceptance=report.acceptance,
            passed=report.passed,
            report=report.model_dump(mode="json"),
        )
        self.db.add(run)
        self.db.commit()
        self.db.refresh(run)
        return run

    def get_by_id(self, run_id: int) -> ExperimentRun:
        run = self.db.query(ExperimentRun).filter(ExperimentRun.id == run_id).first()
        if run is None:
            raise NotFoundException(f"Experiment run {run_id} not found")
        return run

    def list_recent(self, limit: int = 20, circuit_path: Optional[str] = None) -> List[ExperimentRun]:
        """
        Most recent runs first

        Args:
            limit: Maximum number of records to return
            circuit_path: Only runs on this circuit file
        """
        query = self.db.query(ExperimentRun)
        if circuit_path:
            query = query.filter(ExperimentRun.circuit_path == circuit_path)
        return query.order_by(desc(ExperimentRun.id)).limit(limit).all()

    def report_for(self, run_id: int) -> Report:
        return Report.model_validate(self.get_by_id(run_id).report)
