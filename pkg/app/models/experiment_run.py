from sqlalchemy import Boolean, Column, Float, Index, Integer, JSON, String

from app.models import Base, TimestampMixin


class ExperimentRun(Base, TimestampMixin):
    """
    One recorded `verify run` invocation.

    Rows are append-only; the full report is kept as JSON so any run can be
    re-emitted in another format.
    """
    __tablename__ = "experiment_runs"

    id = Column(
        Integer,
        primary_key=True,
        autoincrement=True,
        comment="Experiment run ID"
    )

    # Configuration
    circuit_path = Column(
        String(500),
        nullable=False,
        index=True,
        comment="Circuit file the run was made on"
    )
    attack_path = Column(
        String(500),
        nullable=True,
        comment="Attack file (NULL = honest prover)"
    )
    protocol = Column(
        String(10),
        nullable=False,
        comment="Protocol: p1 or epr"
    )
    run_policy = Column(
        String(10),
        nullable=False,
        comment="Run policy: random, comp, xtest, ztest"
    )
    seed = Column(
        String(20),
        nullable=False,
        comment="Experiment seed (64-bit unsigned, kept as text)"
    )
    trials = Column(
        Integer,
        nullable=False,
        comment="Number of trials"
    )

    # Results
    accepts = Column(
        Integer,
        nullable=False,
        comment="Accepted trials"
    )
    acceptance = Column(
        Float,
        nullable=False,
        comment="Empirical acceptance accepts/trials"
    )
    passed = Column(
        Boolean,
        nullable=False,
        default=True,
        comment="All exercised criteria passed"
    )
    report = Column(
        JSON,
        nullable=False,
        comment="Full report as emitted in JSON"
    )

    __table_args__ = (
        Index('idx_experiment_circuit_protocol', 'circuit_path', 'protocol'),
    )

    def __repr__(self):
        return (
            f"<ExperimentRun(id={self.id}, circuit='{self.circuit_path}', "
            f"protocol='{self.protocol}', acceptance={self.acceptance:.4f})>"
        )
