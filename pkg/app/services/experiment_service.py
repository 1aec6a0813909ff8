"""
Experiment Service - Business Logic Layer
Runs seeded batches of protocol trials and compares the empirical
statistics with the oracle and the soundness predictions.
"""
import logging
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

from scipy.stats import binomtest
from sqlalchemy.orm import Session

from app.core.config import settings
from app.core.exceptions import ValidationException
from app.core.rng import trial_rng
from app.quantum.adversary import (
    AttackSpec,
    attacked_prover,
    load_attack,
    overall_acceptance_bound,
    predicted_comp_acceptance,
    predicted_run_rejection,
    predicted_test_rejection,
)
from app.quantum.circuit import GadgetProgram, RunType, classify_instance, compile_to_gadgets, load_circuit
from app.quantum.epr import execute_epr, finalize_run
from app.quantum.protocol import RUN_TYPES, HonestProver, Outcome, execute, sample_run_type
from app.repositories.experiment_repository import ExperimentRepository
from app.schemas.experiment import (
    CriterionResult,
    ExperimentConfig,
    Interval,
    Predictions,
    ProtocolEnum,
    Report,
    RunCounts,
    RunPolicyEnum,
)

logger = logging.getLogger(__name__)

RUN_TYPE_STREAM = 1
COUNT_FIELDS = ("trials", "accepts", "check_failures", "output_0", "output_1")


# ========================================
# TRIALS
# ========================================

@dataclass(frozen=True)
class TrialBatch:
    """A contiguous chunk of trials, shipped to a worker process."""

    program: GadgetProgram
    protocol: ProtocolEnum
    run_policy: RunPolicyEnum
    seed: int
    start: int
    stop: int
    attack: Optional[AttackSpec] = None


def _make_prover(attack: Optional[AttackSpec]):
    return attacked_prover(attack) if attack is not None else HonestProver()


def _choose_run_type(policy: RunPolicyEnum, seed: int, trial: int) -> RunType:
    if policy is RunPolicyEnum.RANDOM:
        return sample_run_type(trial_rng(seed, trial, RUN_TYPE_STREAM))
    return RunType(policy.value)


def run_trial(batch: TrialBatch, trial: int) -> Outcome:
    """
    One trial, fully determined by (seed, trial index).

    In the EPR protocol the run type is drawn only after the prover has
    finished.
    """
    rng = trial_rng(batch.seed, trial)
    prover = _make_prover(batch.attack)
    if batch.protocol is ProtocolEnum.P1:
        run_type = _choose_run_type(batch.run_policy, batch.seed, trial)
        return execute(batch.program, run_type, prover, rng)
    deferred = execute_epr(batch.program, prover, rng)
    run_type = _choose_run_type(batch.run_policy, batch.seed, trial)
    return finalize_run(deferred, run_type, rng)


def run_batch(batch: TrialBatch) -> Counter:
    """Counts keyed by (run type value, field) over the batch's trials."""
    counts: Counter = Counter()
    for trial in range(batch.start, batch.stop):
        outcome = run_trial(batch, trial)
        transcript = outcome.transcript
        key = transcript.run_type.value
        counts[key, "trials"] += 1
        counts[key, "accepts"] += int(outcome.accept)
        counts[key, "check_failures"] += int(transcript.check_failures > 0)
        if transcript.decrypted_bit is not None:
            counts[key, f"output_{transcript.decrypted_bit}"] += 1
    return counts


def _split(trials: int, workers: int) -> List[Tuple[int, int]]:
    size = math.ceil(trials / workers)
    return [(start, min(start + size, trials)) for start in range(0, trials, size)]


# ========================================
# STATISTICS
# ========================================

def wilson_interval(accepts: int, trials: int, level: Optional[float] = None) -> Interval:
    level = settings.CONFIDENCE_LEVEL if level is None else level
    ci = binomtest(accepts, trials).proportion_ci(confidence_level=level, method="wilson")
    return Interval(low=float(ci.low), high=float(ci.high), level=level)


def binomial_sigma(q: float, trials: int) -> float:
    q = min(max(q, 0.0), 1.0)
    return math.sqrt(q * (1 - q) / trials)


def within_sigma(observed: float, expected: float, trials: int) -> bool:
    """Two-sided agreement; an expected value of exactly 0 or 1 has to be hit exactly."""
    sigma = binomial_sigma(expected, trials)
    if sigma == 0:
        return abs(observed - expected) <= settings.TOLERANCE
    return abs(observed - expected) <= settings.SIGMA_MULTIPLIER * sigma


def below_bound(observed: float, bound: float, trials: int) -> bool:
    sigma = binomial_sigma(bound, trials)
    return observed <= bound + settings.SIGMA_MULTIPLIER * sigma + settings.TOLERANCE


def honest_acceptance(p: float, run_policy: RunPolicyEnum) -> float:
    """Acceptance of the honest prover: p in the computation run, 1 in both tests."""
    return {
        RunPolicyEnum.RANDOM: 2 / 3 + p / 3,
        RunPolicyEnum.COMP: p,
        RunPolicyEnum.XTEST: 1.0,
        RunPolicyEnum.ZTEST: 1.0,
    }[run_policy]


# ========================================
# SERVICE
# ========================================

class ExperimentService:
    """
    Service layer for experiments.

    Responsibilities:
    - Load and compile the circuit, load and validate the attack
    - Run trials, in worker processes when asked to
    - Compute predictions and evaluate the acceptance criteria
    - Record the report in the ledger when a session is given
    """

    def __init__(self, db: Optional[Session] = None):
        self.db = db
        self.repository = ExperimentRepository(db) if db is not None else None

    def run(self, config: ExperimentConfig) -> Report:
        """
        Run an experiment.

        Args:
            config: Validated experiment configuration

        Returns:
            Report with counts, intervals, predictions and criteria

        Raises:
            CircuitParseException / AttackParseException: bad input files
            CapacityExceededException: the program does not fit the simulator
        """
        circuit = load_circuit(config.circuit_path)
        label = classify_instance(circuit)
        program = compile_to_gadgets(circuit)
        attack = self._load_attack(config, program)

        batches = [
            TrialBatch(program, config.protocol, config.run_policy, config.seed, start, stop, attack)
            for start, stop in _split(config.trials, config.workers)
        ]
        counts = self._run_batches(batches, config.workers)

        per_run = self._per_run(counts)
        accepts = sum(run.accepts for run in per_run)
        predictions = self._predictions(config, label.verdict.value, label.p, program, attack)
        report = Report(
            seed=config.seed,
            trials=config.trials,
            accepts=accepts,
            acceptance=accepts / config.trials,
            interval=wilson_interval(accepts, config.trials),
            per_run=per_run,
            predictions=predictions,
            criteria=self._criteria(config, per_run, accepts, predictions, attack),
            config=config,
        )
        logger.info(
            f"{config.protocol.value} run on {config.circuit_path}: "
            f"{accepts}/{config.trials} accepted (p = {label.p:.4f}, {label.verdict.value})"
        )

        if self.repository is not None:
            run = self.repository.create(report)
            logger.info(f"Recorded experiment run {run.id}")
        return report

    # ========================================
    # HELPERS
    # ========================================

    def _load_attack(self, config: ExperimentConfig, program: GadgetProgram) -> Optional[AttackSpec]:
        if not config.attack_path:
            return None
        attack = load_attack(config.attack_path, program.dims).validate()
        attack.check_program(program)
        return attack

    def _run_batches(self, batches: List[TrialBatch], workers: int) -> Counter:
        total: Counter = Counter()
        if workers == 1 or len(batches) == 1:
            for batch in batches:
                total.update(run_batch(batch))
            return total
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for counts in pool.map(run_batch, batches):
                total.update(counts)
        return total

    def _per_run(self, counts: Counter) -> List[RunCounts]:
        per_run: List[RunCounts] = []
        for run_type in RUN_TYPES:
            key = run_type.value
            values: Dict[str, int] = {name: counts[key, name] for name in COUNT_FIELDS}
            if values["trials"] == 0:
                continue
            per_run.append(RunCounts(
                run_type=key,
                acceptance=values["accepts"] / values["trials"],
                interval=wilson_interval(values["accepts"], values["trials"]),
                **values,
            ))
        return per_run

    def _predictions(
        self,
        config: ExperimentConfig,
        verdict: str,
        p: float,
        program: GadgetProgram,
        attack: Optional[AttackSpec],
    ) -> Predictions:
        if attack is None:
            return Predictions(p=p, label=verdict, expected_acceptance=honest_acceptance(p, config.run_policy))
        if not attack.is_single_operator or abs(attack.operator.norm_squared() - 1) > settings.TOLERANCE:
            logger.info("Closed-form predictions need a single normalized Kraus operator; skipped")
            return Predictions(p=p, label=verdict)
        bound = overall_acceptance_bound(attack, p)
        return Predictions(
            p=p,
            label=verdict,
            test_rejection=predicted_test_rejection(attack),
            xtest_rejection=predicted_run_rejection(attack, program, RunType.X_TEST),
            ztest_rejection=predicted_run_rejection(attack, program, RunType.Z_TEST),
            comp_acceptance_bound=predicted_comp_acceptance(attack, p),
            overall_acceptance_bound=bound.value,
            bound_applies=bound.applies,
        )

    def _criteria(
        self,
        config: ExperimentConfig,
        per_run: List[RunCounts],
        accepts: int,
        predictions: Predictions,
        attack: Optional[AttackSpec],
    ) -> List[CriterionResult]:
        trials = config.trials
        acceptance = accepts / trials
        criteria: List[CriterionResult] = []

        if predictions.expected_acceptance is not None:
            expected = predictions.expected_acceptance
            criteria.append(CriterionResult(
                name="honest_acceptance",
                passed=within_sigma(acceptance, expected, trials),
                detail=f"observed {acceptance:.4f}, expected {expected:.4f}",
            ))
        if attack is None or predictions.test_rejection is None:
            return criteria

        by_type = {run.run_type: run for run in per_run}
        for run_type, predicted in (
            (RunType.X_TEST, predictions.xtest_rejection),
            (RunType.Z_TEST, predictions.ztest_rejection),
        ):
            run = by_type.get(run_type.value)
            if run is None:
                continue
            rejection = 1 - run.accepts / run.trials
            criteria.append(CriterionResult(
                name=f"{run_type.value}_rejection",
                passed=within_sigma(rejection, predicted, run.trials),
                detail=f"observed {rejection:.4f}, predicted {predicted:.4f}",
            ))

        comp = by_type.get(RunType.COMPUTATION.value)
        if comp is not None:
            criteria.append(CriterionResult(
                name="comp_acceptance_bound",
                passed=below_bound(comp.acceptance, predictions.comp_acceptance_bound, comp.trials),
                detail=f"observed {comp.acceptance:.4f}, bound {predictions.comp_acceptance_bound:.4f}",
            ))
        if config.run_policy is RunPolicyEnum.RANDOM and predictions.bound_applies:
            criteria.append(CriterionResult(
                name="overall_acceptance_bound",
                passed=below_bound(acceptance, predictions.overall_acceptance_bound, trials),
                detail=f"observed {acceptance:.4f}, bound {predictions.overall_acceptance_bound:.4f}",
            ))
        return criteria


def run_experiment(config: ExperimentConfig, db: Optional[Session] = None) -> Report:
    return ExperimentService(db).run(config)
