import csv
import io
import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.database import get_db, init_db
from app.core.exceptions import CircuitParseException, NotFoundException, UnknownFormatException
from app.core.rng import trial_rng
from app.quantum.adversary import (
    AttackedProver,
    AttackSpec,
    predicted_comp_acceptance,
    predicted_run_rejection,
    predicted_test_rejection,
    random_unitary_attack,
)
from app.quantum.circuit import RunType, Verdict, classify_instance, parse_circuit
from app.quantum.epr import execute_and_finalize
from app.quantum.pauli import PauliString
from app.repositories.experiment_repository import ExperimentRepository
from app.schemas.experiment import ExperimentConfig, Interval, Report, RunCounts
from app.services.check_service import CheckService, blindness_pvalue, equal_up_to_phase, identity_suite
from app.services.experiment_service import (
    ExperimentService,
    binomial_sigma,
    honest_acceptance,
    run_experiment,
    wilson_interval,
    within_sigma,
)
from app.services.report_service import CSV_HEADER, emit_report, load_report

from conftest import EMPTY, H_OUTPUT, ONE_T, X_OUTPUT, program_of

NO_WITH_GADGET = "qubits 1\nX 0\nT 0\n"


def config_for(path, **overrides):
    values = dict(circuit_path=path, protocol="p1", run_policy="random", trials=300, seed=7)
    values.update(overrides)
    return ExperimentConfig(**values)


class TestSchemas:
    def test_trials_must_be_positive(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(circuit_path="c.qc", trials=0)

    @pytest.mark.parametrize("seed", [-1, 2 ** 64])
    def test_seed_is_64_bit(self, seed):
        with pytest.raises(ValidationError):
            ExperimentConfig(circuit_path="c.qc", seed=seed)

    def test_attack_requires_epr(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(circuit_path="c.qc", protocol="p1", attack_path="a.atk")

    def test_defaults(self):
        config = ExperimentConfig(circuit_path="c.qc")
        assert config.protocol.value == "epr"
        assert config.trials == 10_000

    def test_report_counts_must_sum(self):
        interval = Interval(low=0, high=1, level=0.99)
        run = RunCounts(run_type="comp", trials=2, accepts=1, check_failures=0, output_0=1, output_1=1)
        with pytest.raises(ValidationError):
            Report(
                seed=0, trials=3, accepts=1, acceptance=1 / 3, interval=interval, per_run=[run],
                predictions={"p": 1, "label": "YES"}, config=ExperimentConfig(circuit_path="c.qc"),
            )

    def test_run_counts_bounded_by_trials(self):
        with pytest.raises(ValidationError):
            RunCounts(run_type="comp", trials=1, accepts=2, check_failures=0, output_0=0, output_1=0)


class TestStatistics:
    def test_wilson_interval_contains_estimate(self):
        interval = wilson_interval(60, 100)
        assert interval.low < 0.6 < interval.high
        assert interval.level == 0.99

    def test_degenerate_interval(self):
        interval = wilson_interval(100, 100)
        assert interval.high == pytest.approx(1)
        assert interval.low < 1

    def test_sigma_rules(self):
        assert binomial_sigma(0.5, 100) == pytest.approx(0.05)
        assert within_sigma(0.6, 0.5, 100)
        assert not within_sigma(0.7, 0.5, 100)
        assert within_sigma(1.0, 1.0, 100)
        assert not within_sigma(0.99, 1.0, 100)

    @pytest.mark.parametrize("policy,expected", [("random", 2 / 3 + 0.5 / 3), ("comp", 0.5), ("xtest", 1), ("ztest", 1)])
    def test_honest_acceptance(self, policy, expected):
        from app.schemas.experiment import RunPolicyEnum

        assert honest_acceptance(0.5, RunPolicyEnum(policy)) == pytest.approx(expected)


class TestExperimentService:
    def test_yes_instance_always_accepts(self, write_file):
        report = run_experiment(config_for(write_file("empty.qc", EMPTY)))
        assert report.accepts == report.trials == 300
        assert report.acceptance == 1.0
        assert report.predictions.p == 1.0
        assert report.predictions.label == "YES"
        assert report.passed

    def test_no_instance_accepts_two_thirds(self, write_file):
        report = run_experiment(config_for(write_file("x.qc", X_OUTPUT), trials=900))
        by_type = {run.run_type: run for run in report.per_run}
        assert by_type["comp"].accepts == 0
        assert by_type["xtest"].accepts == by_type["xtest"].trials
        assert by_type["ztest"].accepts == by_type["ztest"].trials
        assert report.acceptance == pytest.approx(2 / 3, abs=3 * np.sqrt(2 / 9 / 900))
        assert report.passed

    def test_counts_are_consistent(self, write_file):
        report = run_experiment(config_for(write_file("h.qc", H_OUTPUT), protocol="epr", trials=60))
        assert sum(run.trials for run in report.per_run) == 60
        assert report.acceptance == report.accepts / report.trials
        for run in report.per_run:
            assert run.output_0 + run.output_1 == run.trials

    def test_fixed_run_policy(self, write_file):
        report = run_experiment(config_for(write_file("t.qc", ONE_T), run_policy="xtest", trials=40))
        assert [run.run_type for run in report.per_run] == ["xtest"]
        assert report.accepts == 40

    def test_deterministic_json(self, write_file):
        config = config_for(write_file("h.qc", H_OUTPUT), trials=80)
        first = emit_report(run_experiment(config), "json")
        second = emit_report(run_experiment(config), "json")
        assert first == second

    def test_more_trials_keep_earlier_ones(self):
        from app.services.experiment_service import TrialBatch, run_trial
        from app.schemas.experiment import ProtocolEnum, RunPolicyEnum

        program = program_of(H_OUTPUT)
        batch = TrialBatch(program, ProtocolEnum.P1, RunPolicyEnum.RANDOM, seed=3, start=0, stop=10)
        longer = TrialBatch(program, ProtocolEnum.P1, RunPolicyEnum.RANDOM, seed=3, start=0, stop=20)
        assert [run_trial(batch, i) for i in range(10)] == [run_trial(longer, i) for i in range(10)]

    def test_workers_do_not_change_counts(self, write_file):
        path = write_file("h.qc", H_OUTPUT)
        single = run_experiment(config_for(path, trials=120, workers=1))
        pooled = run_experiment(config_for(path, trials=120, workers=3))
        assert single.per_run == pooled.per_run

    def test_attack_on_measured_register_is_detected(self, write_file):
        circuit = write_file("t.qc", ONE_T)
        attack = write_file("flip.atk", "1,0 X.I.I\n")
        report = run_experiment(config_for(circuit, protocol="epr", run_policy="xtest", trials=100, attack_path=attack))
        assert report.accepts == 0
        assert report.predictions.test_rejection == 1
        assert report.predictions.xtest_rejection == 1
        assert report.passed

    def test_attack_predictions_for_channels_are_skipped(self, write_file):
        circuit = write_file("t.qc", ONE_T)
        attack = write_file("mix.atk", "0.8,0 I.I.I\n---\n0.6,0 I.I.X\n")
        report = run_experiment(config_for(circuit, protocol="epr", trials=30, attack_path=attack))
        assert report.predictions.test_rejection is None
        assert report.criteria == []

    def test_parse_errors_surface(self, write_file):
        with pytest.raises(CircuitParseException) as exc:
            run_experiment(config_for(write_file("bad.qc", "qubits 1\nQ 0\n")))
        assert "bad.qc:2" in str(exc.value)

    def test_attack_for_wrong_program(self, write_file):
        from app.core.exceptions import AttackParseException

        circuit = write_file("t.qc", ONE_T)
        attack = write_file("short.atk", "1,0 X\n")
        with pytest.raises(AttackParseException):
            run_experiment(config_for(circuit, protocol="epr", attack_path=attack))

    def test_recording(self, write_file, tmp_path):
        init_db(f"sqlite:///{tmp_path / 'ledger.db'}")
        config = config_for(write_file("empty.qc", EMPTY), trials=10, seed=2 ** 64 - 1)
        with get_db() as db:
            report = ExperimentService(db).run(config)
            repository = ExperimentRepository(db)
            (run,) = repository.list_recent()
            assert run.accepts == 10
            assert run.passed
            assert run.seed == str(2 ** 64 - 1)
            assert repository.report_for(run.id) == report
            with pytest.raises(NotFoundException):
                repository.get_by_id(run.id + 1)


class TestReports:
    @pytest.fixture
    def report(self, write_file):
        return run_experiment(config_for(write_file("x.qc", X_OUTPUT), trials=30, seed=99))

    def test_json_keys(self, write_file):
        report = run_experiment(config_for(write_file("e.qc", EMPTY), trials=1))
        data = json.loads(emit_report(report, "json"))
        assert list(data)[:5] == ["seed", "trials", "accepts", "acceptance", "interval"]
        assert {"per_run", "predictions", "seed", "trials", "accepts"} <= set(data)

    def test_json_round_trip(self, report):
        assert load_report(emit_report(report, "json")) == report

    def test_csv_header(self, report):
        rows = list(csv.reader(io.StringIO(emit_report(report, "csv").decode())))
        assert tuple(rows[0]) == CSV_HEADER
        assert rows[0] == "run_type,trials,accepts,check_failures,output_0,output_1,acceptance,ci_low,ci_high".split(",")
        assert rows[-1][0] == "total"
        assert int(rows[-1][1]) == 30

    def test_text_includes_seed(self, report):
        assert b"seed:       99" in emit_report(report, "text")

    def test_unknown_format(self, report):
        with pytest.raises(UnknownFormatException):
            emit_report(report, "yaml")


class TestCheckService:
    @pytest.mark.parametrize("suite", ["identities", "tgadget", "bitflip", "twirl"])
    def test_suite_passes(self, suite):
        (result,) = CheckService().run([suite])
        assert result.passed, result.detail

    def test_unknown_suite(self):
        with pytest.raises(ValueError):
            CheckService().run(["nope"])

    @pytest.mark.parametrize("name", ["X Z = Z X", "P^(a xor b) = Z^ab P^(a+b)", "x teleportation"])
    def test_identity_suite_entries(self, name):
        assert identity_suite()[name]

    def test_equal_up_to_phase(self):
        assert equal_up_to_phase(np.eye(2), 1j * np.eye(2))
        assert not equal_up_to_phase(np.eye(2), np.diag([1, -1]))

    @pytest.mark.slow
    def test_view_suite(self):
        results = CheckService(blindness_trials=10_000).run(["view"])
        assert all(result.passed for result in results), results

    def test_blindness_small(self):
        assert blindness_pvalue(trials=1500, seed=4) >= 0.01


# ==================== ACCEPTANCE ====================

@pytest.mark.slow
class TestAcceptance:
    @pytest.mark.parametrize("text,p", [(H_OUTPUT, 0.5), (EMPTY, 1.0)])
    def test_honest_completeness(self, write_file, text, p):
        path = write_file("c.qc", text)
        report = run_experiment(config_for(path, trials=10_000, seed=1))
        expected = 2 / 3 + p / 3
        sigma = np.sqrt(expected * (1 - expected) / 10_000)
        assert abs(report.acceptance - expected) <= 3 * sigma + 1e-12
        for run in report.per_run:
            if run.run_type != "comp":
                assert run.accepts == run.trials

    def test_eight_ninths_anchor(self):
        from app.schemas.experiment import RunPolicyEnum

        assert honest_acceptance(2 / 3, RunPolicyEnum.RANDOM) == pytest.approx(8 / 9)

    @pytest.mark.parametrize("text", [ONE_T, "qubits 1\nT 0\nT 0\n", H_OUTPUT])
    def test_non_benign_detection(self, text):
        program = program_of(text)
        dims = program.dims
        trials = 1000
        for register in dims.measured_registers():
            for letter in "XY":
                attack = AttackSpec.pauli(dims, PauliString.single(dims.m, register, letter))
                rejected = {
                    run_type: sum(
                        not execute_and_finalize(program, run_type, AttackedProver(attack), trial_rng(0, trial)).accept
                        for trial in range(trials)
                    )
                    for run_type in (RunType.X_TEST, RunType.Z_TEST)
                }
                assert max(rejected.values()) == trials, (register, letter, rejected)

    @pytest.mark.parametrize("text", ["qubits 1\nX 0\nT 0\n", "qubits 2\nX 1\nCNOT 0 1\nT 1\n"])
    def test_lemma_agrees_with_experiment(self, text):
        program = program_of(text)
        label = classify_instance(parse_circuit(text))
        assert label.verdict is Verdict.NO
        rng = np.random.default_rng(2024 + program.n)
        trials = 10_000

        def run(run_type, attack, index):
            return [
                execute_and_finalize(program, run_type, AttackedProver(attack), trial_rng(index, trial)).accept
                for trial in range(trials)
            ]

        for index in range(10):
            attack = random_unitary_attack(program.dims, rng, terms=int(rng.integers(2, 4)))
            for run_type in (RunType.X_TEST, RunType.Z_TEST):
                predicted = predicted_run_rejection(attack, program, run_type)
                rejected = 1 - sum(run(run_type, attack, index)) / trials
                sigma = np.sqrt(predicted * (1 - predicted) / trials)
                assert abs(rejected - predicted) <= 3 * sigma + 1e-12, (index, run_type, predicted, rejected)
            per_run = [predicted_run_rejection(attack, program, run_type) for run_type in (RunType.X_TEST, RunType.Z_TEST)]
            assert max(per_run) - 1e-12 <= predicted_test_rejection(attack) <= sum(per_run) + 1e-12

            bound = predicted_comp_acceptance(attack, label.p)
            accepted = sum(run(RunType.COMPUTATION, attack, index)) / trials
            assert accepted <= bound + 3 * np.sqrt(bound * (1 - bound) / trials) + 1e-12, (index, bound, accepted)

    @pytest.mark.parametrize("attack_text,benign", [
        (None, True),
        ("1,0 Z.I.I\n", True),
        ("1,0 I.X.I\n", True),
        ("1,0 Z.Y.Z\n", True),
        ("1,0 I.Z.Z\n", True),
        ("1,0 Z.Z.I\n", True),
        ("1,0 X.I.I\n", False),
        ("1,0 I.I.X\n", False),
        ("1,0 Y.I.Z\n", False),
        ("1,0 I.X.Y\n", False),
    ])
    def test_soundness_headline(self, write_file, attack_text, benign):
        circuit = write_file("no.qc", NO_WITH_GADGET)
        attack = write_file("a.atk", attack_text) if attack_text else None
        trials = 10_000
        report = run_experiment(config_for(circuit, protocol="epr", trials=trials, attack_path=attack))
        limit = 7 / 9 if benign else 2 / 3
        sigma = np.sqrt(limit * (1 - limit) / trials)
        assert report.acceptance <= limit + 3 * sigma
        assert report.passed, report.criteria
