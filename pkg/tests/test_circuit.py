import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from app.core.exceptions import CircuitParseException, ValidationException
from app.quantum.circuit import (
    BARE_T_SELECTOR,
    H_EXPANSION_SELECTORS,
    Circuit,
    DirectClifford,
    GadgetVariant,
    GateOp,
    RunType,
    TGadget,
    Verdict,
    classify_instance,
    compile_to_gadgets,
    ideal_probability,
    load_circuit,
    parse_circuit,
    serialize_circuit,
)
from app.quantum.statevec import Gate, GateKind

from conftest import EMPTY, H_OUTPUT, ONE_T, X_OUTPUT


class TestParse:
    def test_gates_and_comments(self):
        circuit = parse_circuit("# bell\nqubits 2\n\nH 0   # first\nCNOT 0 1\n")
        assert circuit.n == 2
        assert [str(op) for op in circuit.gates] == ["H 0", "CNOT 0 1"]
        assert circuit.output_wire == 1

    def test_unknown_gate_reports_line(self):
        with pytest.raises(CircuitParseException) as exc:
            parse_circuit("qubits 1\nQ 0\n")
        assert exc.value.line == 2
        assert "unknown gate 'Q'" in str(exc.value)

    @pytest.mark.parametrize("text,line", [
        ("H 0\n", 1),
        ("qubits 0\n", 1),
        ("qubits x\n", 1),
        ("qubits 1\nX 1\n", 2),
        ("qubits 2\nCNOT 0 0\n", 2),
        ("qubits 2\nCNOT 0\n", 2),
        ("qubits 1\nP 0\n", 2),
    ])
    def test_errors_carry_line(self, text, line):
        with pytest.raises(CircuitParseException) as exc:
            parse_circuit(text)
        assert exc.value.line == line

    def test_missing_header(self):
        with pytest.raises(CircuitParseException):
            parse_circuit("# nothing\n")

    def test_source_in_message(self, write_file):
        path = write_file("bad.qc", "qubits 1\nH 3\n")
        with pytest.raises(CircuitParseException) as exc:
            load_circuit(path)
        assert f"{path}:2" in str(exc.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ValidationException):
            load_circuit(tmp_path / "missing.qc")

    def test_direct_construction_validates(self):
        with pytest.raises(ValidationException):
            Circuit(1, (GateOp(Gate(GateKind.P), (0,)),))


gate_lines = st.lists(
    st.one_of(
        st.tuples(st.sampled_from(["X", "Z", "H", "T"]), st.integers(0, 2)).map(lambda g: f"{g[0]} {g[1]}"),
        st.sampled_from(["CNOT 0 1", "CNOT 2 0", "CNOT 1 2"]),
    ),
    max_size=12,
)


@given(lines=gate_lines)
@hypothesis_settings(max_examples=50, deadline=None)
def test_serialize_round_trip(lines):
    circuit = parse_circuit("qubits 3\n" + "\n".join(lines))
    assert parse_circuit(serialize_circuit(circuit)) == circuit


class TestCompile:
    def test_t_gadget(self):
        program = compile_to_gadgets(parse_circuit(ONE_T))
        assert program.t == 1
        (gadget,) = program.steps
        assert isinstance(gadget, TGadget)
        assert gadget.selector == BARE_T_SELECTOR

    def test_h_expansion(self):
        program = compile_to_gadgets(parse_circuit(H_OUTPUT))
        assert program.t == 6
        kinds = ["T" if isinstance(step, TGadget) else step.gate.kind.value for step in program.steps]
        assert kinds == ["H", "T", "T", "H", "T", "T", "H", "T", "T", "H"]
        selectors = [gadget.selector for gadget in program.gadgets]
        expected = [selector for selector in H_EXPANSION_SELECTORS for _ in range(2)]
        assert selectors == expected
        assert [gadget.gadget_index for gadget in program.gadgets] == list(range(6))

    def test_h_expansion_alternates_test_roles(self):
        program = compile_to_gadgets(parse_circuit(H_OUTPUT))
        xtest = [g.selector.for_run(RunType.X_TEST) for g in program.gadgets]
        ztest = [g.selector.for_run(RunType.Z_TEST) for g in program.gadgets]
        assert all(a is not b for a, b in zip(xtest, ztest))
        assert all(g.selector.for_run(RunType.COMPUTATION) is GadgetVariant.COMP for g in program.gadgets)

    def test_cliffords_pass_through(self):
        program = compile_to_gadgets(parse_circuit("qubits 2\nX 0\nCNOT 0 1\nZ 1\n"))
        assert program.t == 0
        assert all(isinstance(step, DirectClifford) for step in program.steps)
        assert program.dims.m == 2


class TestOracle:
    @pytest.mark.parametrize("text,p,verdict", [
        (EMPTY, 1.0, Verdict.YES),
        (X_OUTPUT, 0.0, Verdict.NO),
        (H_OUTPUT, 0.5, Verdict.NEITHER),
        (ONE_T, 1.0, Verdict.YES),
        ("qubits 2\nH 0\nCNOT 0 1\n", 0.5, Verdict.NEITHER),
        ("qubits 2\nX 0\nCNOT 0 1\n", 0.0, Verdict.NO),
        ("qubits 1\nH 0\nT 0\nT 0\nT 0\nT 0\nH 0\n", 0.0, Verdict.NO),
    ])
    def test_ideal_probability(self, text, p, verdict):
        circuit = parse_circuit(text)
        assert ideal_probability(circuit) == pytest.approx(p, abs=1e-12)
        assert classify_instance(circuit).verdict is verdict

    def test_neither_warns(self, caplog):
        with caplog.at_level("WARNING"):
            classify_instance(parse_circuit(H_OUTPUT))
        assert "promise gap" in caplog.text
