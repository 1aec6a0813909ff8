"""
Circuit Module - source circuits, text format, gadget compilation and the ideal oracle

Text format::

    qubits <n>
    X <i> | Z <i> | H <i> | T <i> | CNOT <i> <j>

``#`` starts a comment; blank lines are ignored. The output qubit is
wire n-1.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from app.core.exceptions import CircuitParseException, ValidationException
from app.quantum.pauli import ProtocolDims
from app.quantum.statevec import Gate, GateKind, apply_gate, probability_of_zero, zero_state

logger = logging.getLogger(__name__)

SOURCE_GATES = (GateKind.X, GateKind.Z, GateKind.H, GateKind.T, GateKind.CNOT)
YES_THRESHOLD = 2 / 3
NO_THRESHOLD = 1 / 3


class RunType(str, Enum):
    COMPUTATION = "comp"
    X_TEST = "xtest"
    Z_TEST = "ztest"


class GadgetVariant(str, Enum):
    COMP = "comp"
    X_VAR = "xvar"
    Z_VAR = "zvar"


# ==================== CIRCUITS ====================

@dataclass(frozen=True)
class GateOp:
    gate: Gate
    targets: Tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.gate.kind.value} {' '.join(str(t) for t in self.targets)}"


@dataclass(frozen=True)
class Circuit:
    n: int
    gates: Tuple[GateOp, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValidationException("A circuit needs at least one qubit")
        for op in self.gates:
            if op.gate.kind not in SOURCE_GATES or op.gate.dagger:
                raise ValidationException(f"Gate {op.gate} is not in the source gate set")
            if len(op.targets) != op.gate.arity:
                raise ValidationException(f"{op} has the wrong number of targets")
            for target in op.targets:
                if not 0 <= target < self.n:
                    raise ValidationException(f"{op}: wire {target} out of range [0, {self.n})")
            if len(set(op.targets)) != len(op.targets):
                raise ValidationException(f"{op}: CNOT wires must differ")

    @property
    def output_wire(self) -> int:
        return self.n - 1

    def count(self, kind: GateKind) -> int:
        return sum(op.gate.kind is kind for op in self.gates)


def parse_circuit(text: str, source: Optional[str] = None) -> Circuit:
    """
    Parse the circuit text format.

    Raises:
        CircuitParseException: with the offending line number
    """
    n: Optional[int] = None
    gates: List[GateOp] = []

    for line_no, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        head, args = tokens[0], tokens[1:]

        if n is None:
            if head != "qubits" or len(args) != 1:
                raise CircuitParseException("expected 'qubits <n>' header", line_no, source)
            n = _parse_int(args[0], line_no, source)
            if n < 1:
                raise CircuitParseException("qubit count must be at least 1", line_no, source)
            continue

        try:
            kind = GateKind(head)
        except ValueError:
            kind = None
        if kind not in SOURCE_GATES:
            raise CircuitParseException(f"unknown gate '{head}'", line_no, source)

        gate = Gate(kind)
        if len(args) != gate.arity:
            raise CircuitParseException(
                f"{head} takes {gate.arity} wire(s), got {len(args)}", line_no, source
            )
        targets = tuple(_parse_int(arg, line_no, source) for arg in args)
        for target in targets:
            if not 0 <= target < n:
                raise CircuitParseException(
                    f"wire {target} out of range for {n} qubit(s)", line_no, source
                )
        if len(set(targets)) != len(targets):
            raise CircuitParseException("CNOT wires must differ", line_no, source)
        gates.append(GateOp(gate, targets))

    if n is None:
        raise CircuitParseException("missing 'qubits <n>' header", None, source)
    return Circuit(n, tuple(gates))


def _parse_int(token: str, line_no: int, source: Optional[str]) -> int:
    try:
        return int(token)
    except ValueError:
        raise CircuitParseException(f"expected an integer, got '{token}'", line_no, source) from None


def serialize_circuit(circuit: Circuit) -> str:
    lines = [f"qubits {circuit.n}"] + [str(op) for op in circuit.gates]
    return "\n".join(lines) + "\n"


def load_circuit(path: Union[str, Path]) -> Circuit:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise ValidationException(f"Cannot read circuit file {path}: {e}") from e
    except UnicodeDecodeError:
        raise CircuitParseException("circuit files must be ASCII", None, str(path)) from None
    return parse_circuit(text, source=str(path))


# ==================== GADGET PROGRAMS ====================

@dataclass(frozen=True)
class VariantSelector:
    """Which gadget variant a T-gadget runs as in each run type."""

    comp: GadgetVariant
    xtest: GadgetVariant
    ztest: GadgetVariant

    def for_run(self, run_type: RunType) -> GadgetVariant:
        return {
            RunType.COMPUTATION: self.comp,
            RunType.X_TEST: self.xtest,
            RunType.Z_TEST: self.ztest,
        }[run_type]


BARE_T_SELECTOR = VariantSelector(GadgetVariant.COMP, GadgetVariant.X_VAR, GadgetVariant.Z_VAR)

# k-th P of H = HPHPHPH: X-test and Z-test swap roles on each P
H_EXPANSION_SELECTORS = (
    VariantSelector(GadgetVariant.COMP, GadgetVariant.Z_VAR, GadgetVariant.X_VAR),
    VariantSelector(GadgetVariant.COMP, GadgetVariant.X_VAR, GadgetVariant.Z_VAR),
    VariantSelector(GadgetVariant.COMP, GadgetVariant.Z_VAR, GadgetVariant.X_VAR),
)


@dataclass(frozen=True)
class DirectClifford:
    gate: Gate
    targets: Tuple[int, ...]


@dataclass(frozen=True)
class TGadget:
    wire: int
    gadget_index: int
    selector: VariantSelector


GadgetStep = Union[DirectClifford, TGadget]


@dataclass(frozen=True)
class GadgetProgram:
    n: int
    steps: Tuple[GadgetStep, ...]

    @property
    def t(self) -> int:
        return sum(isinstance(step, TGadget) for step in self.steps)

    @property
    def dims(self) -> ProtocolDims:
        return ProtocolDims(n=self.n, t=self.t)

    @property
    def gadgets(self) -> List[TGadget]:
        return [step for step in self.steps if isinstance(step, TGadget)]


def compile_to_gadgets(circuit: Circuit) -> GadgetProgram:
    """Expand each H into H,TT,H,TT,H,TT,H and give every T its own gadget."""
    steps: List[GadgetStep] = []
    counter = 0

    def gadget(wire: int, selector: VariantSelector) -> TGadget:
        nonlocal counter
        step = TGadget(wire, counter, selector)
        counter += 1
        return step

    for op in circuit.gates:
        kind = op.gate.kind
        if kind is GateKind.T:
            steps.append(gadget(op.targets[0], BARE_T_SELECTOR))
        elif kind is GateKind.H:
            wire = op.targets[0]
            steps.append(DirectClifford(op.gate, op.targets))
            for selector in H_EXPANSION_SELECTORS:
                steps.append(gadget(wire, selector))
                steps.append(gadget(wire, selector))
                steps.append(DirectClifford(op.gate, op.targets))
        else:
            steps.append(DirectClifford(op.gate, op.targets))

    program = GadgetProgram(circuit.n, tuple(steps))
    logger.debug(f"Compiled {len(circuit.gates)} gates into {len(steps)} steps (t={program.t})")
    return program


# ==================== ORACLE ====================

class Verdict(str, Enum):
    YES = "YES"
    NO = "NO"
    NEITHER = "NEITHER"


@dataclass(frozen=True)
class InstanceLabel:
    verdict: Verdict
    p: float


def ideal_probability(circuit: Circuit) -> float:
    """Probability that the output wire of U|0^n⟩ measures 0."""
    state = zero_state(circuit.n)
    for op in circuit.gates:
        state = apply_gate(state, op.gate, op.targets)
    return float(np.clip(probability_of_zero(state, circuit.output_wire), 0.0, 1.0))


def classify_instance(circuit: Circuit) -> InstanceLabel:
    p = ideal_probability(circuit)
    if p >= YES_THRESHOLD:
        verdict = Verdict.YES
    elif p <= NO_THRESHOLD:
        verdict = Verdict.NO
    else:
        verdict = Verdict.NEITHER
        logger.warning(f"Instance violates the promise gap (p = {p:.6f})")
    return InstanceLabel(verdict, p)


VERDICT_THRESHOLDS: Dict[Verdict, str] = {
    Verdict.YES: "p >= 2/3",
    Verdict.NO: "p <= 1/3",
    Verdict.NEITHER: "1/3 < p < 2/3",
}
