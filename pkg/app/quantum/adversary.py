"""
Adversary Module - attack specifications, injection and soundness predictions

An attack is one or more Kraus operators written in the Pauli basis over the
m = 2t + n registers the prover returns: the pair (measured auxiliary,
classical bit) of every gadget, then the data registers with the output
last. The attacked prover behaves honestly and applies the attack just
before handing back its registers in the EPR protocol.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    AttackParseException,
    CapacityExceededException,
    ProtocolOrderException,
    ProverAbortException,
    ValidationException,
)
from app.quantum.circuit import GadgetProgram, GadgetVariant, RunType
from app.quantum.pauli import (
    MEASURED_LETTERS,
    PauliString,
    PauliSum,
    ProtocolDims,
    apply_pauli,
    classify_benign,
    commutes,
    is_trace_preserving,
    is_unitary_combination,
)
from app.quantum.protocol import HonestProver, Message, ProverRegister
from app.quantum.statevec import (
    AuxStateSpec,
    Gate,
    GateKind,
    State,
    apply_gate,
    fidelity_up_to_phase,
    postselect,
    prepare_state,
)

logger = logging.getLogger(__name__)

KrausOperator = PauliSum
CHANNEL_SEPARATOR = "---"


# ==================== ATTACK SPECIFICATION ====================

@dataclass(frozen=True)
class AttackSpec:
    """Kraus operators E_k = Σ_Q α_Q Q over the m attacked registers."""

    dims: ProtocolDims
    operators: Tuple[KrausOperator, ...]

    def __post_init__(self):
        if not self.operators:
            raise ValidationException("An attack needs at least one Kraus operator")
        for operator in self.operators:
            if operator.num_qubits != self.dims.m:
                raise ValidationException(
                    f"Kraus operator on {operator.num_qubits} registers, expected m = {self.dims.m} "
                    f"(t={self.dims.t}, n={self.dims.n})"
                )

    @classmethod
    def identity(cls, dims: ProtocolDims) -> "AttackSpec":
        return cls.pauli(dims, PauliString.identity(dims.m))

    @classmethod
    def pauli(cls, dims: ProtocolDims, pauli: Union[str, PauliString], coefficient: complex = 1) -> "AttackSpec":
        if isinstance(pauli, str):
            pauli = PauliString.parse(pauli)
        return cls(dims, (PauliSum(((pauli, coefficient),)),))

    @classmethod
    def single(cls, dims: ProtocolDims, terms: Sequence[Tuple[PauliString, complex]]) -> "AttackSpec":
        return cls(dims, (PauliSum(tuple(terms)),))

    @property
    def is_single_operator(self) -> bool:
        return len(self.operators) == 1

    @property
    def is_pauli(self) -> bool:
        return self.is_single_operator and self.operators[0].is_single_term

    @property
    def needs_full_layout(self) -> bool:
        return not self.is_pauli

    @property
    def operator(self) -> KrausOperator:
        """The attack's only Kraus operator."""
        if not self.is_single_operator:
            raise ValidationException("This prediction needs a single Kraus operator")
        return self.operators[0]

    def is_unitary(self) -> bool:
        return self.is_single_operator and is_unitary_combination(self.operators[0])

    def validate(self) -> "AttackSpec":
        """
        Check Σ_k E_k†E_k ≼ I.

        Raises:
            ValidationException: the operators do not form a channel
            CapacityExceededException: a non-unitary channel too large to check densely
        """
        if is_trace_preserving(self.operators):
            return self
        if self.dims.m > settings.MAX_CHANNEL_REGISTERS:
            raise CapacityExceededException(
                f"Non-unitary attacks are checked densely and limited to m <= "
                f"{settings.MAX_CHANNEL_REGISTERS} (MAX_CHANNEL_REGISTERS), got m = {self.dims.m}"
            )
        gram = sum(op.to_matrix().conj().T @ op.to_matrix() for op in self.operators)
        slack = np.linalg.eigvalsh(np.eye(gram.shape[0]) - gram)
        if np.min(slack) < -settings.TOLERANCE:
            raise ValidationException(
                f"Kraus operators exceed the identity (min eigenvalue of I - ΣE†E is {np.min(slack):.3e})"
            )
        return self

    def check_program(self, program: GadgetProgram) -> None:
        if program.dims != self.dims:
            raise ValidationException(
                f"Attack written for t={self.dims.t}, n={self.dims.n} but the program has "
                f"t={program.t}, n={program.n}"
            )


def parse_attack(text: str, dims: ProtocolDims, source: Optional[str] = None) -> AttackSpec:
    """
    Parse an attack file: one ``<re>,<im> <PauliString>`` term per line,
    ``---`` between Kraus operators, ``#`` comments.
    """
    operators: List[PauliSum] = []
    current: List[Tuple[PauliString, complex]] = []
    seen: Dict[str, int] = {}

    def close(line_no: Optional[int]) -> None:
        if not current:
            raise AttackParseException("empty Kraus operator", line_no, source)
        operators.append(PauliSum(tuple(current)))
        current.clear()
        seen.clear()

    line_no = 0
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == CHANNEL_SEPARATOR:
            close(line_no)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise AttackParseException("expected '<re>,<im> <PauliString>'", line_no, source)
        coefficient = _parse_coefficient(parts[0], line_no, source)
        try:
            pauli = PauliString.parse(parts[1])
        except ValidationException as e:
            raise AttackParseException(str(e), line_no, source) from None
        if len(pauli) != dims.m:
            raise AttackParseException(
                f"Pauli string has {len(pauli)} letters, expected m = {dims.m}", line_no, source
            )
        if pauli.letters in seen:
            raise AttackParseException(
                f"Pauli string {pauli} repeats line {seen[pauli.letters]}", line_no, source
            )
        seen[pauli.letters] = line_no
        current.append((pauli, coefficient))

    close(line_no if line_no else None)
    return AttackSpec(dims, tuple(operators))


def _parse_coefficient(token: str, line_no: int, source: Optional[str]) -> complex:
    parts = token.split(",")
    if len(parts) != 2:
        raise AttackParseException(f"coefficient '{token}' is not '<re>,<im>'", line_no, source)
    try:
        return complex(float(parts[0]), float(parts[1]))
    except ValueError:
        raise AttackParseException(f"coefficient '{token}' is not numeric", line_no, source) from None


def load_attack(path: Union[str, Path], dims: ProtocolDims) -> AttackSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="ascii")
    except OSError as e:
        raise ValidationException(f"Cannot read attack file {path}: {e}") from e
    return parse_attack(text, dims, source=str(path))


# ==================== INJECTION ====================

class AttackedProver(HonestProver):
    """Honest prover followed by the attack on the returned registers."""

    def __init__(self, attack: AttackSpec):
        super().__init__()
        self.attack = attack

    @property
    def needs_classical_slots(self) -> bool:
        return self.attack.needs_full_layout

    def attacked_registers(self) -> List[Optional[str]]:
        """Register labels in attack order; None where a classical slot is not simulated."""
        register = self.register
        slots = register.slot_labels
        labels: List[Optional[str]] = []
        for g, measured in enumerate(self.measured):
            labels.append(measured)
            labels.append(slots[g] if slots is not None else None)
        return labels + list(register.input_labels)

    def send_output(self) -> Message:
        register = self.register
        if not register.deferred_measurement:
            raise ProtocolOrderException("Attacks are injected in the EPR protocol only")
        dims = self.attack.dims
        if len(self.measured) != dims.t or len(register.input_labels) != dims.n:
            raise ValidationException(
                f"Attack written for t={dims.t}, n={dims.n} but the prover ran "
                f"t={len(self.measured)}, n={len(register.input_labels)}"
            )
        apply_attack(register, self.attack, self.attacked_registers())
        return super().send_output()


def attacked_prover(attack: AttackSpec) -> AttackedProver:
    """Honest prover with ``attack`` applied to its returned registers."""
    return AttackedProver(attack)


def apply_attack(register: ProverRegister, attack: AttackSpec, labels: Sequence[Optional[str]]) -> None:
    """
    Apply the attack to the labelled registers.

    One Kraus operator is selected with probability ‖E_k ψ‖²; the missing
    mass of a trace-decreasing attack is an abort. A single unitary
    operator consumes no randomness.
    """
    positions = [i for i, label in enumerate(labels) if label is not None]
    qubits = register.register.indices(labels[i] for i in positions)
    state = register.register.state

    if attack.is_pauli:
        pauli, alpha = attack.operator.terms[0]
        kept = abs(alpha) ** 2
        if kept < 1 - settings.TOLERANCE and register.rng.random() >= kept:
            raise ProverAbortException(f"Attack aborted (kept mass {kept:.6f})")
        # the phase of alpha is global; slot letters only touch classical bits
        register.register.replace(apply_pauli(state, pauli.restrict(positions), qubits))
        return

    operators = [operator.restrict(positions) for operator in attack.operators]
    branches = [operator.apply(state, qubits) for operator in operators]
    weights = np.array([np.vdot(branch, branch).real for branch in branches])

    if len(branches) == 1 and abs(weights[0] - 1) <= settings.TOLERANCE:
        chosen = 0
    else:
        draw = register.rng.random()
        cumulative = np.cumsum(weights)
        if draw >= cumulative[-1]:
            raise ProverAbortException(f"Attack aborted (kept mass {cumulative[-1]:.6f})")
        chosen = int(np.searchsorted(cumulative, draw, side="right"))
    branch = branches[chosen] / np.sqrt(weights[chosen])
    register.register.replace(State(state.num_qubits, branch))


# ==================== PREDICTIONS ====================

def _normalized_weights(attack: AttackSpec) -> Dict[str, float]:
    operator = attack.operator
    total = operator.norm_squared()
    if abs(total - 1) > settings.TOLERANCE:
        raise ValidationException(f"Attack term is not normalized (Σ|α|² = {total:.12f})")
    return operator.weights()


def non_benign_mass(attack: AttackSpec) -> float:
    return sum(
        weight for letters, weight in _normalized_weights(attack).items()
        if not classify_benign(PauliString(letters), attack.dims)
    )


def predicted_test_rejection(attack: AttackSpec) -> float:
    """Probability that one of the test runs rejects: Σ over non-benign Q of |α_Q|²."""
    return non_benign_mass(attack)


def predicted_comp_acceptance(attack: AttackSpec, p: float) -> float:
    """Upper bound p·(benign mass) + (non-benign mass) on computation-run acceptance."""
    if not 0 <= p <= 1:
        raise ValidationException(f"p must lie in [0, 1], got {p}")
    bad = non_benign_mass(attack)
    return p * (1 - bad) + bad


@dataclass(frozen=True)
class AcceptanceBound:
    value: float
    applies: bool


def overall_acceptance_bound(attack: AttackSpec, p: float) -> AcceptanceBound:
    """
    Bound on random-run acceptance: each non-benign component is rejected by
    at least one test run, so the two tests accept at most 2 - β in total.
    """
    bad = non_benign_mass(attack)
    comp = predicted_comp_acceptance(attack, p)
    value = comp / 3 + (2 - bad) / 3
    applies = p <= 1 / 3 + settings.TOLERANCE
    if not applies:
        logger.warning(f"Acceptance bound requested for p = {p:.4f} > 1/3; it is only claimed for NO instances")
    return AcceptanceBound(value, applies)


def single_gadget_acceptance(attack: AttackSpec, p: float) -> float:
    """
    Exact computation-run acceptance for a one-gadget, one-wire program.

    An X or Y on the measured auxiliary flips the reported c, so the
    verifier decrypts with the wrong X key; an X or Y on the output flips
    the bit itself. The verdict flips when the two flips do not cancel.
    """
    if attack.dims != ProtocolDims(n=1, t=1):
        raise ValidationException("single_gadget_acceptance needs t = 1, n = 1")
    flipping = (0, attack.dims.m - 1)

    def accepted(letters: str) -> float:
        flips = sum(letters[i] not in MEASURED_LETTERS for i in flipping)
        return 1 - p if flips % 2 else p

    return sum(weight * accepted(letters) for letters, weight in _normalized_weights(attack).items())


def detection_map(program: GadgetProgram) -> Dict[RunType, List[int]]:
    """
    Registers on which an X or Y is caught by each test run: the measured
    auxiliary of every gadget that runs as the X-variant there, plus the
    output register in the X-test run.
    """
    dims = program.dims
    detected: Dict[RunType, List[int]] = {RunType.X_TEST: [], RunType.Z_TEST: []}
    for gadget in program.gadgets:
        for run_type in detected:
            if gadget.selector.for_run(run_type) is GadgetVariant.X_VAR:
                detected[run_type].append(2 * gadget.gadget_index)
    detected[RunType.X_TEST].append(dims.m - 1)
    return detected


def predicted_run_rejection(attack: AttackSpec, program: GadgetProgram, run_type: RunType) -> float:
    """Rejection probability of one test run: mass of components it detects."""
    if run_type is RunType.COMPUTATION:
        raise ValidationException("Computation-run rejection depends on the circuit; use predicted_comp_acceptance")
    attack.check_program(program)
    registers = detection_map(program)[run_type]
    return sum(
        weight for letters, weight in _normalized_weights(attack).items()
        if any(letters[i] not in MEASURED_LETTERS for i in registers)
    )


# ==================== RANDOM ATTACKS ====================

def _random_pauli(m: int, rng: np.random.Generator) -> PauliString:
    return PauliString("".join("IXYZ"[int(i)] for i in rng.integers(0, 4, size=m)))


def random_unitary_attack(dims: ProtocolDims, rng: np.random.Generator, terms: int = 2) -> AttackSpec:
    """
    A random single-operator unitary attack with ``terms`` Pauli components.

    Pairwise anticommuting strings with real unit-norm weights are unitary;
    two commuting strings combine as cos θ P + i sin θ Q.
    """
    if terms < 1:
        raise ValidationException("An attack needs at least one term")
    m = dims.m
    if terms == 2 and rng.random() < 0.5:
        first = _random_pauli(m, rng)
        while True:
            second = _random_pauli(m, rng)
            if second.letters != first.letters and commutes(first, second):
                break
        theta = rng.uniform(0, np.pi / 2)
        pairs = [(first, np.cos(theta)), (second, 1j * np.sin(theta))]
    else:
        chosen: List[PauliString] = []
        attempts = 0
        while len(chosen) < terms:
            attempts += 1
            if attempts > 10_000:
                raise ValidationException(f"Could not find {terms} anticommuting strings on {m} registers")
            candidate = _random_pauli(m, rng)
            if all(not commutes(candidate, other) for other in chosen):
                chosen.append(candidate)
        weights = rng.normal(size=terms)
        weights /= np.linalg.norm(weights)
        pairs = list(zip(chosen, weights))
    attack = AttackSpec.single(dims, pairs)
    if not attack.is_unitary():
        raise ValidationException("Random attack construction is not unitary")
    return attack


# ==================== BIT-FLIP PROPAGATION ====================

def _comp_gadget_output(
    psi: State, a: int, b: int, d: int, e: int, y: int, outcome: int, flip: bool
) -> Tuple[State, int]:
    """Data X^a Z^b|ψ⟩ and aux X^d Z^e P^y T|+⟩; returns the aux after the CNOT, measuring ``outcome``."""
    data = psi
    if b:
        data = apply_gate(data, Gate(GateKind.Z), (0,))
    if a:
        data = apply_gate(data, Gate(GateKind.X), (0,))
    aux = prepare_state([AuxStateSpec.PLUS])
    aux = apply_gate(aux, Gate(GateKind.T), (0,))
    for gate, bit in ((GateKind.P, y), (GateKind.Z, e), (GateKind.X, d)):
        if bit:
            aux = apply_gate(aux, Gate(gate), (0,))
    joint = State(2, np.kron(data.amplitudes, aux.amplitudes))
    joint = apply_gate(joint, Gate(GateKind.CNOT), (1, 0))
    if flip:
        joint = apply_gate(joint, Gate(GateKind.X), (0,))
    _, joint = postselect(joint, 0, outcome)
    remaining = joint.tensor()[outcome]
    return State(1, remaining / np.linalg.norm(remaining)), outcome


def _phase_power(state: State, power: int) -> State:
    for _ in range(power % 4):
        state = apply_gate(state, Gate(GateKind.P), (0,))
    return state


def lemma_bitflip_propagation_check(
    a: int, b: int, c: int, d: int, e: int, x: int, psi: State
) -> bool:
    """
    Simulate the computation gadget with an X on the measured wire.

    ``c`` is the outcome the verifier sees, ``x`` its correction bit and
    y = a⊕c⊕d⊕x the auxiliary's phase bit. The attacked output must equal
    the honest output for the unflipped outcome c⊕1 with an extra
    Z^{d⊕y} P under the pad (Z^{a⊕c⊕x} P in terms of the messages).
    """
    if psi.num_qubits != 1:
        raise ValidationException("The propagation check runs on a single-qubit input")
    y = a ^ c ^ d ^ x

    attacked, _ = _comp_gadget_output(psi, a, b, d, e, y, outcome=c, flip=True)
    attacked = _phase_power(attacked, x)

    true_outcome = c ^ 1
    s = a ^ true_outcome
    f = (s & (d ^ y)) ^ s ^ b ^ e ^ y
    extra = (d ^ y)
    expected = apply_gate(psi, Gate(GateKind.T), (0,))
    expected = apply_gate(expected, Gate(GateKind.P), (0,))
    if extra:
        expected = apply_gate(expected, Gate(GateKind.Z), (0,))
    if f:
        expected = apply_gate(expected, Gate(GateKind.Z), (0,))
    if s:
        expected = apply_gate(expected, Gate(GateKind.X), (0,))

    fidelity = fidelity_up_to_phase(attacked, expected)
    passed = fidelity >= 1 - settings.TOLERANCE
    if not passed:
        logger.debug(f"Bit-flip check failed for a={a} b={b} c={c} d={d} e={e} x={x}: fidelity {fidelity:.12f}")
    return passed

