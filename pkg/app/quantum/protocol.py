"""
P1 protocol - the prepare-and-send verifier and the honest prover

The verifier encrypts its input with a one-time pad, prepares one
auxiliary qubit per T-gadget, tracks the pad through every step and
decrypts the output bit. Provers are plugged in through the ``Prover``
interface; the same interface is driven by the EPR engine in
``app.quantum.epr``.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import ProtocolOrderException, ValidationException
from app.core.rng import child_rng, random_bit
from app.quantum.circuit import (
    DirectClifford,
    GadgetProgram,
    GadgetVariant,
    RunType,
    TGadget,
)
from app.quantum.pauli import PadKey, PadKeys, clifford_key_update
from app.quantum.statevec import (
    AuxStateSpec,
    Gate,
    GateKind,
    QuantumRegister,
    State,
    apply_gate,
    discard_qubit,
    measure_computational,
    prepare_state,
    swap_qubits,
)

logger = logging.getLogger(__name__)

RUN_TYPES = (RunType.COMPUTATION, RunType.X_TEST, RunType.Z_TEST)

CNOT = Gate(GateKind.CNOT)
PHASE = Gate(GateKind.P)


def input_label(wire: int) -> str:
    return f"in{wire}"


def aux_label(gadget_index: int) -> str:
    return f"aux{gadget_index}"


def slot_label(gadget_index: int) -> str:
    return f"slot{gadget_index}"


# ==================== TRANSCRIPTS ====================

@dataclass(frozen=True)
class TGadgetRandomness:
    """Verifier-private bits of one gadget; unused bits stay 0."""

    variant: GadgetVariant
    d: int = 0
    e: int = 0
    y: int = 0
    x: Optional[int] = None


@dataclass(frozen=True)
class GadgetUpdate:
    x: int
    pad: PadKey
    check_passed: Optional[bool] = None


@dataclass(frozen=True)
class GadgetRecord:
    c: int
    x: int
    check_passed: Optional[bool] = None


@dataclass(frozen=True)
class Transcript:
    run_type: RunType
    gadgets: Tuple[GadgetRecord, ...]
    output_bit: Optional[int]
    decrypted_bit: Optional[int]
    aborted: bool = False

    @property
    def checks_passed(self) -> bool:
        return all(record.check_passed is not False for record in self.gadgets)

    @property
    def check_failures(self) -> int:
        return sum(record.check_passed is False for record in self.gadgets)

    @property
    def x_bits(self) -> Tuple[int, ...]:
        return tuple(record.x for record in self.gadgets)


@dataclass(frozen=True)
class Outcome:
    accept: bool
    transcript: Transcript


def accepts(run_type: RunType, transcript: Transcript) -> bool:
    """Verdict of a finished run; checks are evaluated only at the end."""
    if transcript.aborted:
        return False
    if run_type is RunType.COMPUTATION:
        return transcript.decrypted_bit == 0
    if run_type is RunType.X_TEST:
        return transcript.checks_passed and transcript.decrypted_bit == 0
    return transcript.checks_passed


def sample_run_type(rng: np.random.Generator) -> RunType:
    return RUN_TYPES[int(rng.integers(0, len(RUN_TYPES)))]


# ==================== VERIFIER ====================

def initial_input(run_type: RunType, n: int, rng: np.random.Generator) -> Tuple[State, PadKeys]:
    """Encrypted |0⟩^n (computation, X-test) or |+⟩^n (Z-test) with fresh keys."""
    if n < 1:
        raise ValidationException("The input needs at least one wire")
    keys = tuple(PadKey(random_bit(rng), random_bit(rng)) for _ in range(n))
    if run_type is RunType.Z_TEST:
        # X^a Z^b|+⟩ equals Z^b|+⟩ up to sign
        specs = [AuxStateSpec.phased_plus(key.b, 0) for key in keys]
    else:
        specs = [AuxStateSpec.basis(key.a) for key in keys]
    return prepare_state(specs), keys


def draw_randomness(variant: GadgetVariant, rng: np.random.Generator) -> TGadgetRandomness:
    if variant is GadgetVariant.COMP:
        d, e, y = random_bit(rng), random_bit(rng), random_bit(rng)
        return TGadgetRandomness(variant, d=d, e=e, y=y)
    if variant is GadgetVariant.X_VAR:
        d, x = random_bit(rng), random_bit(rng)
        return TGadgetRandomness(variant, d=d, x=x)
    d, y = random_bit(rng), random_bit(rng)
    return TGadgetRandomness(variant, d=d, y=y, x=y)


def t_gadget_aux_state(variant: GadgetVariant, randomness: TGadgetRandomness) -> State:
    """
    The auxiliary qubit of a gadget.

    Computation: X^d Z^e P^y T|+⟩, prepared as Z^{e⊕d} P^{y⊕d} T|+⟩.
    X-variant: X^d|0⟩. Z-variant: Z^d P^y|+⟩.

    The wire's pad does not enter the state: it is combined with ``c`` and
    the randomness only in ``verifier_t_gadget_update``, so one prepared
    qubit serves every pad.
    """
    if randomness.variant is not variant:
        raise ValidationException(f"Randomness drawn for {randomness.variant}, not {variant}")
    d, e, y = randomness.d, randomness.e, randomness.y
    if variant is GadgetVariant.COMP:
        spec = AuxStateSpec.phased_plus(e ^ d, y ^ d, t=True)
    elif variant is GadgetVariant.X_VAR:
        spec = AuxStateSpec.basis(d)
    else:
        spec = AuxStateSpec.phased_plus(d, y)
    return prepare_state([spec])


def verifier_t_gadget_update(
    variant: GadgetVariant, pad: PadKey, c: int, randomness: TGadgetRandomness
) -> GadgetUpdate:
    """Correction bit and new pad for the gadget's wire after receiving ``c``."""
    a, b = pad.a, pad.b
    d, e, y = randomness.d, randomness.e, randomness.y
    if variant is GadgetVariant.COMP:
        s = a ^ c
        x = s ^ d ^ y
        return GadgetUpdate(x, PadKey(s, (s & (d ^ y)) ^ s ^ b ^ e ^ y))
    if variant is GadgetVariant.X_VAR:
        return GadgetUpdate(randomness.x, PadKey(d, 0), check_passed=(c == a ^ d))
    return GadgetUpdate(y, PadKey(c, b ^ d ^ y))


def key_update_for_run(
    step: DirectClifford, keys: Sequence[PadKey], run_type: RunType
) -> PadKeys:
    """X and Z are key updates of the computation run; tests run the identity."""
    if step.gate.kind in (GateKind.X, GateKind.Z) and run_type is not RunType.COMPUTATION:
        return tuple(keys)
    return clifford_key_update(step.gate, keys, step.targets)


def honest_t_gadget(
    state: State,
    data_wire: int,
    aux_qubit: int,
    x: Union[int, Callable[[int], int]],
    rng: np.random.Generator,
) -> Tuple[int, State]:
    """
    Run one gadget on a bare state.

    CNOT from the auxiliary qubit onto the data wire, swap the two, measure
    the swapped-out data and apply P^x to the wire. ``x`` may be a callable
    that receives ``c``, which is how the verifier answers after seeing it.
    The measured qubit is removed from the returned state.
    """
    state = apply_gate(state, CNOT, (aux_qubit, data_wire))
    state = swap_qubits(state, aux_qubit, data_wire)
    c, state = measure_computational(state, aux_qubit, rng)
    state = discard_qubit(state, aux_qubit)
    wire = data_wire - 1 if aux_qubit < data_wire else data_wire
    bit = x(c) if callable(x) else x
    if bit:
        state = apply_gate(state, PHASE, (wire,))
    return c, state


# ==================== PROVERS ====================

@dataclass(frozen=True)
class ReturnedQubit:
    """A message that hands a register back for the verifier to measure."""

    label: str


Message = Union[int, ReturnedQubit]


class ProverRegister:
    """The qubits a prover holds, addressed by label."""

    def __init__(
        self,
        register: QuantumRegister,
        input_labels: Sequence[str],
        rng: np.random.Generator,
        deferred_measurement: bool = False,
        slot_labels: Optional[Sequence[str]] = None,
    ):
        self.register = register
        self.input_labels = list(input_labels)
        self.rng = rng
        self.deferred_measurement = deferred_measurement
        self.slot_labels = list(slot_labels) if slot_labels is not None else None

    def apply(self, gate: Gate, *labels: str) -> None:
        self.register.apply(gate, *labels)

    def swap(self, first: str, second: str) -> None:
        self.register.swap(first, second)

    def measure(self, label: str) -> int:
        return self.register.measure(label, self.rng, discard=True)


class Prover(ABC):
    """Prover side of both protocols."""

    needs_classical_slots: bool = False

    @abstractmethod
    def receive(self, register: ProverRegister) -> None:
        ...

    @abstractmethod
    def apply_clifford(self, step: DirectClifford) -> None:
        ...

    @abstractmethod
    def send_c(self, step: TGadget, aux: str) -> Message:
        ...

    @abstractmethod
    def receive_x(self, step: TGadget, x: int) -> None:
        ...

    @abstractmethod
    def send_output(self) -> Message:
        ...


class HonestProver(Prover):
    """
    Follows every gadget exactly.

    After the CNOT the auxiliary qubit takes over the data wire's label and
    the old data register is measured under the auxiliary label. With
    deferred measurement (EPR protocol) the prover returns the register
    instead of measuring it.
    """

    def __init__(self):
        self._register: Optional[ProverRegister] = None
        self.measured: List[str] = []

    @property
    def register(self) -> ProverRegister:
        if self._register is None:
            raise ProtocolOrderException("Prover used before receiving its input")
        return self._register

    def receive(self, register: ProverRegister) -> None:
        self._register = register
        self.measured = []

    def wire_label(self, wire: int) -> str:
        return self.register.input_labels[wire]

    def apply_clifford(self, step: DirectClifford) -> None:
        if step.gate.kind in (GateKind.X, GateKind.Z):
            return
        self.register.apply(step.gate, *(self.wire_label(w) for w in step.targets))

    def send_c(self, step: TGadget, aux: str) -> Message:
        data = self.wire_label(step.wire)
        self.register.apply(CNOT, aux, data)
        self.register.swap(aux, data)
        self.measured.append(aux)
        if self.register.deferred_measurement:
            return ReturnedQubit(aux)
        return self.register.measure(aux)

    def receive_x(self, step: TGadget, x: int) -> None:
        if x:
            self.register.apply(PHASE, self.wire_label(step.wire))

    def send_output(self) -> Message:
        output = self.wire_label(len(self.register.input_labels) - 1)
        if self.register.deferred_measurement:
            return ReturnedQubit(output)
        return self.register.measure(output)


def classical_message(message: Message) -> int:
    if isinstance(message, ReturnedQubit):
        raise ProtocolOrderException(
            f"The p1 protocol needs classical bits, prover returned register '{message.label}'"
        )
    if message not in (0, 1):
        raise ProtocolOrderException(f"Prover sent {message!r}, expected a bit")
    return int(message)


# ==================== EXECUTION ====================

def execute(
    program: GadgetProgram,
    run_type: RunType,
    prover: Prover,
    rng: np.random.Generator,
) -> Outcome:
    """Run the p1 protocol once. Auxiliary qubits are prepared as each gadget starts."""
    state, keys = initial_input(run_type, program.n, rng)
    labels = [input_label(w) for w in range(program.n)]
    register = ProverRegister(QuantumRegister(state, labels), labels, child_rng(rng))
    prover.receive(register)

    records: List[GadgetRecord] = []
    for step in program.steps:
        if isinstance(step, DirectClifford):
            prover.apply_clifford(step)
            keys = key_update_for_run(step, keys, run_type)
            continue

        variant = step.selector.for_run(run_type)
        randomness = draw_randomness(variant, rng)
        label = aux_label(step.gadget_index)
        register.register.attach([label], t_gadget_aux_state(variant, randomness))
        c = classical_message(prover.send_c(step, label))
        update = verifier_t_gadget_update(variant, keys[step.wire], c, randomness)
        keys = keys[: step.wire] + (update.pad,) + keys[step.wire + 1:]
        prover.receive_x(step, update.x)
        records.append(GadgetRecord(c, update.x, update.check_passed))

    output = classical_message(prover.send_output())
    transcript = Transcript(
        run_type=run_type,
        gadgets=tuple(records),
        output_bit=output,
        decrypted_bit=output ^ keys[-1].a,
    )
    accept = accepts(run_type, transcript)
    logger.debug(f"p1 {run_type.value} run: output {output}, accept={accept}")
    return Outcome(accept, transcript)
