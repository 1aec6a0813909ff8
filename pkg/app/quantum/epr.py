"""
EPR protocol - the entanglement-based, delayed-choice verifier

The verifier hands the prover halves of EPR pairs and uniform classical
bits, and only after the prover has finished does it pick the run type and
measure its own halves. Registers on the verifier side carry a ``v:``
prefix.
"""
import itertools
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    AlreadyFinalizedException,
    CapacityExceededException,
    ProverAbortException,
    ValidationException,
)
from app.core.rng import child_rng, random_bit, trial_rng
from app.quantum.circuit import DirectClifford, GadgetProgram, GadgetVariant, RunType
from app.quantum.pauli import PadKey
from app.quantum.protocol import (
    RUN_TYPES,
    GadgetRecord,
    HonestProver,
    Message,
    Outcome,
    Prover,
    ProverRegister,
    ReturnedQubit,
    TGadgetRandomness,
    Transcript,
    accepts,
    aux_label,
    execute,
    input_label,
    key_update_for_run,
    slot_label,
    t_gadget_aux_state,
    verifier_t_gadget_update,
)
from app.quantum.statevec import (
    AuxStateSpec,
    Gate,
    GateKind,
    QuantumRegister,
    State,
    apply_gate,
    prepare_state,
    trace_distance,
)

logger = logging.getLogger(__name__)

VERIFIER_PREFIX = "v:"

H_GATE = Gate(GateKind.H)
P_GATE = Gate(GateKind.P)
T_GATE = Gate(GateKind.T)
X_GATE = Gate(GateKind.X)
Z_GATE = Gate(GateKind.Z)


class RegisterLayout(str, Enum):
    """
    COMPACT leaves the classical bits x out of the simulated register.
    FULL keeps each x as a pair |x⟩|x⟩ so an attack can act on the
    prover's copy (needed once an attack has more than one term).
    """

    COMPACT = "compact"
    FULL = "full"


def verifier_label(label: str) -> str:
    return VERIFIER_PREFIX + label


def epr_pair() -> State:
    return apply_gate(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ZERO]), Gate(GateKind.CNOT), (0, 1))


def simulated_qubits(program: GadgetProgram, layout: RegisterLayout) -> int:
    if layout is RegisterLayout.FULL:
        return 2 * program.dims.m
    return 2 * (program.n + program.t)


def _shared_register(program: GadgetProgram, layout: RegisterLayout) -> QuantumRegister:
    qubits = simulated_qubits(program, layout)
    if qubits > settings.MAX_QUBITS:
        raise CapacityExceededException(
            f"The epr protocol needs {qubits} simulated qubits for n={program.n}, t={program.t} "
            f"({layout.value} layout); the cap is MAX_QUBITS={settings.MAX_QUBITS}. "
            f"Use fewer H/T gates or the p1 protocol."
        )
    parts = []
    for wire in range(program.n):
        label = input_label(wire)
        parts.append(((label, verifier_label(label)), epr_pair()))
    for g in range(program.t):
        label = aux_label(g)
        parts.append(((label, verifier_label(label)), epr_pair()))
        if layout is RegisterLayout.FULL:
            slot = slot_label(g)
            parts.append(((slot, verifier_label(slot)), prepare_state([AuxStateSpec.ZERO] * 2)))
    return QuantumRegister.from_parts(parts)


# ==================== EXECUTION ====================

@dataclass
class DeferredTranscript:
    """Everything the verifier holds once the prover is done, before the run is chosen."""

    program: GadgetProgram
    register: QuantumRegister
    layout: RegisterLayout
    c: List[int] = field(default_factory=list)
    x: List[int] = field(default_factory=list)
    output_bit: Optional[int] = None
    aborted: bool = False
    finalized: bool = False

    @property
    def dims(self):
        return self.program.dims


def _resolve(message: Message, register: QuantumRegister, rng: np.random.Generator) -> int:
    if isinstance(message, ReturnedQubit):
        return register.measure(message.label, rng, discard=True)
    if message not in (0, 1):
        raise ValidationException(f"Prover sent {message!r}, expected a bit")
    return int(message)


def execute_epr(
    program: GadgetProgram,
    prover: Prover,
    rng: np.random.Generator,
    layout: RegisterLayout = RegisterLayout.COMPACT,
) -> DeferredTranscript:
    """
    Run the interaction of the epr protocol.

    The verifier answers every gadget with a fresh uniform bit. Registers the
    prover returns instead of measuring are measured here, in gadget order
    and then the output, once the prover has finished.
    """
    if prover.needs_classical_slots:
        layout = RegisterLayout.FULL
    register = _shared_register(program, layout)
    input_labels = [input_label(w) for w in range(program.n)]
    slots = [slot_label(g) for g in range(program.t)] if layout is RegisterLayout.FULL else None
    prover.receive(
        ProverRegister(register, input_labels, child_rng(rng), deferred_measurement=True, slot_labels=slots)
    )

    dt = DeferredTranscript(program=program, register=register, layout=layout)
    messages: List[Message] = []
    for step in program.steps:
        if isinstance(step, DirectClifford):
            prover.apply_clifford(step)
            continue
        messages.append(prover.send_c(step, aux_label(step.gadget_index)))
        x = random_bit(rng)
        if x and layout is RegisterLayout.FULL:
            slot = slot_label(step.gadget_index)
            register.apply(X_GATE, slot)
            register.apply(X_GATE, verifier_label(slot))
        dt.x.append(x)
        prover.receive_x(step, x)

    try:
        output = prover.send_output()
    except ProverAbortException as e:
        logger.debug(f"Prover aborted: {e}")
        dt.aborted = True
        return dt

    dt.c = [_resolve(message, register, rng) for message in messages]
    dt.output_bit = _resolve(output, register, rng)
    return dt


def finalize_run(dt: DeferredTranscript, run_type: RunType, rng: np.random.Generator) -> Outcome:
    """
    Choose-then-measure step of the verifier.

    Input halves are measured first (computational basis for the computation
    and X-test runs, Hadamard basis for the Z-test run), then each gadget's
    half in gadget order while the pad is tracked.

    Raises:
        AlreadyFinalizedException: if called twice on the same transcript
    """
    if dt.finalized:
        raise AlreadyFinalizedException("This deferred transcript was already finalized")
    dt.finalized = True
    program = dt.program

    if dt.aborted:
        transcript = Transcript(run_type, (), None, None, aborted=True)
        return Outcome(False, transcript)

    register = dt.register
    keys: Tuple[PadKey, ...] = ()
    for wire in range(program.n):
        half = verifier_label(input_label(wire))
        if run_type is RunType.Z_TEST:
            keys += (PadKey(0, register.measure_hadamard(half, rng, discard=True)),)
        else:
            keys += (PadKey(register.measure(half, rng, discard=True), 0),)

    records: List[GadgetRecord] = []
    for step in program.steps:
        if isinstance(step, DirectClifford):
            keys = key_update_for_run(step, keys, run_type)
            continue
        g = step.gadget_index
        variant = step.selector.for_run(run_type)
        pad = keys[step.wire]
        c, x = dt.c[g], dt.x[g]
        half = verifier_label(aux_label(g))

        if variant is GadgetVariant.COMP:
            d = random_bit(rng)
            y = pad.a ^ c ^ d ^ x
            register.apply(T_GATE, half)
            if y ^ d:
                register.apply(P_GATE, half)
            if d:
                register.apply(Z_GATE, half)
            register.apply(H_GATE, half)
            e = register.measure(half, rng, discard=True)
            randomness = TGadgetRandomness(variant, d=d, e=e, y=y)
        elif variant is GadgetVariant.X_VAR:
            d = register.measure(half, rng, discard=True)
            randomness = TGadgetRandomness(variant, d=d, x=x)
        else:
            if x:
                register.apply(P_GATE, half)
            register.apply(H_GATE, half)
            d = register.measure(half, rng, discard=True)
            randomness = TGadgetRandomness(variant, d=d, y=x, x=x)

        update = verifier_t_gadget_update(variant, pad, c, randomness)
        keys = keys[: step.wire] + (update.pad,) + keys[step.wire + 1:]
        records.append(GadgetRecord(c, x, update.check_passed))

    transcript = Transcript(
        run_type=run_type,
        gadgets=tuple(records),
        output_bit=dt.output_bit,
        decrypted_bit=dt.output_bit ^ keys[-1].a,
    )
    accept = accepts(run_type, transcript)
    logger.debug(f"epr {run_type.value} run: output {dt.output_bit}, accept={accept}")
    return Outcome(accept, transcript)


def execute_and_finalize(
    program: GadgetProgram,
    run_type: RunType,
    prover: Prover,
    rng: np.random.Generator,
    layout: RegisterLayout = RegisterLayout.COMPACT,
) -> Outcome:
    return finalize_run(execute_epr(program, prover, rng, layout), run_type, rng)


# ==================== INDISTINGUISHABILITY ====================

class ViewPolicy(str, Enum):
    """Which prover messages c the view comparison conditions on."""

    HONEST = "honest"
    ZEROS = "zeros"
    ONES = "ones"


def _message_histories(t: int, policy: ViewPolicy) -> List[Tuple[int, ...]]:
    if policy is ViewPolicy.HONEST:
        # an honest prover can send every history with positive probability
        return list(itertools.product((0, 1), repeat=t))
    return [(1 if policy is ViewPolicy.ONES else 0,) * t]


def _p1_view(program: GadgetProgram, history: Sequence[int]) -> Dict[Tuple[int, ...], np.ndarray]:
    """
    Prover's cq-view under the p1 protocol: for each x-vector, the weighted
    density of the registers it received (inputs, then auxiliaries in gadget
    order), averaged over run type, keys and verifier randomness.
    """
    n = program.n
    view: Dict[Tuple[int, ...], np.ndarray] = defaultdict(lambda: 0)
    variant_bits = {
        GadgetVariant.COMP: 3,
        GadgetVariant.X_VAR: 2,
        GadgetVariant.Z_VAR: 2,
    }
    for run_type in RUN_TYPES:
        variants = [gadget.selector.for_run(run_type) for gadget in program.gadgets]
        for key_bits in itertools.product((0, 1), repeat=2 * n):
            keys = tuple(PadKey(key_bits[2 * i], key_bits[2 * i + 1]) for i in range(n))
            if run_type is RunType.Z_TEST:
                specs = [AuxStateSpec.phased_plus(k.b, 0) for k in keys]
            else:
                specs = [AuxStateSpec.basis(k.a) for k in keys]
            input_vector = prepare_state(specs).amplitudes
            choices = [itertools.product((0, 1), repeat=variant_bits[v]) for v in variants]
            for draws in itertools.product(*choices):
                weight = 1 / (3 * 4 ** n * np.prod([2 ** len(bits) for bits in draws]))
                x_bits, vector = _replay_gadgets(program, run_type, keys, variants, draws, history)
                full = np.kron(input_vector, vector) if vector is not None else input_vector
                view[x_bits] = view[x_bits] + weight * np.outer(full, full.conj())
    return dict(view)


def _randomness_from_bits(variant: GadgetVariant, bits: Sequence[int]) -> TGadgetRandomness:
    if variant is GadgetVariant.COMP:
        d, e, y = bits
        return TGadgetRandomness(variant, d=d, e=e, y=y)
    if variant is GadgetVariant.X_VAR:
        d, x = bits
        return TGadgetRandomness(variant, d=d, x=x)
    d, y = bits
    return TGadgetRandomness(variant, d=d, y=y, x=y)


def _replay_gadgets(program, run_type, keys, variants, draws, history):
    x_bits: List[int] = []
    aux_vector: Optional[np.ndarray] = None
    for step in program.steps:
        if isinstance(step, DirectClifford):
            keys = key_update_for_run(step, keys, run_type)
            continue
        g = step.gadget_index
        randomness = _randomness_from_bits(variants[g], draws[g])
        aux = t_gadget_aux_state(variants[g], randomness).amplitudes
        aux_vector = aux if aux_vector is None else np.kron(aux_vector, aux)
        update = verifier_t_gadget_update(variants[g], keys[step.wire], history[g], randomness)
        keys = keys[: step.wire] + (update.pad,) + keys[step.wire + 1:]
        x_bits.append(update.x)
    return tuple(x_bits), aux_vector


def _epr_view(program: GadgetProgram) -> Dict[Tuple[int, ...], np.ndarray]:
    register = _shared_register(program, RegisterLayout.COMPACT)
    received = [input_label(w) for w in range(program.n)] + [aux_label(g) for g in range(program.t)]
    rho = register.density(received).entries
    share = 1 / 2 ** program.t
    return {x_bits: share * rho for x_bits in itertools.product((0, 1), repeat=program.t)}


def prover_view_distance(program: GadgetProgram, policy: ViewPolicy = ViewPolicy.HONEST) -> float:
    """
    Trace distance between the prover's view (received registers plus the
    classical bits x) under the two protocols, maximized over the message
    histories the policy allows.
    """
    if 2 * program.dims.m > settings.MAX_VIEW_QUBITS:
        raise CapacityExceededException(
            f"View comparison needs 2m = {2 * program.dims.m} qubits, "
            f"the cap is MAX_VIEW_QUBITS={settings.MAX_VIEW_QUBITS}"
        )
    epr_view = _epr_view(program)
    worst = 0.0
    for history in _message_histories(program.t, policy):
        p1_view = _p1_view(program, history)
        distance = 0.0
        for x_bits in set(p1_view) | set(epr_view):
            dim = 1 << (program.n + program.t)
            first = p1_view.get(x_bits, np.zeros((dim, dim), dtype=complex))
            second = epr_view.get(x_bits, np.zeros((dim, dim), dtype=complex))
            distance += trace_distance(first, second)
        worst = max(worst, distance)
    logger.debug(f"Prover view distance ({policy.value}): {worst:.3e}")
    return worst


def message_marginals(
    program: GadgetProgram, run_type: RunType, trials: int, seed: int
) -> Counter:
    """Counts of the verifier's x-vectors over honest p1 runs."""
    counts: Counter = Counter()
    for trial in range(trials):
        outcome = execute(program, run_type, HonestProver(), trial_rng(seed, trial))
        counts[outcome.transcript.x_bits] += 1
    return counts
