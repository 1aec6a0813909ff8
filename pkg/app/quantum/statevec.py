"""
Statevector Simulation - dense amplitudes for small quantum registers

Qubit 0 is the most significant bit of the amplitude index. Every function
returns a new State; nothing here mutates its inputs. ``QuantumRegister``
is the one mutable wrapper, used by the protocol engines to address qubits
by stable labels while qubits are appended and discarded.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from functools import reduce
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import (
    CapacityExceededException,
    DegenerateStateException,
    ValidationException,
)

logger = logging.getLogger(__name__)

SQRT_HALF = 1 / np.sqrt(2)
T_PHASE = np.exp(1j * np.pi / 4)


def _check_capacity(num_qubits: int) -> None:
    if num_qubits > settings.MAX_QUBITS:
        raise CapacityExceededException(
            f"{num_qubits} qubits requested, dense simulation is capped at "
            f"{settings.MAX_QUBITS} (MAX_QUBITS)"
        )


# ==================== TYPES ====================

class GateKind(str, Enum):
    X = "X"
    Z = "Z"
    H = "H"
    P = "P"
    T = "T"
    CNOT = "CNOT"


_MATRICES: Dict[GateKind, np.ndarray] = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.H: np.array([[1, 1], [1, -1]], dtype=complex) * SQRT_HALF,
    GateKind.P: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, T_PHASE]], dtype=complex),
    GateKind.CNOT: np.array(
        [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
    ),
}


@dataclass(frozen=True)
class Gate:
    """A gate from {X, Z, H, P, T, CNOT}; ``dagger`` only matters for P and T."""

    kind: GateKind
    dagger: bool = False

    @property
    def arity(self) -> int:
        return 2 if self.kind is GateKind.CNOT else 1

    def matrix(self) -> np.ndarray:
        base = _MATRICES[self.kind]
        return base.conj().T if self.dagger else base

    def __str__(self) -> str:
        return f"{self.kind.value}{'†' if self.dagger else ''}"


class AuxStateSpec(str, Enum):
    """The single-qubit states the verifier can prepare."""

    ZERO = "|0>"
    ONE = "|1>"
    PLUS = "|+>"
    MINUS = "|->"
    P_PLUS = "P|+>"
    P_MINUS = "P|->"
    T_PLUS = "T|+>"
    T_MINUS = "T|->"
    PT_PLUS = "PT|+>"
    PT_MINUS = "PT|->"

    @classmethod
    def basis(cls, bit: int) -> "AuxStateSpec":
        return cls.ONE if bit else cls.ZERO

    @classmethod
    def phased_plus(cls, z: int, p: int, t: bool = False) -> "AuxStateSpec":
        """Z^z P^p [T] |+⟩ as a member of the set (Z and P commute with T)."""
        table = {
            (False, 0): (cls.PLUS, cls.MINUS),
            (False, 1): (cls.P_PLUS, cls.P_MINUS),
            (True, 0): (cls.T_PLUS, cls.T_MINUS),
            (True, 1): (cls.PT_PLUS, cls.PT_MINUS),
        }
        return table[(bool(t), p & 1)][z & 1]

    def vector(self) -> np.ndarray:
        return _AUX_VECTORS[self]


def _phased(phase: complex) -> np.ndarray:
    return np.array([SQRT_HALF, SQRT_HALF * phase], dtype=complex)


_AUX_VECTORS: Dict[AuxStateSpec, np.ndarray] = {
    AuxStateSpec.ZERO: np.array([1, 0], dtype=complex),
    AuxStateSpec.ONE: np.array([0, 1], dtype=complex),
    AuxStateSpec.PLUS: _phased(1),
    AuxStateSpec.MINUS: _phased(-1),
    AuxStateSpec.P_PLUS: _phased(1j),
    AuxStateSpec.P_MINUS: _phased(-1j),
    AuxStateSpec.T_PLUS: _phased(T_PHASE),
    AuxStateSpec.T_MINUS: _phased(-T_PHASE),
    AuxStateSpec.PT_PLUS: _phased(1j * T_PHASE),
    AuxStateSpec.PT_MINUS: _phased(-1j * T_PHASE),
}


@dataclass(frozen=True, eq=False)
class State:
    """Normalized dense state over ``num_qubits`` qubits."""

    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValidationException("A state needs at least one qubit")
        _check_capacity(self.num_qubits)
        amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if amplitudes.shape != (1 << self.num_qubits,):
            raise ValidationException(
                f"Expected {1 << self.num_qubits} amplitudes, got shape {amplitudes.shape}"
            )
        norm = np.linalg.norm(amplitudes)
        if abs(norm - 1.0) > settings.TOLERANCE:
            raise ValidationException(f"State is not normalized (norm {norm:.12f})")
        object.__setattr__(self, "amplitudes", amplitudes)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape((2,) * self.num_qubits)


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite matrix."""

    dim: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.shape != (self.dim, self.dim):
            raise ValidationException(f"Expected a {self.dim}x{self.dim} matrix")
        tolerance = settings.TOLERANCE
        if np.max(np.abs(entries - entries.conj().T)) > tolerance:
            raise ValidationException("Density matrix is not Hermitian")
        if abs(np.trace(entries) - 1) > tolerance:
            raise ValidationException("Density matrix trace is not 1")
        if np.min(np.linalg.eigvalsh(entries)) < -tolerance:
            raise ValidationException("Density matrix has a negative eigenvalue")
        object.__setattr__(self, "entries", entries)

    @property
    def num_qubits(self) -> int:
        return self.dim.bit_length() - 1

    @classmethod
    def pure(cls, state: State) -> "DensityMatrix":
        vector = state.amplitudes
        return cls(vector.size, np.outer(vector, vector.conj()))

    @classmethod
    def maximally_mixed(cls, num_qubits: int) -> "DensityMatrix":
        dim = 1 << num_qubits
        return cls(dim, np.eye(dim, dtype=complex) / dim)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of ``rho - sigma`` (both Hermitian)."""
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(rho - sigma))))


# ==================== PREPARATION ====================

def prepare_state(specs: Sequence[AuxStateSpec]) -> State:
    """Tensor product, in order, of the listed single-qubit states."""
    if not specs:
        raise ValidationException("prepare_state needs at least one qubit")
    _check_capacity(len(specs))
    vector = reduce(np.kron, (AuxStateSpec(spec).vector() for spec in specs))
    return State(len(specs), vector)


def basis_state(bits: Sequence[int]) -> State:
    return prepare_state([AuxStateSpec.basis(bit) for bit in bits])


def zero_state(num_qubits: int) -> State:
    _check_capacity(num_qubits)
    vector = np.zeros(1 << num_qubits, dtype=complex)
    vector[0] = 1
    return State(num_qubits, vector)


def append_state(state: State, other: State) -> State:
    """Tensor ``other`` after the qubits of ``state``."""
    _check_capacity(state.num_qubits + other.num_qubits)
    return State(
        state.num_qubits + other.num_qubits, np.kron(state.amplitudes, other.amplitudes)
    )


# ==================== GATES ====================

def _validate_targets(num_qubits: int, targets: Sequence[int]) -> Tuple[int, ...]:
    targets = tuple(int(q) for q in targets)
    for qubit in targets:
        if not 0 <= qubit < num_qubits:
            raise ValidationException(
                f"Qubit index {qubit} out of range for {num_qubits} qubits"
            )
    if len(set(targets)) != len(targets):
        raise ValidationException(f"Duplicate target indices {targets}")
    return targets


def _apply_tensor(psi: np.ndarray, matrix: np.ndarray, targets: Tuple[int, ...]) -> np.ndarray:
    k = len(targets)
    operator = matrix.reshape((2,) * (2 * k))
    psi = np.tensordot(operator, psi, axes=(list(range(k, 2 * k)), list(targets)))
    return np.moveaxis(psi, list(range(k)), list(targets))


def gate_matrix(gate: Gate) -> np.ndarray:
    return gate.matrix()


def apply_matrix(state: State, matrix: np.ndarray, targets: Sequence[int]) -> State:
    """Apply a k-qubit unitary; ``targets[0]`` is the matrix's most significant qubit."""
    targets = _validate_targets(state.num_qubits, targets)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (1 << len(targets), 1 << len(targets)):
        raise ValidationException(
            f"Matrix of shape {matrix.shape} does not act on {len(targets)} qubits"
        )
    psi = _apply_tensor(state.tensor(), matrix, targets)
    return State(state.num_qubits, np.ascontiguousarray(psi).reshape(-1))


def apply_gate(state: State, gate: Gate, targets: Sequence[int]) -> State:
    if len(targets) != gate.arity:
        raise ValidationException(
            f"{gate} takes {gate.arity} target(s), got {len(targets)}"
        )
    return apply_matrix(state, gate.matrix(), targets)


def swap_qubits(state: State, i: int, j: int) -> State:
    _validate_targets(state.num_qubits, (i, j))
    psi = np.swapaxes(state.tensor(), i, j)
    return State(state.num_qubits, np.ascontiguousarray(psi).reshape(-1))


# ==================== MEASUREMENT ====================

def _project(psi: np.ndarray, qubit: int, bit: int) -> np.ndarray:
    index = [slice(None)] * psi.ndim
    index[qubit] = 1 - bit
    projected = psi.copy()
    projected[tuple(index)] = 0
    return projected


def probability_of_zero(state: State, qubit: int) -> float:
    _validate_targets(state.num_qubits, (qubit,))
    return float(np.sum(np.abs(np.take(state.tensor(), 0, axis=qubit)) ** 2))


def measure_computational(
    state: State, qubit: int, rng: np.random.Generator
) -> Tuple[int, State]:
    """Born-rule measurement; the qubit stays in the register, collapsed."""
    p0 = probability_of_zero(state, qubit)
    if p0 < -settings.TOLERANCE or p0 > 1 + settings.TOLERANCE:
        raise DegenerateStateException(f"Invalid outcome probability {p0}")
    bit = 0 if rng.random() < p0 else 1
    projected = _project(state.tensor(), qubit, bit).reshape(-1)
    norm = np.linalg.norm(projected)
    if norm < settings.TOLERANCE:
        raise DegenerateStateException(
            f"Post-measurement norm vanished on qubit {qubit} (outcome {bit})"
        )
    return bit, State(state.num_qubits, projected / norm)


def measure_hadamard(
    state: State, qubit: int, rng: np.random.Generator
) -> Tuple[int, State]:
    """Measure in the {|+⟩, |−⟩} basis; the post-state holds |0⟩ or |1⟩."""
    return measure_computational(apply_gate(state, Gate(GateKind.H), (qubit,)), qubit, rng)


def postselect(state: State, qubit: int, bit: int) -> Tuple[float, State]:
    """Project ``qubit`` onto |bit⟩; returns the outcome probability and renormalized state."""
    _validate_targets(state.num_qubits, (qubit,))
    projected = _project(state.tensor(), qubit, bit).reshape(-1)
    norm = np.linalg.norm(projected)
    if norm < settings.TOLERANCE:
        raise DegenerateStateException(f"Outcome {bit} on qubit {qubit} has probability 0")
    return float(norm ** 2), State(state.num_qubits, projected / norm)


def discard_qubit(state: State, qubit: int) -> State:
    """Drop a qubit that is in a computational basis state."""
    if state.num_qubits == 1:
        raise ValidationException("Cannot discard the last qubit of a register")
    psi = state.tensor()
    p0 = probability_of_zero(state, qubit)
    if settings.TOLERANCE < p0 < 1 - settings.TOLERANCE:
        raise ValidationException(f"Qubit {qubit} is not collapsed (P(0) = {p0:.6f})")
    reduced = np.take(psi, 0 if p0 >= 0.5 else 1, axis=qubit).reshape(-1)
    return State(state.num_qubits - 1, reduced / np.linalg.norm(reduced))


# ==================== COMPARISON ====================

def fidelity_up_to_phase(a: State, b: State) -> float:
    """|⟨a|b⟩|, equal to 1 iff the states agree up to a global phase."""
    if a.num_qubits != b.num_qubits:
        raise ValidationException(
            f"Cannot compare states on {a.num_qubits} and {b.num_qubits} qubits"
        )
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes))))


def reduced_density(state: State, keep: Sequence[int]) -> DensityMatrix:
    """Partial trace over every qubit not in ``keep`` (kept in the given order)."""
    if not keep:
        raise ValidationException("reduced_density needs at least one qubit to keep")
    keep = _validate_targets(state.num_qubits, keep)
    psi = np.moveaxis(state.tensor(), list(keep), list(range(len(keep))))
    matrix = psi.reshape(1 << len(keep), -1)
    rho = matrix @ matrix.conj().T
    return DensityMatrix(rho.shape[0], (rho + rho.conj().T) / 2)


# ==================== LABELLED REGISTER ====================

class QuantumRegister:
    """
    Mutable register whose qubits are addressed by label.

    Labels stay attached to their qubit when other qubits are discarded;
    ``swap`` exchanges the contents of two registers by exchanging labels.
    """

    def __init__(self, state: State, labels: Sequence[str]):
        if len(labels) != state.num_qubits:
            raise ValidationException(
                f"{len(labels)} labels for a {state.num_qubits}-qubit state"
            )
        if len(set(labels)) != len(labels):
            raise ValidationException(f"Duplicate register labels {list(labels)}")
        self._state: Optional[State] = state
        self._labels: List[str] = list(labels)

    @classmethod
    def from_parts(cls, parts: Iterable[Tuple[Sequence[str], State]]) -> "QuantumRegister":
        register: Optional[QuantumRegister] = None
        for labels, state in parts:
            if register is None:
                register = cls(state, labels)
            else:
                register.attach(labels, state)
        if register is None:
            raise ValidationException("A register needs at least one part")
        return register

    @property
    def state(self) -> State:
        if self._state is None:
            raise ValidationException("Every qubit of this register was discarded")
        return self._state

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self._labels)

    @property
    def num_qubits(self) -> int:
        return len(self._labels)

    def __contains__(self, label: str) -> bool:
        return label in self._labels

    def index(self, label: str) -> int:
        try:
            return self._labels.index(label)
        except ValueError:
            raise ValidationException(f"No register labelled '{label}'") from None

    def indices(self, labels: Iterable[str]) -> List[int]:
        return [self.index(label) for label in labels]

    def replace(self, state: State) -> None:
        if state.num_qubits != self.num_qubits:
            raise ValidationException("Replacement state has a different qubit count")
        self._state = state

    def attach(self, labels: Sequence[str], state: State) -> None:
        for label in labels:
            if label in self._labels:
                raise ValidationException(f"Register '{label}' already exists")
        if len(labels) != state.num_qubits:
            raise ValidationException(f"{len(labels)} labels for {state.num_qubits} qubits")
        self._state = state if self._state is None else append_state(self._state, state)
        self._labels.extend(labels)

    def apply(self, gate: Gate, *labels: str) -> None:
        self._state = apply_gate(self.state, gate, self.indices(labels))

    def apply_matrix(self, matrix: np.ndarray, *labels: str) -> None:
        self._state = apply_matrix(self.state, matrix, self.indices(labels))

    def swap(self, first: str, second: str) -> None:
        i, j = self.index(first), self.index(second)
        self._labels[i], self._labels[j] = second, first

    def measure(self, label: str, rng: np.random.Generator, discard: bool = False) -> int:
        qubit = self.index(label)
        bit, self._state = measure_computational(self.state, qubit, rng)
        if discard:
            self._drop(qubit)
        return bit

    def measure_hadamard(
        self, label: str, rng: np.random.Generator, discard: bool = False
    ) -> int:
        self.apply(Gate(GateKind.H), label)
        return self.measure(label, rng, discard=discard)

    def _drop(self, qubit: int) -> None:
        # the last qubit leaves an empty register
        self._state = None if self.num_qubits == 1 else discard_qubit(self.state, qubit)
        del self._labels[qubit]

    def density(self, labels: Sequence[str]) -> DensityMatrix:
        return reduced_density(self.state, self.indices(labels))
