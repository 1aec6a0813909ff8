"""
Pauli Algebra - Pauli strings, one-time-pad keys and Clifford key updates

A ``PauliString`` carries its letters and a global phase i^k. A
``PauliSum`` is a complex combination of distinct strings (one Kraus
operator written in the Pauli basis). ``PadKey`` is the verifier's
classical record X^a Z^b of the pad on one wire.
"""
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Dict, Iterator, List, Mapping, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.exceptions import ValidationException
from app.quantum.statevec import DensityMatrix, Gate, GateKind, State

logger = logging.getLogger(__name__)

LETTERS = "IXYZ"
MEASURED_LETTERS = frozenset("IZ")

_SINGLE: Dict[str, np.ndarray] = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (left, right) -> (letter, exponent k of the phase i^k)
_PRODUCT: Dict[Tuple[str, str], Tuple[str, int]] = {}
for _left, _right in itertools.product(LETTERS, repeat=2):
    if _left == "I":
        _PRODUCT[(_left, _right)] = (_right, 0)
    elif _right == "I":
        _PRODUCT[(_left, _right)] = (_left, 0)
    elif _left == _right:
        _PRODUCT[(_left, _right)] = ("I", 0)
    else:
        _third = ({"X", "Y", "Z"} - {_left, _right}).pop()
        # XY = iZ, YZ = iX, ZX = iY; reversed order gives -i
        _cyclic = (_left, _right) in {("X", "Y"), ("Y", "Z"), ("Z", "X")}
        _PRODUCT[(_left, _right)] = (_third, 1 if _cyclic else 3)


# ==================== PAULI STRINGS ====================

@dataclass(frozen=True)
class PauliString:
    """i^phase times a tensor product of single-qubit Paulis."""

    letters: str
    phase: int = 0

    def __post_init__(self):
        if not self.letters:
            raise ValidationException("A Pauli string needs at least one letter")
        bad = set(self.letters) - set(LETTERS)
        if bad:
            raise ValidationException(f"Invalid Pauli letters {sorted(bad)} in '{self.letters}'")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def parse(cls, text: str) -> "PauliString":
        """Parse the dotted form, e.g. ``X.I.Z``."""
        parts = text.strip().split(".")
        if any(len(part) != 1 for part in parts):
            raise ValidationException(f"Malformed Pauli string '{text}'")
        return cls("".join(parts).upper())

    @classmethod
    def identity(cls, m: int) -> "PauliString":
        return cls("I" * m)

    @classmethod
    def single(cls, m: int, position: int, letter: str) -> "PauliString":
        letters = ["I"] * m
        letters[position] = letter
        return cls("".join(letters))

    def __len__(self) -> int:
        return len(self.letters)

    def __str__(self) -> str:
        return ".".join(self.letters)

    def __mul__(self, other: "PauliString") -> "PauliString":
        return compose(self, other)

    @property
    def coefficient(self) -> complex:
        return 1j ** self.phase

    @property
    def weight(self) -> int:
        return sum(letter != "I" for letter in self.letters)

    def is_identity(self) -> bool:
        return self.weight == 0

    def without_phase(self) -> "PauliString":
        return replace(self, phase=0)

    def dagger(self) -> "PauliString":
        return replace(self, phase=-self.phase)

    def restrict(self, positions: Sequence[int]) -> "PauliString":
        return PauliString("".join(self.letters[i] for i in positions), self.phase)

    def to_matrix(self) -> np.ndarray:
        matrix = np.array([[1]], dtype=complex)
        for letter in self.letters:
            matrix = np.kron(matrix, _SINGLE[letter])
        return self.coefficient * matrix


def compose(p: PauliString, q: PauliString) -> PauliString:
    """Operator product p·q with its global phase."""
    if len(p) != len(q):
        raise ValidationException(f"Cannot compose Pauli strings of length {len(p)} and {len(q)}")
    letters = []
    phase = p.phase + q.phase
    for left, right in zip(p.letters, q.letters):
        letter, k = _PRODUCT[(left, right)]
        letters.append(letter)
        phase += k
    return PauliString("".join(letters), phase)


def all_pauli_strings(m: int) -> Iterator[PauliString]:
    for letters in itertools.product(LETTERS, repeat=m):
        yield PauliString("".join(letters))


def apply_pauli(state: State, pauli: PauliString, qubits: Sequence[int]) -> State:
    """Apply ``pauli`` (letter k on ``qubits[k]``) including its phase."""
    return State(state.num_qubits, _pauli_action(state, pauli, qubits).reshape(-1))


def _pauli_action(state: State, pauli: PauliString, qubits: Sequence[int]) -> np.ndarray:
    if len(pauli) != len(qubits):
        raise ValidationException(
            f"Pauli string of length {len(pauli)} applied to {len(qubits)} qubits"
        )
    psi = state.tensor().copy()
    factor = pauli.coefficient
    for letter, qubit in zip(pauli.letters, qubits):
        if letter in "ZY":
            index = [slice(None)] * psi.ndim
            index[qubit] = 1
            psi[tuple(index)] *= -1
        if letter in "XY":
            psi = np.flip(psi, axis=qubit)
        if letter == "Y":
            # Y = iXZ
            factor *= 1j
    return factor * psi


# ==================== PAULI SUMS ====================

@dataclass(frozen=True)
class PauliSum:
    """Σ α_Q Q over distinct phase-free Pauli strings of equal length."""

    terms: Tuple[Tuple[PauliString, complex], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValidationException("A Pauli sum needs at least one term")
        normalized = []
        seen = set()
        length = len(self.terms[0][0])
        for pauli, coefficient in self.terms:
            if len(pauli) != length:
                raise ValidationException("Pauli strings in one sum must share a length")
            if pauli.letters in seen:
                raise ValidationException(f"Pauli string {pauli} appears twice")
            seen.add(pauli.letters)
            normalized.append((pauli.without_phase(), complex(coefficient) * pauli.coefficient))
        object.__setattr__(self, "terms", tuple(normalized))

    @classmethod
    def of(cls, pairs: Sequence[Tuple[PauliString, complex]]) -> "PauliSum":
        return cls(tuple(pairs))

    @property
    def num_qubits(self) -> int:
        return len(self.terms[0][0])

    @property
    def is_single_term(self) -> bool:
        return len(self.terms) == 1

    def weights(self) -> Dict[str, float]:
        return {pauli.letters: float(abs(alpha) ** 2) for pauli, alpha in self.terms}

    def norm_squared(self) -> float:
        return float(sum(abs(alpha) ** 2 for _, alpha in self.terms))

    def to_matrix(self) -> np.ndarray:
        return sum(alpha * pauli.to_matrix() for pauli, alpha in self.terms)

    def restrict(self, positions: Sequence[int]) -> "PauliSum":
        """Drop the registers outside ``positions``; they must carry I in every term."""
        dropped = [i for i in range(self.num_qubits) if i not in set(positions)]
        for pauli, _ in self.terms:
            if any(pauli.letters[i] != "I" for i in dropped):
                raise ValidationException(
                    f"Term {pauli} acts on a register missing from this layout"
                )
        return PauliSum(tuple((pauli.restrict(positions), alpha) for pauli, alpha in self.terms))

    def apply(self, state: State, qubits: Sequence[int]) -> np.ndarray:
        """Unnormalized amplitudes of (Σ α_Q Q)|state⟩."""
        result = np.zeros(state.tensor().shape, dtype=complex)
        for pauli, alpha in self.terms:
            result += alpha * _pauli_action(state, pauli, qubits)
        return result.reshape(-1)


def gram_expansion(operators: Sequence[PauliSum]) -> Dict[str, complex]:
    """Σ_k E_k† E_k expanded symbolically in the Pauli basis."""
    total: Dict[str, complex] = defaultdict(complex)
    for operator in operators:
        for (left, alpha), (right, beta) in itertools.product(operator.terms, repeat=2):
            product = compose(left.dagger(), right)
            total[product.letters] += np.conj(alpha) * beta * product.coefficient
    return dict(total)


def is_unitary_combination(operator: PauliSum) -> bool:
    """True if Σ α_Q Q is unitary, checked through Pauli products (any length)."""
    return _is_identity_expansion(gram_expansion([operator]), operator.num_qubits)


def _is_identity_expansion(expansion: Mapping[str, complex], m: int) -> bool:
    tolerance = settings.TOLERANCE
    for letters, value in expansion.items():
        target = 1.0 if letters == "I" * m else 0.0
        if abs(value - target) > tolerance:
            return False
    return "I" * m in expansion


def is_trace_preserving(operators: Sequence[PauliSum]) -> bool:
    return _is_identity_expansion(gram_expansion(operators), operators[0].num_qubits)


def twirl_residual(kraus: PauliSum, state: DensityMatrix) -> float:
    """
    Max-entry deviation of the Pauli-twirled map from Σ |α_Q|² Q ρ Q†.

    The twirl averages P† E P ρ P† E† P over every Pauli P on the block.
    """
    m = kraus.num_qubits
    if state.num_qubits != m:
        raise ValidationException(
            f"Input state on {state.num_qubits} qubits for a {m}-qubit operator"
        )
    operator = kraus.to_matrix()
    rho = state.entries
    twirled = np.zeros_like(rho)
    paulis = [pauli.to_matrix() for pauli in all_pauli_strings(m)]
    for pauli in paulis:
        conjugated = pauli.conj().T @ operator @ pauli
        twirled += conjugated @ rho @ conjugated.conj().T
    twirled /= len(paulis)
    expected = sum(
        abs(alpha) ** 2 * (pauli.to_matrix() @ rho @ pauli.to_matrix().conj().T)
        for pauli, alpha in kraus.terms
    )
    return float(np.max(np.abs(twirled - expected)))


# ==================== PAD KEYS ====================

@dataclass(frozen=True)
class PadKey:
    """One wire's pad X^a Z^b."""

    a: int = 0
    b: int = 0

    def __post_init__(self):
        if self.a not in (0, 1) or self.b not in (0, 1):
            raise ValidationException(f"Pad key bits must be 0 or 1, got ({self.a}, {self.b})")

    def as_pauli(self) -> PauliString:
        letter = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}[(self.a, self.b)]
        # XZ = -iY
        return PauliString(letter, 3 if letter == "Y" else 0)


PadKeys = Tuple[PadKey, ...]


def pad_pauli(keys: Sequence[PadKey]) -> PauliString:
    letters, phase = "", 0
    for key in keys:
        pauli = key.as_pauli()
        letters += pauli.letters
        phase += pauli.phase
    return PauliString(letters, phase)


def clifford_key_update(gate: Gate, keys: Sequence[PadKey], targets: Sequence[int]) -> PadKeys:
    """
    Keys k′ with G · X^a Z^b = X^{a′} Z^{b′} · G up to a global phase.

    Raises:
        ValidationException: for T gates or bad targets
    """
    if gate.kind is GateKind.T:
        raise ValidationException("T gates are handled by the T-gadget, not a key update")
    if len(targets) != gate.arity:
        raise ValidationException(f"{gate} takes {gate.arity} target(s), got {len(targets)}")
    for target in targets:
        if not 0 <= target < len(keys):
            raise ValidationException(f"Wire {target} out of range for {len(keys)} keys")
    keys = list(keys)
    first = keys[targets[0]]

    if gate.kind is GateKind.X:
        keys[targets[0]] = PadKey(first.a ^ 1, first.b)
    elif gate.kind is GateKind.Z:
        keys[targets[0]] = PadKey(first.a, first.b ^ 1)
    elif gate.kind is GateKind.H:
        keys[targets[0]] = PadKey(first.b, first.a)
    elif gate.kind is GateKind.P:
        keys[targets[0]] = PadKey(first.a, first.a ^ first.b)
    else:
        control, target = targets
        if control == target:
            raise ValidationException("CNOT needs two distinct wires")
        c, t = keys[control], keys[target]
        keys[control] = PadKey(c.a, c.b ^ t.b)
        keys[target] = PadKey(t.a ^ c.a, t.b)
    return tuple(keys)


def encryption_average(rho: DensityMatrix) -> DensityMatrix:
    """Average of X^a Z^b ρ Z^b X^a over every key on every qubit."""
    m = rho.num_qubits
    total = np.zeros_like(rho.entries)
    for bits in itertools.product((0, 1), repeat=2 * m):
        keys = [PadKey(bits[2 * i], bits[2 * i + 1]) for i in range(m)]
        pauli = pad_pauli(keys).to_matrix()
        total += pauli @ rho.entries @ pauli.conj().T
    return DensityMatrix(rho.dim, total / (4 ** m))


def relabel_aux(d: int, e: int, y: int) -> Tuple[int, int]:
    """X^d Z^e P^y T|+⟩ = Z^{e⊕d} P^{y⊕d} T|+⟩ up to phase."""
    return e ^ d, y ^ d


# ==================== ATTACKED REGISTERS ====================

@dataclass(frozen=True)
class ProtocolDims:
    """Register counts of an attack: t gadget pairs then n data registers."""

    n: int
    t: int

    def __post_init__(self):
        if self.n < 1 or self.t < 0:
            raise ValidationException(f"Invalid dimensions n={self.n}, t={self.t}")

    @property
    def m(self) -> int:
        return 2 * self.t + self.n

    def measured_registers(self) -> List[int]:
        """The measured auxiliary register of each gadget, then the output."""
        return [2 * g for g in range(self.t)] + [self.m - 1]

    def classical_registers(self) -> List[int]:
        return [2 * g + 1 for g in range(self.t)]

    def data_registers(self) -> List[int]:
        return list(range(2 * self.t, self.m))


def classify_benign(q: PauliString, dims: ProtocolDims) -> bool:
    """Benign iff every measured register carries I or Z."""
    if len(q) != dims.m:
        raise ValidationException(f"Pauli string of length {len(q)} for m = {dims.m}")
    return all(q.letters[i] in MEASURED_LETTERS for i in dims.measured_registers())


def benign_count(dims: ProtocolDims) -> int:
    return 2 ** dims.t * 4 ** dims.t * 4 ** (dims.n - 1) * 2


def commutes(p: PauliString, q: PauliString) -> bool:
    if len(p) != len(q):
        raise ValidationException("Cannot compare Pauli strings of different lengths")
    clashes = sum(
        left != "I" and right != "I" and left != right
        for left, right in zip(p.letters, q.letters)
    )
    return clashes % 2 == 0
