"""
Check Service
Built-in property suites run by ``verify check``: gate identities, T-gadget
correctness, bit-flip propagation, the Pauli twirl and prover-view
indistinguishability.
"""
import itertools
import logging
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy.stats import chi2_contingency

from app.core.config import settings
from app.core.rng import make_rng
from app.quantum.adversary import lemma_bitflip_propagation_check
from app.quantum.circuit import GadgetVariant, compile_to_gadgets, parse_circuit
from app.quantum.epr import ViewPolicy, message_marginals, prover_view_distance
from app.quantum.pauli import (
    PadKey,
    PauliSum,
    all_pauli_strings,
    clifford_key_update,
    pad_pauli,
    relabel_aux,
    twirl_residual,
)
from app.quantum.protocol import RUN_TYPES, TGadgetRandomness, honest_t_gadget, t_gadget_aux_state, verifier_t_gadget_update
from app.quantum.statevec import (
    AuxStateSpec,
    DensityMatrix,
    Gate,
    GateKind,
    State,
    apply_gate,
    discard_qubit,
    fidelity_up_to_phase,
    postselect,
    prepare_state,
)
from app.schemas.experiment import CriterionResult

logger = logging.getLogger(__name__)

BLINDNESS_SIGNIFICANCE = 0.01
BLINDNESS_CIRCUIT = "qubits 1\nT 0\nT 0\n"
VIEW_CIRCUITS = {"empty": "qubits 1\n", "one_gadget": "qubits 1\nT 0\n"}

X, Z, H, P, T, CNOT = (Gate(kind) for kind in (GateKind.X, GateKind.Z, GateKind.H, GateKind.P, GateKind.T, GateKind.CNOT))
I2 = np.eye(2, dtype=complex)


def equal_up_to_phase(a: np.ndarray, b: np.ndarray) -> bool:
    """Matrices or vectors equal up to a global phase."""
    a, b = np.asarray(a, dtype=complex).ravel(), np.asarray(b, dtype=complex).ravel()
    overlap = abs(np.vdot(a, b)) / (np.linalg.norm(a) * np.linalg.norm(b))
    return overlap >= 1 - settings.TOLERANCE


def product(*gates: Gate) -> np.ndarray:
    """Operator product, leftmost applied last."""
    matrix = np.eye(gates[0].matrix().shape[0], dtype=complex)
    for gate in gates:
        matrix = matrix @ gate.matrix()
    return matrix


def random_state(num_qubits: int, rng: np.random.Generator) -> State:
    vector = rng.normal(size=1 << num_qubits) + 1j * rng.normal(size=1 << num_qubits)
    return State(num_qubits, vector / np.linalg.norm(vector))


def random_density(num_qubits: int, rng: np.random.Generator) -> DensityMatrix:
    dim = 1 << num_qubits
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = a @ a.conj().T
    return DensityMatrix(dim, rho / np.trace(rho))


def encrypt(psi: State, a: int, b: int, qubit: int = 0) -> State:
    """X^a Z^b |ψ⟩ on one qubit."""
    if b:
        psi = apply_gate(psi, Z, (qubit,))
    if a:
        psi = apply_gate(psi, X, (qubit,))
    return psi


def x_teleportation_holds(states: int = 10, seed: int = 0) -> bool:
    """
    CNOT from a |+⟩ qubit onto X^a Z^b|ψ⟩, then measuring the data, leaves
    X^{a⊕c} Z^b|ψ⟩ on the |+⟩ qubit for both outcomes c.
    """
    rng = make_rng(seed)
    for _ in range(states):
        psi = random_state(1, rng)
        for a, b, c in itertools.product((0, 1), repeat=3):
            joint = State(2, np.kron(encrypt(psi, a, b).amplitudes, prepare_state([AuxStateSpec.PLUS]).amplitudes))
            probability, collapsed = postselect(apply_gate(joint, CNOT, (1, 0)), 0, c)
            if abs(probability - 0.5) > settings.TOLERANCE:
                return False
            teleported = discard_qubit(collapsed, 0)
            if fidelity_up_to_phase(teleported, encrypt(psi, a ^ c, b)) < 1 - settings.TOLERANCE:
                return False
    return True


# ==================== SUITES ====================

def identity_suite() -> Dict[str, bool]:
    """Commutation identities, X teleportation, the H expansion and the auxiliary relabelling."""
    x, z, h, p, t = (g.matrix() for g in (X, Z, H, P, T))
    cnot = CNOT.matrix()
    checks = {
        "T X = P X T": equal_up_to_phase(t @ x, p @ x @ t),
        "T Z = Z T": equal_up_to_phase(t @ z, z @ t),
        "P X = X Z P": equal_up_to_phase(p @ x, x @ z @ p),
        "P Z = Z P": equal_up_to_phase(p @ z, z @ p),
        "H X = Z H": equal_up_to_phase(h @ x, z @ h),
        "H Z = X H": equal_up_to_phase(h @ z, x @ h),
        "T T = P": equal_up_to_phase(t @ t, p),
        "P P = Z": equal_up_to_phase(p @ p, z),
        "HPHPHPH = H": equal_up_to_phase(product(H, P, H, P, H, P, H), h),
        "HHHH = I": equal_up_to_phase(product(H, H, H, H), I2),
        "CNOT (X x I) = (X x X) CNOT": equal_up_to_phase(cnot @ np.kron(x, I2), np.kron(x, x) @ cnot),
        "CNOT (I x Z) = (Z x Z) CNOT": equal_up_to_phase(cnot @ np.kron(I2, z), np.kron(z, z) @ cnot),
        "CNOT (I x X) = (I x X) CNOT": equal_up_to_phase(cnot @ np.kron(I2, x), np.kron(I2, x) @ cnot),
        "CNOT (Z x I) = (Z x I) CNOT": equal_up_to_phase(cnot @ np.kron(z, I2), np.kron(z, I2) @ cnot),
        "X Z = Z X": equal_up_to_phase(x @ z, z @ x),
        "P^(a xor b) = Z^ab P^(a+b)": all(
            equal_up_to_phase(
                np.linalg.matrix_power(p, a ^ b),
                np.linalg.matrix_power(z, a & b) @ np.linalg.matrix_power(p, a + b),
            )
            for a, b in itertools.product((0, 1), repeat=2)
        ),
    }
    checks["x teleportation"] = x_teleportation_holds()

    relabelled = True
    for d, e, y in itertools.product((0, 1), repeat=3):
        aux = apply_gate(prepare_state([AuxStateSpec.PLUS]), T, (0,))
        for gate, bit in ((P, y), (Z, e), (X, d)):
            if bit:
                aux = apply_gate(aux, gate, (0,))
        z_bit, p_bit = relabel_aux(d, e, y)
        expected = prepare_state([AuxStateSpec.phased_plus(z_bit, p_bit, t=True)])
        relabelled &= fidelity_up_to_phase(aux, expected) >= 1 - settings.TOLERANCE
    checks["auxiliary relabelling"] = relabelled

    key_updates = True
    for gate in (X, Z, H, P):
        for a, b in itertools.product((0, 1), repeat=2):
            (new,) = clifford_key_update(gate, [PadKey(a, b)], (0,))
            before = gate.matrix() @ pad_pauli([PadKey(a, b)]).to_matrix()
            after = pad_pauli([new]).to_matrix() @ gate.matrix()
            key_updates &= equal_up_to_phase(before, after)
    for bits in itertools.product((0, 1), repeat=4):
        keys = [PadKey(bits[0], bits[1]), PadKey(bits[2], bits[3])]
        new = clifford_key_update(CNOT, keys, (0, 1))
        key_updates &= equal_up_to_phase(cnot @ pad_pauli(keys).to_matrix(), pad_pauli(new).to_matrix() @ cnot)
    checks["clifford key updates"] = key_updates
    return checks


def t_gadget_suite(states_per_setting: int = 10, seed: int = 0) -> Dict[str, bool]:
    """Honest computation gadget over all 32 (a, b, d, e, y), random inputs."""
    rng = make_rng(seed)
    results: Dict[str, bool] = {}
    for a, b, d, e, y in itertools.product((0, 1), repeat=5):
        randomness = TGadgetRandomness(GadgetVariant.COMP, d=d, e=e, y=y)
        aux = t_gadget_aux_state(GadgetVariant.COMP, randomness)
        passed = True
        for _ in range(states_per_setting):
            psi = random_state(1, rng)
            joint = State(2, np.kron(encrypt(psi, a, b).amplitudes, aux.amplitudes))
            updates = {}

            def correction(c: int) -> int:
                updates[c] = verifier_t_gadget_update(GadgetVariant.COMP, PadKey(a, b), c, randomness)
                return updates[c].x

            c, output = honest_t_gadget(joint, 0, 1, correction, rng)
            pad = updates[c].pad
            expected = encrypt(apply_gate(psi, T, (0,)), pad.a, pad.b)
            passed &= fidelity_up_to_phase(output, expected) >= 1 - settings.TOLERANCE
        results[f"a={a} b={b} d={d} e={e} y={y}"] = passed
    return results


def bitflip_suite(seed: int = 0, random_states: int = 5) -> Dict[str, bool]:
    """Flip on the measured wire over all 2^5 randomness settings, for each test input."""
    rng = make_rng(seed)
    inputs = {
        "|0>": prepare_state([AuxStateSpec.ZERO]),
        "|1>": prepare_state([AuxStateSpec.ONE]),
        "|+>": prepare_state([AuxStateSpec.PLUS]),
    }
    for k in range(random_states):
        inputs[f"random{k}"] = random_state(1, rng)

    results: Dict[str, bool] = {}
    for name, psi in inputs.items():
        results[name] = all(
            lemma_bitflip_propagation_check(a, b, c, d, e, x, psi)
            for a, b, c, d, e, x in itertools.product((0, 1), repeat=6)
        )
    return results


def random_kraus(num_qubits: int, rng: np.random.Generator) -> PauliSum:
    terms = [
        (pauli, complex(rng.normal(), rng.normal()))
        for pauli in all_pauli_strings(num_qubits)
    ]
    norm = np.sqrt(sum(abs(alpha) ** 2 for _, alpha in terms))
    return PauliSum(tuple((pauli, alpha / norm) for pauli, alpha in terms))


def twirl_suite(operators: int = 100, seed: int = 0) -> Dict[str, float]:
    """Worst twirl residual over random one- and two-qubit Kraus operators."""
    rng = make_rng(seed)
    residuals: Dict[str, float] = {}
    for num_qubits in (1, 2):
        worst = 0.0
        for _ in range(operators // 2):
            kraus = random_kraus(num_qubits, rng)
            worst = max(worst, twirl_residual(kraus, random_density(num_qubits, rng)))
        residuals[f"{num_qubits}-qubit"] = worst
    return residuals


def view_suite() -> Dict[str, float]:
    """Prover-view distance between the two protocols, worst over message histories."""
    return {
        name: prover_view_distance(compile_to_gadgets(parse_circuit(text)), ViewPolicy.HONEST)
        for name, text in VIEW_CIRCUITS.items()
    }


def blindness_pvalue(trials: int = 10_000, seed: int = 0, circuit_text: str = BLINDNESS_CIRCUIT) -> float:
    """Chi-squared p-value of the x-vector counts across the three run types."""
    program = compile_to_gadgets(parse_circuit(circuit_text))
    counts = [message_marginals(program, run_type, trials, seed + index) for index, run_type in enumerate(RUN_TYPES)]
    keys = sorted(set().union(*counts))
    table = np.array([[row[key] for key in keys] for row in counts])
    if table.shape[1] < 2:
        return 1.0
    return float(chi2_contingency(table).pvalue)


# ==================== SERVICE ====================

class CheckService:
    """Runs the property suites and turns them into criterion results."""

    SUITES = ("identities", "tgadget", "bitflip", "twirl", "view")

    def __init__(self, seed: int = 0, blindness_trials: int = 10_000):
        self.seed = seed
        self.blindness_trials = blindness_trials

    def run(self, suites: Optional[Sequence[str]] = None) -> List[CriterionResult]:
        """
        Run the selected suites (all of them by default).

        Raises:
            ValueError: unknown suite name
        """
        selected = list(suites) if suites else list(self.SUITES)
        unknown = set(selected) - set(self.SUITES)
        if unknown:
            raise ValueError(f"Unknown check suite(s): {', '.join(sorted(unknown))}")

        runners: Dict[str, Callable[[], List[CriterionResult]]] = {
            "identities": self._identities,
            "tgadget": self._tgadget,
            "bitflip": self._bitflip,
            "twirl": self._twirl,
            "view": self._view,
        }
        results: List[CriterionResult] = []
        for name in selected:
            started = time.perf_counter()
            suite_results = runners[name]()
            logger.info(
                f"Check suite {name}: {sum(r.passed for r in suite_results)}/{len(suite_results)} "
                f"passed in {time.perf_counter() - started:.2f}s"
            )
            results.extend(suite_results)
        return results

    @staticmethod
    def _from_flags(suite: str, flags: Dict[str, bool]) -> List[CriterionResult]:
        failed = [name for name, ok in flags.items() if not ok]
        detail = f"{len(flags) - len(failed)}/{len(flags)} passed"
        if failed:
            detail += "; failed: " + ", ".join(failed[:5])
        return [CriterionResult(name=suite, passed=not failed, detail=detail)]

    def _identities(self) -> List[CriterionResult]:
        return self._from_flags("identities", identity_suite())

    def _tgadget(self) -> List[CriterionResult]:
        return self._from_flags("tgadget", t_gadget_suite(seed=self.seed))

    def _bitflip(self) -> List[CriterionResult]:
        return self._from_flags("bitflip", bitflip_suite(seed=self.seed))

    def _twirl(self) -> List[CriterionResult]:
        residuals = twirl_suite(seed=self.seed)
        worst = max(residuals.values())
        return [CriterionResult(
            name="twirl",
            passed=worst <= settings.TOLERANCE,
            detail=", ".join(f"{name} residual {value:.2e}" for name, value in residuals.items()),
        )]

    def _view(self) -> List[CriterionResult]:
        distances = view_suite()
        pvalue = blindness_pvalue(self.blindness_trials, self.seed)
        return [
            CriterionResult(
                name="view_distance",
                passed=max(distances.values()) <= settings.TOLERANCE,
                detail=", ".join(f"{name} {value:.2e}" for name, value in distances.items()),
            ),
            CriterionResult(
                name="blindness",
                passed=pvalue >= BLINDNESS_SIGNIFICANCE,
                detail=f"chi-squared p-value {pvalue:.4f} over {self.blindness_trials} trials per run type",
            ),
        ]
