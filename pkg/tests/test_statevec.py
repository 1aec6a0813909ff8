import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from app.core.exceptions import CapacityExceededException, DegenerateStateException, ValidationException
from app.quantum.statevec import (
    AuxStateSpec,
    DensityMatrix,
    Gate,
    GateKind,
    QuantumRegister,
    State,
    apply_gate,
    apply_matrix,
    basis_state,
    discard_qubit,
    fidelity_up_to_phase,
    gate_matrix,
    measure_computational,
    measure_hadamard,
    postselect,
    prepare_state,
    reduced_density,
    swap_qubits,
    trace_distance,
    zero_state,
)

X, Z, H, P, T, CNOT = (Gate(kind) for kind in GateKind)
angles = st.floats(min_value=0, max_value=2 * np.pi, allow_nan=False)


def single_qubit(theta: float, phi: float) -> State:
    return State(1, np.array([np.cos(theta / 2), np.exp(1j * phi) * np.sin(theta / 2)]))


def test_qubit_zero_is_most_significant():
    state = basis_state([1, 0])
    assert state.amplitudes[2] == 1


def test_x_flips_the_addressed_qubit():
    state = apply_gate(zero_state(2), X, (1,))
    np.testing.assert_allclose(state.amplitudes, [0, 1, 0, 0])


def test_cnot_first_target_is_control():
    state = apply_gate(basis_state([1, 0]), CNOT, (0, 1))
    np.testing.assert_allclose(state.amplitudes, basis_state([1, 1]).amplitudes)
    state = apply_gate(basis_state([0, 1]), CNOT, (0, 1))
    np.testing.assert_allclose(state.amplitudes, basis_state([0, 1]).amplitudes)


@pytest.mark.parametrize(
    "specs", [[AuxStateSpec.ZERO, AuxStateSpec.ZERO], [AuxStateSpec.PLUS, AuxStateSpec.PLUS]]
)
def test_cnot_fixes_zero_zero_and_plus_plus(specs):
    state = prepare_state(specs)
    for targets in ((0, 1), (1, 0)):
        np.testing.assert_allclose(apply_gate(state, CNOT, targets).amplitudes, state.amplitudes, atol=1e-12)


def test_apply_matrix_matches_gate():
    state = basis_state([1, 0])
    via_matrix = apply_matrix(state, gate_matrix(CNOT), (0, 1))
    np.testing.assert_allclose(via_matrix.amplitudes, apply_gate(state, CNOT, (0, 1)).amplitudes)
    np.testing.assert_allclose(gate_matrix(T) @ gate_matrix(T), gate_matrix(P))

    with pytest.raises(ValidationException):
        apply_matrix(state, np.eye(2), (0, 1))


def test_prepared_states():
    np.testing.assert_allclose(AuxStateSpec.PLUS.vector(), np.array([1, 1]) / np.sqrt(2))
    t_plus = apply_gate(prepare_state([AuxStateSpec.PLUS]), T, (0,))
    assert fidelity_up_to_phase(t_plus, prepare_state([AuxStateSpec.T_PLUS])) == pytest.approx(1)


@pytest.mark.parametrize("z,p,t", [(0, 0, False), (1, 0, False), (0, 1, True), (1, 1, True)])
def test_phased_plus_matches_gates(z, p, t):
    state = prepare_state([AuxStateSpec.PLUS])
    if t:
        state = apply_gate(state, T, (0,))
    if p:
        state = apply_gate(state, P, (0,))
    if z:
        state = apply_gate(state, Z, (0,))
    expected = prepare_state([AuxStateSpec.phased_plus(z, p, t)])
    assert fidelity_up_to_phase(state, expected) == pytest.approx(1)


def test_unnormalized_state_is_rejected():
    with pytest.raises(ValidationException):
        State(1, np.array([1, 1]))


def test_wrong_length_is_rejected():
    with pytest.raises(ValidationException):
        State(2, np.array([1, 0]))


def test_capacity_cap():
    with pytest.raises(CapacityExceededException):
        zero_state(25)


def test_duplicate_targets_are_rejected():
    with pytest.raises(ValidationException):
        apply_gate(zero_state(2), CNOT, (1, 1))


def test_out_of_range_target():
    with pytest.raises(ValidationException):
        apply_gate(zero_state(1), X, (1,))


@given(theta=angles, phi=angles)
@hypothesis_settings(max_examples=50, deadline=None)
def test_gates_preserve_norm(theta, phi):
    state = single_qubit(theta, phi)
    for gate in (X, Z, H, P, T, Gate(GateKind.T, dagger=True)):
        assert np.linalg.norm(apply_gate(state, gate, (0,)).amplitudes) == pytest.approx(1)


@given(theta=angles, phi=angles)
@hypothesis_settings(max_examples=50, deadline=None)
def test_t_dagger_inverts_t(theta, phi):
    state = single_qubit(theta, phi)
    back = apply_gate(apply_gate(state, T, (0,)), Gate(GateKind.T, dagger=True), (0,))
    np.testing.assert_allclose(back.amplitudes, state.amplitudes, atol=1e-12)


def test_swap_qubits():
    state = swap_qubits(basis_state([1, 0, 0]), 0, 2)
    np.testing.assert_allclose(state.amplitudes, basis_state([0, 0, 1]).amplitudes)


def test_measurement_of_basis_state_is_deterministic(rng):
    for _ in range(20):
        bit, post = measure_computational(basis_state([0, 1]), 1, rng)
        assert bit == 1
        np.testing.assert_allclose(post.amplitudes, basis_state([0, 1]).amplitudes)


def test_measurement_statistics(rng):
    plus = prepare_state([AuxStateSpec.PLUS])
    ones = sum(measure_computational(plus, 0, rng)[0] for _ in range(4000))
    # 4000 fair coins: mean 2000, sigma ~ 32
    assert abs(ones - 2000) < 200


def test_measurement_collapses_entangled_partner(rng):
    bell = apply_gate(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ZERO]), CNOT, (0, 1))
    for _ in range(20):
        bit, post = measure_computational(bell, 0, rng)
        second, _ = measure_computational(post, 1, rng)
        assert second == bit


def test_hadamard_measurement(rng):
    minus = prepare_state([AuxStateSpec.MINUS])
    assert all(measure_hadamard(minus, 0, rng)[0] == 1 for _ in range(10))


def test_postselect_zero_probability_raises():
    with pytest.raises(DegenerateStateException):
        postselect(zero_state(1), 0, 1)


def test_postselect_probability():
    probability, post = postselect(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ONE]), 0, 0)
    assert probability == pytest.approx(0.5)
    np.testing.assert_allclose(post.amplitudes, basis_state([0, 1]).amplitudes)


def test_discard_collapsed_qubit():
    state = discard_qubit(prepare_state([AuxStateSpec.ONE, AuxStateSpec.PLUS]), 0)
    np.testing.assert_allclose(state.amplitudes, AuxStateSpec.PLUS.vector())


def test_discard_uncollapsed_qubit_raises():
    with pytest.raises(ValidationException):
        discard_qubit(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ZERO]), 0)


def test_reduced_density_of_bell_pair_is_maximally_mixed():
    bell = apply_gate(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ZERO]), CNOT, (0, 1))
    rho = reduced_density(bell, [1])
    np.testing.assert_allclose(rho.entries, np.eye(2) / 2, atol=1e-12)


def test_trace_distance():
    zero = DensityMatrix.pure(zero_state(1)).entries
    one = DensityMatrix.pure(basis_state([1])).entries
    assert trace_distance(zero, one) == pytest.approx(1)
    assert trace_distance(zero, zero) == pytest.approx(0)


def test_density_matrix_validation():
    with pytest.raises(ValidationException):
        DensityMatrix(2, np.array([[1, 0], [0, 1]]))
    with pytest.raises(ValidationException):
        DensityMatrix(2, np.array([[1.5, 0], [0, -0.5]]))


class TestQuantumRegister:
    def test_labels_follow_swaps(self):
        register = QuantumRegister(basis_state([1, 0]), ["data", "aux"])
        register.swap("data", "aux")
        assert register.labels == ("aux", "data")
        assert register.index("data") == 1

    def test_measure_and_discard_drops_label(self, rng):
        register = QuantumRegister(basis_state([1, 0]), ["a", "b"])
        assert register.measure("a", rng, discard=True) == 1
        assert register.labels == ("b",)
        assert register.num_qubits == 1

    def test_discarding_last_qubit_empties_register(self, rng):
        register = QuantumRegister(basis_state([1]), ["a"])
        assert register.measure("a", rng, discard=True) == 1
        assert register.labels == ()
        assert register.num_qubits == 0
        assert "a" not in register
        with pytest.raises(ValidationException):
            register.state
        with pytest.raises(ValidationException):
            register.measure("a", rng)

    def test_attach_after_emptying(self, rng):
        register = QuantumRegister(basis_state([0]), ["a"])
        register.measure("a", rng, discard=True)
        register.attach(["b"], basis_state([1]))
        assert register.labels == ("b",)
        assert register.measure("b", rng) == 1

    def test_attach_and_apply(self):
        register = QuantumRegister(zero_state(1), ["a"])
        register.attach(["b"], zero_state(1))
        register.apply(X, "b")
        np.testing.assert_allclose(register.state.amplitudes, basis_state([0, 1]).amplitudes)

    def test_duplicate_labels(self):
        register = QuantumRegister(zero_state(1), ["a"])
        with pytest.raises(ValidationException):
            register.attach(["a"], zero_state(1))

    def test_unknown_label(self):
        register = QuantumRegister(zero_state(1), ["a"])
        with pytest.raises(ValidationException):
            register.index("missing")

    def test_from_parts_and_density(self):
        bell = apply_gate(prepare_state([AuxStateSpec.PLUS, AuxStateSpec.ZERO]), CNOT, (0, 1))
        register = QuantumRegister.from_parts([(("p", "v:p"), bell), (("q",), zero_state(1))])
        assert register.labels == ("p", "v:p", "q")
        np.testing.assert_allclose(register.density(["p"]).entries, np.eye(2) / 2, atol=1e-12)
