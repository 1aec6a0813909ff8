import numpy as np
import pytest

from app.quantum.circuit import compile_to_gadgets, parse_circuit

EMPTY = "qubits 1\n"
X_OUTPUT = "qubits 1\nX 0\n"
H_OUTPUT = "qubits 1\nH 0\n"
ONE_T = "qubits 1\nT 0\n"
TWO_T = "qubits 1\nT 0\nT 0\n"


def program_of(text: str):
    return compile_to_gadgets(parse_circuit(text))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def write_file(tmp_path):
    """Write ``text`` under tmp_path and return the path as a string."""

    def _write(name: str, text: str) -> str:
        path = tmp_path / name
        path.write_text(text, encoding="ascii")
        return str(path)

    return _write
