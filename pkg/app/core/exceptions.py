# app/core/exceptions.py

from typing import Optional


class ValidationException(Exception):
    """Validation failed"""
    pass


class CircuitParseException(ValidationException):
    """Circuit text could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        location = source or "<circuit>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message}")


class AttackParseException(ValidationException):
    """Attack text could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None, source: Optional[str] = None):
        self.line = line
        self.source = source
        location = source or "<attack>"
        if line is not None:
            location = f"{location}:{line}"
        super().__init__(f"{location}: {message}")


class CapacityExceededException(Exception):
    """A qubit or register cap was exceeded"""
    pass


class ProtocolOrderException(Exception):
    """Prover object broke the message order of the interaction"""
    pass


class AlreadyFinalizedException(Exception):
    pass


class DegenerateStateException(Exception):
    """State norm vanished during a measurement (internal error)"""
    pass


class UnknownFormatException(Exception):
    pass


class NotFoundException(Exception):
    """Entity not found"""
    pass


class ProverAbortException(Exception):
    """Prover stopped before sending its output; the verifier rejects"""
    pass
