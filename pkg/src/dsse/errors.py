"""Exception types shared across the package."""


class ParameterError(ValueError):
    """An argument violates a documented precondition."""


class ProtocolError(RuntimeError):
    """A two-phase protocol step was driven out of order or with mismatched data."""


class CapacityError(RuntimeError):
    """A configured size bound (pair count, user slots) would be exceeded."""


class AuthenticationError(RuntimeError):
    """Ciphertext failed integrity verification."""


class TxRejected(RuntimeError):
    """A transaction failed an admission rule and was not queued."""


class ContractError(RuntimeError):
    """Deterministic rejection inside the contract state machine; state unchanged."""


class DivergenceError(RuntimeError):
    """Replica state digests disagree; carries a per-component diff report."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


class LedgerHalted(RuntimeError):
    """The ledger refused further work after a detected divergence."""


class OracleMismatch(AssertionError):
    """A decoded search result differs from the plaintext reference."""
