"""Keyword search over an encrypted inverted index enforced by a simulated
replicated ledger, with gas-metered (public) and parameter-bounded (private)
deployment modes, shared-user access control and forward-private updates."""

from .crypto import MasterKeys, derive_keyword_keys, keystream, prf
from .errors import (AuthenticationError, CapacityError, ContractError,
                     DivergenceError, LedgerHalted, OracleMismatch,
                     ParameterError, ProtocolError, TxRejected)
from .harness import BenchReport, ProtocolDriver, build_report, emit_plots, run_scenario
from .index import PlainDatabase, build_encrypted_index, build_inverted_index
from .ledger import GasSchedule, Ledger, LedgerConfig
from .oracle import PlainOracle
from .owner import DataOwner
from .params import (MODE_PRIVATE, MODE_PUBLIC, SchemeParams, params_for_mode,
                     private_params, public_params)

__all__ = [
    "AuthenticationError", "BenchReport", "CapacityError", "ContractError",
    "DataOwner", "DivergenceError", "GasSchedule", "Ledger", "LedgerConfig",
    "LedgerHalted", "MODE_PRIVATE", "MODE_PUBLIC", "MasterKeys",
    "OracleMismatch", "ParameterError", "PlainDatabase", "PlainOracle",
    "ProtocolDriver", "ProtocolError", "SchemeParams", "TxRejected",
    "build_encrypted_index", "build_inverted_index", "build_report",
    "derive_keyword_keys", "emit_plots", "keystream", "params_for_mode",
    "prf", "private_params", "public_params", "run_scenario",
]
