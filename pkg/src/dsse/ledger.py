"""Deterministic simulated ledger replicating the contract across peers.

Two modes. "public": transactions carry a gas budget, admission requires the
sender balance to cover gas_limit * gas_price, metered usage above gas_limit
drops the transaction (the budget is still consumed), and each mined block
advances simulated time by block_interval_s (default 15 s; real public chains
at the time ran closer to 15-17 s per block). "private": admission only
bounds the per-transaction entry count (delta_fabric_entries), there is no
gas, and blocks arrive every 0.5 s.

Every peer holds an independent contract replica and executes every included
transaction itself; after each block the peers' state digests are compared
and any mismatch halts the ledger with a per-component diff.
"""

from __future__ import annotations

import hashlib
import io
import struct
from collections import deque
from dataclasses import dataclass, field

from . import wire
from .contract import SearchContract
from .errors import (ContractError, DivergenceError, LedgerHalted,
                     ParameterError, TxRejected)
from .params import MODE_PRIVATE, MODE_PUBLIC, SchemeParams

_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")

_LOG_TX = 0x01
_LOG_SEAL = 0x02


@dataclass(frozen=True)
class GasSchedule:
    """Synthetic cost model, calibrated so a 70-entry index-upload transaction
    meters about 4.2M units; values are model outputs, not real-chain costs."""

    base_tx: int = 21_000
    per_storage_byte: int = 414
    per_map_insert: int = 20_000
    per_prf: int = 3_000

    def __post_init__(self):
        if min(self.base_tx, self.per_storage_byte,
               self.per_map_insert, self.per_prf) < 0:
            raise ParameterError("gas costs must be non-negative")


@dataclass(frozen=True)
class LedgerConfig:
    mode: str = MODE_PUBLIC
    block_interval_s: float | None = None
    gas_limit: int = 6_000_000
    gas_price: int = 1
    balance: int = 10_000_000_000_000
    delta_fabric_entries: int = 500
    peers: int = 2

    def __post_init__(self):
        if self.mode not in (MODE_PUBLIC, MODE_PRIVATE):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.peers < 1:
            raise ParameterError("at least one peer required")

    @property
    def interval(self) -> float:
        if self.block_interval_s is not None:
            return self.block_interval_s
        return 15.0 if self.mode == MODE_PUBLIC else 0.5

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in [
            ("mode", self.mode),
            ("block_interval_s", self.interval),
            ("gas_limit", self.gas_limit),
            ("gas_price", self.gas_price),
            ("balance", self.balance),
            ("delta_fabric_entries", self.delta_fabric_entries),
            ("peers", self.peers),
        ])

    @classmethod
    def from_text(cls, text: str) -> "LedgerConfig":
        fields: dict = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "mode":
                fields["mode"] = value
            elif key == "block_interval_s":
                fields["block_interval_s"] = float(value)
            elif key in ("gas_limit", "gas_price", "balance",
                         "delta_fabric_entries", "peers"):
                fields[key] = int(value)
            else:
                raise ParameterError(f"config line {lineno}: unknown key {key!r}")
        return cls(**fields)


@dataclass(frozen=True)
class Transaction:
    tx_id: int
    sender: str
    payload: bytes
    gas_limit: int
    gas_price: int
    seq: int


@dataclass(frozen=True)
class Block:
    height: int
    timestamp: float
    parent: bytes
    tx_ids: tuple[int, ...]
    state_digest: bytes
    gas_used: int
    digest: bytes = b""


@dataclass
class Receipt:
    tx_id: int
    status: str                 # ok | reverted | out_of_gas | dropped
    gas_used: int = 0
    fee: int = 0
    block_height: int | None = None
    opcode: str = ""
    info: dict = field(default_factory=dict)


class Ledger:
    def __init__(self, config: LedgerConfig, params: SchemeParams,
                 schedule: GasSchedule | None = None,
                 log_path: str | None = None,
                 max_txs_per_block: int = 1):
        self.config = config
        self.params = params
        self.schedule = schedule or GasSchedule()
        self.max_txs_per_block = max_txs_per_block
        self.peers = [SearchContract(params) for _ in range(config.peers)]
        self.pending: deque[Transaction] = deque()
        self.blocks: list[Block] = []
        self.receipts: list[Receipt] = []
        self.transactions: list[Transaction] = []
        self.balances: dict[str, int] = {}
        self._nonces: dict[str, int] = {}
        self.halted = False
        self.clock = 0.0
        self._log = open(log_path, "ab") if log_path else None
        self._genesis = hashlib.sha256(
            b"dsse-genesis-v1" + config.to_text().encode()).digest()

    # -- accounts -------------------------------------------------------------

    def balance(self, sender: str) -> int:
        return self.balances.setdefault(sender, self.config.balance)

    def _debit(self, sender: str, amount: int):
        self.balances[sender] = self.balance(sender) - amount

    # -- submission -------------------------------------------------------------

    def submit_tx(self, payload: bytes, sender: str = "owner",
                  gas_limit: int | None = None, gas_price: int | None = None,
                  seq: int | None = None, _log: bool = True) -> int:
        if self.halted:
            raise LedgerHalted("ledger halted after divergence")
        gas_limit = self.config.gas_limit if gas_limit is None else gas_limit
        gas_price = self.config.gas_price if gas_price is None else gas_price
        if self.config.mode == MODE_PUBLIC:
            if self.balance(sender) < gas_limit * gas_price:
                raise TxRejected("balance below gas_limit * gas_price")
        else:
            entries = wire.payload_entry_count(payload)
            if entries > self.config.delta_fabric_entries:
                raise TxRejected(
                    f"payload holds {entries} entries, over the "
                    f"{self.config.delta_fabric_entries}-entry parameter limit")
        if seq is None:
            seq = self._nonces.get(sender, 0)
        self._nonces[sender] = seq + 1
        tx = Transaction(len(self.transactions), sender, payload,
                         gas_limit, gas_price, seq)
        self.transactions.append(tx)
        self.receipts.append(Receipt(tx.tx_id, "pending",
                                     opcode=wire.payload_opcode_name(payload)))
        self.pending.append(tx)
        if self._log and _log:
            self._write_log_tx(tx)
        return tx.tx_id

    # -- metering ---------------------------------------------------------------

    def meter(self, trace) -> int:
        s = self.schedule
        return (s.base_tx
                + trace.prf_evals * s.per_prf
                + trace.map_inserts * s.per_map_insert
                + trace.storage_bytes * s.per_storage_byte)

    # -- mining -----------------------------------------------------------------

    def mine_block(self, _log: bool = True) -> Block:
        if self.halted:
            raise LedgerHalted("ledger halted after divergence")
        public = self.config.mode == MODE_PUBLIC
        included: list[int] = []
        gas_total = 0
        count = 0
        while self.pending and count < self.max_txs_per_block:
            tx = self.pending.popleft()
            count += 1
            receipt = self.receipts[tx.tx_id]
            fee_due = tx.gas_limit * tx.gas_price
            if public and self.balance(tx.sender) < fee_due:
                receipt.status = "dropped"
                continue

            preps, errors = [], []
            for peer in self.peers:
                try:
                    preps.append(peer.prepare(tx.payload))
                    errors.append(None)
                except ContractError as exc:
                    preps.append(None)
                    errors.append(str(exc))
            if len({e is None for e in errors}) > 1:
                self._halt_divergent("peers disagree on transaction validity")

            if errors[0] is not None:
                receipt.status = "reverted"
                receipt.info = {"error": errors[0]}
                receipt.gas_used = self.schedule.base_tx if public else 0
            else:
                gas = self.meter(preps[0].trace) if public else 0
                if public and gas > tx.gas_limit:
                    # Budget exhausted mid-execution: effect discarded, the
                    # reserved gas is consumed and not refunded.
                    receipt.status = "out_of_gas"
                    receipt.gas_used = tx.gas_limit
                    receipt.info = {"metered": gas}
                else:
                    for peer, prep in zip(self.peers, preps):
                        peer.commit(prep)
                    receipt.status = "ok"
                    receipt.gas_used = gas
                    receipt.info = preps[0].info
            if receipt.status in ("ok", "reverted"):
                receipt.block_height = len(self.blocks)
                included.append(tx.tx_id)
            if public:
                receipt.fee = receipt.gas_used * tx.gas_price
                self._debit(tx.sender, receipt.fee)
            gas_total += receipt.gas_used

        self.clock += self.config.interval
        digests = [peer.state_digest() for peer in self.peers]
        report = self._divergence_report(digests)
        parent = self.blocks[-1].digest if self.blocks else self._genesis
        state_digest = digests[0]
        header = (wire.canon_uint(len(self.blocks))
                  + struct.pack("<d", self.clock)
                  + wire.canon_bytes(parent)
                  + wire.canon_uint_list(included)
                  + b"".join(wire.canon_bytes(self.transactions[i].payload)
                             for i in included)
                  + wire.canon_bytes(state_digest))
        block = Block(len(self.blocks), self.clock, parent, tuple(included),
                      state_digest, gas_total,
                      hashlib.sha256(header).digest())
        self.blocks.append(block)
        if self._log and _log:
            self._write_log_seal()
        if report is not None:
            self.halted = True
            raise DivergenceError("replica state digests diverged", report)
        return block

    def mine_all(self) -> list[Block]:
        out = []
        while self.pending:
            out.append(self.mine_block())
        return out

    def _halt_divergent(self, message: str):
        self.halted = True
        raise DivergenceError(message, {"peers": self.config.peers})

    def _divergence_report(self, digests: list[bytes]) -> dict | None:
        if len(set(digests)) <= 1:
            return None
        components = [peer.component_digests() for peer in self.peers]
        differing = sorted({name for comp in components
                            for name, value in comp.items()
                            if value != components[0][name]})
        return {
            "height": len(self.blocks),
            "digests": [d.hex() for d in digests],
            "differing_components": differing,
            "component_digests": components,
        }

    def check_consensus(self) -> dict | None:
        """Compare replica digests now; returns None when all peers agree."""
        return self._divergence_report([p.state_digest() for p in self.peers])

    # -- read-only state access ---------------------------------------------

    @property
    def view(self) -> SearchContract:
        """Any peer serves reads; consensus checks keep them interchangeable."""
        return self.peers[0]

    def receipt(self, tx_id: int) -> Receipt:
        return self.receipts[tx_id]

    # -- persistence -------------------------------------------------------------

    def _write_log_tx(self, tx: Transaction):
        body = io.BytesIO()
        sender = tx.sender.encode("utf-8")
        body.write(_U32.pack(len(sender)))
        body.write(sender)
        body.write(_U64.pack(tx.gas_limit))
        body.write(_U64.pack(tx.gas_price))
        body.write(_U64.pack(tx.seq))
        body.write(_U32.pack(len(tx.payload)))
        body.write(tx.payload)
        raw = body.getvalue()
        self._log.write(bytes([_LOG_TX]) + _U32.pack(len(raw)) + raw)
        self._log.flush()

    def _write_log_seal(self):
        self._log.write(bytes([_LOG_SEAL]) + _U32.pack(0))
        self._log.flush()

    def attach_log(self, path: str):
        """Start appending future records to `path` (used after a replay)."""
        self.close()
        self._log = open(path, "ab")

    def close(self):
        if self._log:
            self._log.close()
            self._log = None

    @classmethod
    def replay(cls, config: LedgerConfig, params: SchemeParams,
               log_path: str, schedule: GasSchedule | None = None,
               max_txs_per_block: int = 1) -> "Ledger":
        """Rebuild a ledger by re-running a persisted transaction log."""
        ledger = cls(config, params, schedule=schedule,
                     max_txs_per_block=max_txs_per_block)
        with open(log_path, "rb") as fh:
            raw = fh.read()
        pos = 0
        while pos < len(raw):
            kind = raw[pos]
            length = _U32.unpack(raw[pos + 1:pos + 5])[0]
            body = raw[pos + 5:pos + 5 + length]
            pos += 5 + length
            if kind == _LOG_SEAL:
                ledger.mine_block(_log=False)
                continue
            if kind != _LOG_TX:
                raise ParameterError(f"unknown log record {kind:#x}")
            cur = 0
            sender_len = _U32.unpack(body[cur:cur + 4])[0]
            cur += 4
            sender = body[cur:cur + sender_len].decode("utf-8")
            cur += sender_len
            gas_limit = _U64.unpack(body[cur:cur + 8])[0]
            cur += 8
            gas_price = _U64.unpack(body[cur:cur + 8])[0]
            cur += 8
            seq = _U64.unpack(body[cur:cur + 8])[0]
            cur += 8
            payload_len = _U32.unpack(body[cur:cur + 4])[0]
            cur += 4
            payload = body[cur:cur + payload_len]
            ledger.submit_tx(payload, sender=sender, gas_limit=gas_limit,
                             gas_price=gas_price, seq=seq, _log=False)
        return ledger
