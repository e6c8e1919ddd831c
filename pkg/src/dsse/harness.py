"""End-to-end driver, scenario runner and report generation.

The driver wires one owner, one ledger and the plaintext reference model
together and checks every decoded search result against the reference before
handing it to the caller, so no unverified result ever escapes. Reports are
derived from ledger receipts and blocks only, which keeps them reproducible
from a persisted transaction log.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from dataclasses import dataclass, field

from . import multiuser
from .corpus import ingest, synthetic_single_match_db
from .crypto import MasterKeys
from .errors import OracleMismatch, ParameterError, ProtocolError
from .index import PlainDatabase, random_nonces
from .leakage import QueryLog
from .ledger import GasSchedule, Ledger, LedgerConfig
from .oracle import PlainOracle
from .owner import DataOwner
from .params import MODE_PRIVATE, MODE_PUBLIC, params_for_mode

EXIT_OK = 0
EXIT_ORACLE_MISMATCH = 2
EXIT_DIVERGENCE = 3


class ProtocolDriver:
    """Owner + ledger + reference model, kept in lockstep."""

    def __init__(self, mode: str = MODE_PUBLIC, mk: MasterKeys | None = None,
                 params=None, config: LedgerConfig | None = None,
                 schedule: GasSchedule | None = None,
                 forward_private: bool = False,
                 nonces=random_nonces, log_path: str | None = None,
                 peers: int | None = None, fp_keypair=None):
        self.params = params or params_for_mode(mode)
        cfg = config or LedgerConfig(mode=self.params.mode)
        if cfg.mode != self.params.mode:
            raise ParameterError(
                f"ledger config is {cfg.mode} but scheme parameters are "
                f"{self.params.mode}")
        if peers is not None:
            cfg = dataclasses.replace(cfg, peers=peers)
        self.config = cfg
        self.owner = DataOwner(mk or MasterKeys.generate(self.params.lambda_bits),
                               self.params, forward_private=forward_private,
                               nonces=nonces, fp_keypair=fp_keypair)
        self.ledger = Ledger(cfg, self.params, schedule=schedule, log_path=log_path)
        self.oracle = PlainOracle()
        self.query_log = QueryLog()
        self.group: multiuser.GroupManager | None = None
        self.credentials: dict[int, multiuser.UserCredential] = {}

    # -- lifecycle ---------------------------------------------------------------

    def setup(self, db: PlainDatabase) -> int:
        payloads = self.owner.setup(db)
        for payload in payloads:
            self.ledger.submit_tx(payload)
        self.ledger.mine_all()
        self.oracle.setup(db)
        self.query_log.seed_identifiers(db)
        return len(payloads)

    def search(self, keyword: str, verify: bool = True) -> set[int]:
        request = self.owner.search_request(keyword)
        for payload in request.payloads:
            self.ledger.submit_tx(payload)
        self.ledger.mine_all()
        self.query_log.record_search(keyword)
        result = self.owner.decode_results(self.ledger.view, keyword)
        if verify:
            expected = self.oracle.search(keyword)
            if result != expected:
                raise OracleMismatch(
                    f"search({keyword!r}) returned {sorted(result)}, "
                    f"reference expects {sorted(expected)}")
        return result

    def add(self, doc_id: int, keywords) -> tuple[int, ...]:
        request = self.owner.add_phase1(doc_id, keywords)
        tx_id = self.ledger.submit_tx(request.payload)
        self.ledger.mine_all()
        receipt = self.ledger.receipt(tx_id)
        if receipt.status != "ok":
            raise ProtocolError(f"add transaction failed: {receipt.status}")
        re_bits = self.ledger.view.read_re(receipt.info["re_index"])
        self.owner.add_phase2(re_bits, request)
        self.oracle.add(doc_id, keywords)
        self.query_log.record_add(doc_id, keywords)
        return re_bits

    def delete(self, doc_id: int, keywords) -> int:
        tx_id = self.ledger.submit_tx(self.owner.delete(doc_id, keywords))
        self.ledger.mine_all()
        self.oracle.delete(doc_id, keywords)
        self.query_log.record_delete(doc_id, keywords)
        return tx_id

    # -- shared access ------------------------------------------------------------

    def mu_setup(self, n_users: int, members) -> None:
        if self.params.mode != MODE_PRIVATE:
            raise ParameterError(
                "independent user search needs the private mode; in public "
                "mode users go through the owner-proxied flow")
        self.group = multiuser.GroupManager.create(n_users, members)
        self.ledger.submit_tx(self.group.setup_payload())
        self.ledger.mine_all()
        for i in sorted(self.group.members):
            self.credentials[i] = self.group.credential(i)

    def add_user(self, user_id: int) -> multiuser.UserCredential:
        if self.group is None:
            raise ProtocolError("mu_setup has not run")
        cred, payload = self.group.add_user(user_id)
        if payload is not None:
            self.ledger.submit_tx(payload)
            self.ledger.mine_all()
        self.credentials[user_id] = cred
        return cred

    def revoke_user(self, user_id: int) -> None:
        if self.group is None:
            raise ProtocolError("mu_setup has not run")
        payload = self.group.revoke_user(user_id)
        if payload is not None:
            self.ledger.submit_tx(payload)
            self.ledger.mine_all()

    def user_search(self, user_id: int, keyword: str,
                    verify: bool = True) -> set[int] | None:
        """Search as a shared user; None when the contract rejected the token."""
        if self.params.mode == MODE_PUBLIC:
            self.query_log.record_search(keyword)
            result = multiuser.proxied_search(self.owner, self.ledger, keyword)
            if verify and result != self.oracle.search(keyword):
                raise OracleMismatch(
                    f"proxied search({keyword!r}) disagrees with the reference")
            return result
        cred = self.credentials[user_id]
        token = self.owner.issue_search_token(keyword)
        payload, _ = multiuser.user_trapdoor(token, cred, self.ledger.view)
        tx_id = self.ledger.submit_tx(payload, sender=f"user{user_id}")
        self.ledger.mine_all()
        receipt = self.ledger.receipt(tx_id)
        self.query_log.record_search(keyword)
        if receipt.info.get("invalid"):
            return None
        result = self.owner.decode_results(self.ledger.view, keyword)
        if verify:
            expected = self.oracle.search(keyword)
            if result != expected:
                raise OracleMismatch(
                    f"user search({keyword!r}) returned {sorted(result)}, "
                    f"reference expects {sorted(expected)}")
        return result


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

@dataclass
class SearchEvent:
    query_key: str
    tx_count: int
    matching_docs: int
    first_block: int
    last_block: int
    simulated_seconds: float


@dataclass
class BenchReport:
    mode: str
    block_interval: float
    phase_tx_counts: dict[str, int] = field(default_factory=dict)
    gas_total: int = 0
    gas_per_block: list[tuple[int, int]] = field(default_factory=list)
    searches: list[SearchEvent] = field(default_factory=list)
    setup_entries: int = 0
    final_clock: float = 0.0
    block_count: int = 0

    def summary(self) -> str:
        lines = [
            f"mode: {self.mode}",
            f"blocks mined: {self.block_count}",
            f"simulated clock: {self.final_clock:.1f} s",
            f"total gas: {self.gas_total}",
            f"setup index entries: {self.setup_entries}",
        ]
        for op in sorted(self.phase_tx_counts):
            lines.append(f"tx[{op}]: {self.phase_tx_counts[op]}")
        for ev in self.searches:
            lines.append(
                f"search {ev.query_key[:12]}: {ev.matching_docs} docs, "
                f"{ev.tx_count} txs, {ev.simulated_seconds:.1f} s")
        return "\n".join(lines) + "\n"


def build_report(ledger: Ledger) -> BenchReport:
    """Derive the whole report from receipts and blocks alone."""
    interval = ledger.config.interval
    report = BenchReport(mode=ledger.config.mode, block_interval=interval,
                         final_clock=ledger.clock, block_count=len(ledger.blocks))
    for block in ledger.blocks:
        report.gas_per_block.append((block.height, block.gas_used))
        report.gas_total += block.gas_used
    groups: dict[tuple[str, int], list] = {}
    for receipt in ledger.receipts:
        if receipt.block_height is None:
            continue
        op = receipt.opcode
        report.phase_tx_counts[op] = report.phase_tx_counts.get(op, 0) + 1
        if op == "SETUP":
            report.setup_entries += receipt.info.get("records", 0)
        if op in ("SEARCH", "MU_SEARCH") and "query_key" in receipt.info:
            key = (receipt.info["query_key"], receipt.info["occurrence"])
            groups.setdefault(key, []).append(receipt)
    for (qk, _occ), receipts in sorted(
            groups.items(), key=lambda kv: kv[1][0].block_height):
        blocks = [r.block_height for r in receipts]
        first, last = min(blocks), max(blocks)
        report.searches.append(SearchEvent(
            query_key=qk,
            tx_count=len(receipts),
            matching_docs=sum(r.info.get("saved", 0) for r in receipts),
            first_block=first,
            last_block=last,
            simulated_seconds=(last - first + 1) * interval))
    return report


def emit_plots(report: BenchReport, outdir: str) -> dict[str, str]:
    """Write plot-ready CSV tables plus a text summary; returns the paths."""
    os.makedirs(outdir, exist_ok=True)
    paths = {}

    def write(name: str, header: list[str], rows):
        path = os.path.join(outdir, name)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        paths[name] = path
        return path

    curve = sorted((ev.matching_docs, ev.simulated_seconds) for ev in report.searches)
    write("search_curve.csv",
          ["matching_docs", "simulated_seconds", "seconds_per_doc"],
          [(docs, secs, secs / docs if docs else "")
           for docs, secs in curve])
    write("time_vs_txcount.csv",
          ["tx_count", "simulated_seconds"],
          sorted((ev.tx_count, ev.simulated_seconds) for ev in report.searches))
    write("gas_per_block.csv", ["block", "gas_used"], report.gas_per_block)
    summary_path = os.path.join(outdir, "summary.txt")
    with open(summary_path, "w") as fh:
        fh.write(report.summary())
    paths["summary.txt"] = summary_path
    return paths


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------

def _parse_words(raw: str) -> list[str]:
    return [w for w in raw.split(",") if w]


def run_scenario(lines, driver: ProtocolDriver,
                 corpus_root: str = ".") -> BenchReport:
    """Execute a line-oriented scenario; every search is reference-checked.

    Raises OracleMismatch or DivergenceError on failure; the CLI maps those
    to exit codes 2 and 3.
    """
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        op = parts[0].upper()
        try:
            if op == "SETUP":
                db = ingest(os.path.join(corpus_root, parts[1]))
                driver.setup(db)
            elif op == "SETUP-SYNTH":
                driver.setup(synthetic_single_match_db(int(parts[1])))
            elif op == "SEARCH":
                driver.search(parts[1])
            elif op == "ADD":
                driver.add(int(parts[1]), _parse_words(parts[2]))
            elif op == "DEL":
                driver.delete(int(parts[1]), _parse_words(parts[2]))
            elif op == "MUSETUP":
                driver.mu_setup(int(parts[1]), [int(x) for x in _parse_words(parts[2])])
            elif op == "ADDUSER":
                driver.add_user(int(parts[1]))
            elif op == "REVOKE":
                driver.revoke_user(int(parts[1]))
            elif op == "USEARCH":
                driver.user_search(int(parts[1]), parts[2])
            else:
                raise ParameterError(f"unknown scenario op {op!r}")
        except (IndexError, ValueError) as exc:
            raise ParameterError(f"scenario line {lineno}: {exc}") from exc
    return build_report(driver.ledger)
