"""Operator command line.

A workspace directory holds everything one deployment needs: the key file,
the ledger config, the persisted transaction log, the sealed owner state,
the plaintext mirror used for result verification, credentials and the
content-addressed store. Each invocation takes an exclusive lock, replays
the transaction log to rebuild the replicated contract state, runs one
operation and appends to the log.

Exit codes: 0 ok, 2 search result disagreed with the plaintext mirror,
3 replica divergence.
"""

from __future__ import annotations

import argparse
import fcntl
import os
import sys

from . import multiuser, wire
from .crypto import MasterKeys
from .corpus import ingest, shaped_db, synthetic_single_match_db
from .errors import (AuthenticationError, CapacityError, DivergenceError,
                     LedgerHalted, OracleMismatch, ParameterError,
                     ProtocolError, TxRejected)
from .harness import (EXIT_DIVERGENCE, EXIT_OK, EXIT_ORACLE_MISMATCH,
                      ProtocolDriver, build_report, emit_plots, run_scenario)
from .ledger import Ledger, LedgerConfig
from .oracle import PlainOracle
from .owner import DataOwner
from .params import MODE_PRIVATE, MODE_PUBLIC, params_for_mode
from .store import DirectoryStore, NotFound
from .wire import Reader


class Workspace:
    def __init__(self, root: str, mode: str | None, forward_private: bool,
                 stateless: bool, config_path: str | None):
        self.root = root
        self.forward_private = forward_private
        self.stateless = stateless
        os.makedirs(root, exist_ok=True)
        self._lock = open(os.path.join(root, ".lock"), "w")
        fcntl.flock(self._lock, fcntl.LOCK_EX | fcntl.LOCK_NB)
        cfg_file = config_path or os.path.join(root, "config.cfg")
        if os.path.exists(cfg_file):
            with open(cfg_file) as fh:
                self.config = LedgerConfig.from_text(fh.read())
            if mode and mode != self.config.mode:
                raise ParameterError(
                    f"workspace is configured for {self.config.mode} mode")
        else:
            self.config = LedgerConfig(mode=mode or MODE_PUBLIC)
            with open(cfg_file, "w") as fh:
                fh.write(self.config.to_text())
        self.params = params_for_mode(self.config.mode)
        self.store = DirectoryStore(os.path.join(root, "store"))

    # -- paths ------------------------------------------------------------

    def path(self, name: str) -> str:
        return os.path.join(self.root, name)

    # -- keys and owner state ----------------------------------------------

    def keygen(self) -> MasterKeys:
        if os.path.exists(self.path("keys.bin")):
            raise ParameterError(
                "workspace already holds keys; refusing to overwrite them")
        mk = MasterKeys.generate(self.params.lambda_bits)
        with open(self.path("keys.bin"), "wb") as fh:
            fh.write(mk.to_bytes())
        os.chmod(self.path("keys.bin"), 0o600)
        owner = DataOwner(mk, self.params, forward_private=self.forward_private)
        self.save_owner(owner)
        return mk

    def load_keys(self) -> MasterKeys:
        try:
            with open(self.path("keys.bin"), "rb") as fh:
                return MasterKeys.from_bytes(fh.read(), self.params.lambda_bits)
        except FileNotFoundError:
            raise ParameterError("no keys in workspace; run keygen first") from None

    def save_owner(self, owner: DataOwner):
        blob = owner.export_state()
        if self.stateless:
            address = self.store.put(blob)
            with open(self.path("owner.ptr"), "wb") as fh:
                fh.write(address)
        else:
            with open(self.path("owner.state"), "wb") as fh:
                fh.write(blob)

    def load_owner(self, mk: MasterKeys) -> DataOwner:
        if self.stateless and os.path.exists(self.path("owner.ptr")):
            with open(self.path("owner.ptr"), "rb") as fh:
                blob = self.store.get(fh.read())
        elif os.path.exists(self.path("owner.state")):
            with open(self.path("owner.state"), "rb") as fh:
                blob = fh.read()
        else:
            return DataOwner(mk, self.params, forward_private=self.forward_private)
        return DataOwner.import_state(mk, blob, self.params)

    # -- ledger -----------------------------------------------------------

    def load_ledger(self) -> Ledger:
        log_path = self.path("ledger.log")
        if os.path.exists(log_path):
            ledger = Ledger.replay(self.config, self.params, log_path)
            ledger.attach_log(log_path)
            return ledger
        return Ledger(self.config, self.params, log_path=log_path)

    # -- plaintext mirror ---------------------------------------------------

    def load_oracle(self) -> PlainOracle:
        oracle = PlainOracle()
        path = self.path("mirror.txt")
        if os.path.exists(path):
            with open(path) as fh:
                for line in fh:
                    kind, w, doc = line.rstrip("\n").split("\t")
                    pair = (w, int(doc))
                    if kind == "S":
                        oracle.setup_pairs.add(pair)
                    elif kind == "A":
                        oracle.added_pairs.add(pair)
                    elif kind == "T":
                        oracle.tombstones.add(pair)
        return oracle

    def save_oracle(self, oracle: PlainOracle):
        with open(self.path("mirror.txt"), "w") as fh:
            for kind, pairs in (("S", oracle.setup_pairs),
                                ("A", oracle.added_pairs),
                                ("T", oracle.tombstones)):
                for w, doc in sorted(pairs):
                    fh.write(f"{kind}\t{w}\t{doc}\n")

    # -- group state ----------------------------------------------------------

    def save_group(self, mk: MasterKeys, group: multiuser.GroupManager):
        from . import crypto
        body = [group.keys.pk.to_bytes(),
                wire.canon_uint(len(group.keys.user_secrets))]
        body += [wire.canon_bytes(s) for s in group.keys.user_secrets]
        for member_set in (group.members, group.revoked, group.issued):
            body.append(wire.canon_uint_list(sorted(member_set)))
        body.append(wire.canon_bytes(group.group_secret))
        key = crypto.prf(mk.index_key, b"group-state-wrap-v1")
        with open(self.path("group.bin"), "wb") as fh:
            fh.write(crypto.seal(key, b"".join(body)))

    def load_group(self, mk: MasterKeys) -> multiuser.GroupManager | None:
        from . import crypto
        path = self.path("group.bin")
        if not os.path.exists(path):
            return None
        key = crypto.prf(mk.index_key, b"group-state-wrap-v1")
        with open(path, "rb") as fh:
            raw = crypto.unseal(key, fh.read())
        rd = Reader(raw)
        pk = multiuser.GroupPublic.from_bytes(rd.take(20))
        secrets_ = tuple(rd.take(rd.u32())
                         for _ in range(int.from_bytes(rd.take(8), "big")))
        sets = []
        for _ in range(3):
            count = int.from_bytes(rd.take(4), "little")
            sets.append({int.from_bytes(rd.take(8), "big") for _ in range(count)})
        secret = rd.take(rd.u32())
        rd.done()
        return multiuser.GroupManager(
            keys=multiuser.GroupKeys(pk, secrets_),
            members=sets[0], revoked=sets[1], issued=sets[2],
            group_secret=secret)

    def credential_path(self, user_id: int) -> str:
        creds = self.path("creds")
        os.makedirs(creds, exist_ok=True)
        return os.path.join(creds, f"user{user_id}.cred")


def _print_result(ids: set[int]):
    print(f"{len(ids)} matching document(s)")
    for doc in sorted(ids):
        print(f"  {doc}")


def _cmd_keygen(ws: Workspace, _args) -> int:
    ws.keygen()
    print(f"keys written to {ws.path('keys.bin')}")
    return EXIT_OK


def _cmd_setup(ws: Workspace, args) -> int:
    mk = ws.load_keys()
    owner = ws.load_owner(mk)
    ledger = ws.load_ledger()
    db = ingest(args.corpus, max_docs=args.max_docs, max_pairs=args.max_pairs,
                drop_stopwords=args.drop_stopwords)
    payloads = owner.setup(db)
    tx_ids = [ledger.submit_tx(payload) for payload in payloads]
    ledger.mine_all()
    failed = [t for t in tx_ids if ledger.receipt(t).status != "ok"]
    if failed:
        print(f"{len(failed)} upload transaction(s) failed; a workspace can "
              "only be set up once", file=sys.stderr)
        return 1
    oracle = PlainOracle()
    oracle.setup(db)
    ws.save_oracle(oracle)
    ws.save_owner(owner)
    print(f"ingested {len(db)} documents, {db.pair_count()} pairs")
    print(f"uploaded {len(payloads)} transaction(s), "
          f"simulated clock {ledger.clock:.1f} s")
    return EXIT_OK


def _with_search(ws: Workspace, keyword: str, do_search) -> int:
    """Run a search callback and gate the printout on the plaintext mirror."""
    oracle = ws.load_oracle()
    result = do_search()
    expected = oracle.search(keyword)
    if result != expected:
        print(f"ORACLE MISMATCH: got {sorted(result)}, expected {sorted(expected)}",
              file=sys.stderr)
        return EXIT_ORACLE_MISMATCH
    _print_result(result)
    return EXIT_OK


def _cmd_search(ws: Workspace, args) -> int:
    mk = ws.load_keys()
    owner = ws.load_owner(mk)
    ledger = ws.load_ledger()

    def do_search():
        request = owner.search_request(args.keyword)
        for payload in request.payloads:
            ledger.submit_tx(payload)
        ledger.mine_all()
        return owner.decode_results(ledger.view, args.keyword)

    return _with_search(ws, args.keyword, do_search)


def _cmd_add(ws: Workspace, args) -> int:
    mk = ws.load_keys()
    owner = ws.load_owner(mk)
    ledger = ws.load_ledger()
    words = [w for w in args.keywords.split(",") if w]
    request = owner.add_phase1(args.doc_id, words)
    tx_id = ledger.submit_tx(request.payload)
    ledger.mine_all()
    receipt = ledger.receipt(tx_id)
    if receipt.status != "ok":
        print(f"add failed: {receipt.status}", file=sys.stderr)
        return 1
    re_bits = ledger.view.read_re(receipt.info["re_index"])
    owner.add_phase2(re_bits, request)
    oracle = ws.load_oracle()
    oracle.add(args.doc_id, words)
    ws.save_oracle(oracle)
    ws.save_owner(owner)
    resurrected = sum(re_bits)
    print(f"added document {args.doc_id} under {len(request)} keyword(s); "
          f"{resurrected} pair(s) resurrected from tombstones")
    return EXIT_OK


def _cmd_del(ws: Workspace, args) -> int:
    mk = ws.load_keys()
    owner = ws.load_owner(mk)
    ledger = ws.load_ledger()
    words = [w for w in args.keywords.split(",") if w]
    ledger.submit_tx(owner.delete(args.doc_id, words))
    ledger.mine_all()
    oracle = ws.load_oracle()
    oracle.delete(args.doc_id, words)
    ws.save_oracle(oracle)
    ws.save_owner(owner)
    print(f"deleted document {args.doc_id} under {len(set(words))} keyword(s)")
    return EXIT_OK


def _cmd_user(ws: Workspace, args) -> int:
    if ws.config.mode != MODE_PRIVATE:
        print("user management needs the private mode; public deployments "
              "use the owner-proxied flow", file=sys.stderr)
        return 1
    mk = ws.load_keys()
    ledger = ws.load_ledger()
    if args.action == "init":
        members = [int(x) for x in args.members.split(",")] if args.members else []
        group = multiuser.GroupManager.create(args.capacity, members)
        ledger.submit_tx(group.setup_payload())
        ledger.mine_all()
        for i in sorted(group.members):
            cred = group.credential(i)
            with open(ws.credential_path(i), "wb") as fh:
                fh.write(cred.to_bytes())
        ws.save_group(mk, group)
        print(f"group of {args.capacity} slots initialized, "
              f"members: {sorted(group.members)}")
        return EXIT_OK
    group = ws.load_group(mk)
    if group is None:
        print("no group initialized; run `user init` first", file=sys.stderr)
        return 1
    if args.action == "add":
        cred, payload = group.add_user(args.user_id)
        if payload is not None:
            ledger.submit_tx(payload)
            ledger.mine_all()
        with open(ws.credential_path(args.user_id), "wb") as fh:
            fh.write(cred.to_bytes())
        ws.save_group(mk, group)
        print(f"user {args.user_id} credentialed; "
              f"credential at {ws.credential_path(args.user_id)}")
        return EXIT_OK
    if args.action == "revoke":
        payload = group.revoke_user(args.user_id)
        if payload is None:
            print(f"user {args.user_id} is not a member; nothing to do")
        else:
            ledger.submit_tx(payload)
            ledger.mine_all()
            print(f"user {args.user_id} revoked; gate rewrapped for "
                  f"{sorted(group.members)}")
        ws.save_group(mk, group)
        return EXIT_OK
    raise ParameterError(f"unknown user action {args.action!r}")


def _cmd_trapdoor_search(ws: Workspace, args) -> int:
    mk = ws.load_keys()
    owner = ws.load_owner(mk)
    ledger = ws.load_ledger()
    if ws.config.mode == MODE_PUBLIC:
        return _with_search(ws, args.keyword,
                            lambda: multiuser.proxied_search(owner, ledger,
                                                             args.keyword))
    with open(ws.credential_path(args.user_id), "rb") as fh:
        cred = multiuser.UserCredential.from_bytes(fh.read())
    token = owner.issue_search_token(args.keyword)
    payload, authorized = multiuser.user_trapdoor(token, cred, ledger.view)
    if not authorized:
        print("warning: credential cannot unwrap the current gate "
              "(revoked or never a member)", file=sys.stderr)
    tx_id = ledger.submit_tx(payload, sender=f"user{args.user_id}")
    ledger.mine_all()
    receipt = ledger.receipt(tx_id)
    if receipt.info.get("invalid"):
        print("contract rejected the token (revoked user or unknown keyword)")
        return EXIT_OK

    return _with_search(ws, args.keyword,
                        lambda: owner.decode_results(ledger.view, args.keyword))


def _cmd_bench(ws: Workspace, args) -> int:
    driver = ProtocolDriver(mode=ws.config.mode, config=ws.config, peers=args.peers)
    db = shaped_db(args.shape) if args.shape else synthetic_single_match_db(args.entries)
    driver.setup(db)
    for keyword in sorted(db.keywords())[:args.searches]:
        driver.search(keyword)
    report = build_report(driver.ledger)
    outdir = args.out or ws.path("bench")
    paths = emit_plots(report, outdir)
    print(report.summary())
    print("tables written to " + ", ".join(sorted(paths.values())))
    return EXIT_OK


def _cmd_scenario(ws: Workspace, args) -> int:
    driver = ProtocolDriver(mode=ws.config.mode, config=ws.config)
    with open(args.script) as fh:
        lines = fh.readlines()
    report = run_scenario(lines, driver, corpus_root=args.corpus_root)
    outdir = args.out or ws.path("report")
    emit_plots(report, outdir)
    print(report.summary())
    return EXIT_OK


def _cmd_replay(ws: Workspace, args) -> int:
    log_path = ws.path("ledger.log")
    if not os.path.exists(log_path):
        print("no transaction log to replay", file=sys.stderr)
        return 1
    first = Ledger.replay(ws.config, ws.params, log_path)
    second = Ledger.replay(ws.config, ws.params, log_path)
    if [b.digest for b in first.blocks] != [b.digest for b in second.blocks]:
        print("replay is not deterministic", file=sys.stderr)
        return EXIT_DIVERGENCE
    report = build_report(first)
    if args.out:
        emit_plots(report, args.out)
    print(f"replayed {len(first.blocks)} block(s); "
          f"final state digest {first.view.state_digest().hex()}")
    print(report.summary())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dsse",
        description="Keyword search over an encrypted index held by a "
                    "simulated replicated ledger")
    parser.add_argument("--workspace", default="dsse-ws",
                        help="state directory (default: ./dsse-ws)")
    parser.add_argument("--mode", choices=[MODE_PUBLIC, MODE_PRIVATE],
                        help="deployment mode for a fresh workspace")
    parser.add_argument("--config", help="ledger config file (key=value lines)")
    parser.add_argument("--fp", action="store_true",
                        help="forward-private additions (permutation chain labels)")
    parser.add_argument("--stateless", action="store_true",
                        help="keep owner state in the content-addressed store")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("keygen", help="sample master keys for a fresh workspace")

    p = sub.add_parser("setup", help="ingest a corpus and upload the index")
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-docs", type=int)
    p.add_argument("--max-pairs", type=int)
    p.add_argument("--drop-stopwords", action="store_true")

    p = sub.add_parser("search", help="search one keyword")
    p.add_argument("keyword")

    p = sub.add_parser("add", help="add a document's keyword list")
    p.add_argument("doc_id", type=int)
    p.add_argument("keywords", help="comma-separated keywords")

    p = sub.add_parser("del", help="delete a document's keyword list")
    p.add_argument("doc_id", type=int)
    p.add_argument("keywords", help="comma-separated keywords")

    p = sub.add_parser("user", help="manage shared-search users (private mode)")
    p.add_argument("action", choices=["init", "add", "revoke"])
    p.add_argument("user_id", type=int, nargs="?", default=0)
    p.add_argument("--capacity", type=int, default=8,
                   help="user slots for `init`")
    p.add_argument("--members", help="initial members for `init`, e.g. 1,2,3")

    p = sub.add_parser("trapdoor-search",
                       help="search as a credentialed user")
    p.add_argument("user_id", type=int)
    p.add_argument("keyword")

    p = sub.add_parser("bench", help="synthetic benchmark run")
    p.add_argument("--entries", type=int, default=700,
                   help="index entries in the synthetic database")
    p.add_argument("--shape", choices=["db1", "db2", "db3", "db4"],
                   help="use a reference dataset shape instead of --entries")
    p.add_argument("--searches", type=int, default=5)
    p.add_argument("--peers", type=int, default=2)
    p.add_argument("--out")

    p = sub.add_parser("scenario", help="run a scripted operation sequence")
    p.add_argument("script")
    p.add_argument("--corpus-root", default=".")
    p.add_argument("--out")

    p = sub.add_parser("replay", help="rebuild state from the transaction log")
    p.add_argument("--out")

    return parser


_COMMANDS = {
    "keygen": _cmd_keygen,
    "setup": _cmd_setup,
    "search": _cmd_search,
    "add": _cmd_add,
    "del": _cmd_del,
    "user": _cmd_user,
    "trapdoor-search": _cmd_trapdoor_search,
    "bench": _cmd_bench,
    "scenario": _cmd_scenario,
    "replay": _cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        try:
            ws = Workspace(args.workspace, args.mode, args.fp, args.stateless,
                           args.config)
        except BlockingIOError:
            print("workspace is locked by another invocation", file=sys.stderr)
            return 1
        return _COMMANDS[args.command](ws, args)
    except OracleMismatch as exc:
        print(f"ORACLE MISMATCH: {exc}", file=sys.stderr)
        return EXIT_ORACLE_MISMATCH
    except DivergenceError as exc:
        print(f"LEDGER DIVERGENCE: {exc} {exc.report}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ParameterError, ProtocolError, CapacityError, TxRejected,
            AuthenticationError, LedgerHalted, NotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
