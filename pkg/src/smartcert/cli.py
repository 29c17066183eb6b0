"""Command-line interface. Operates directly on a node data directory.

Exit codes: 0 success, 1 domain error or failed verification, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import crypto, merkle
from .config import CONFIG_ENV, ConfigError, ServiceConfig, load_config, load_key, save_key
from .errors import InvalidSeed, SmartCertError
from .ledger import AnomalyPayload, IssuePayload, Node, RevokePayload, TransferPayload, TxKind, make_transaction
from .sentinel import load_events


class UsageError(Exception):
    pass


def _config(args) -> ServiceConfig:
    path = os.environ.get(CONFIG_ENV) or args.config
    cfg = load_config(path) if path else ServiceConfig()
    if args.data_dir:
        cfg.data_dir = Path(args.data_dir)
    if args.listen:
        cfg.listen_address = args.listen
    return cfg


def _service(args):
    from .service import SmartCertService

    clock = (lambda: args.now) if args.now is not None else None
    kwargs = {"clock": clock} if clock else {}
    return SmartCertService(_config(args), **kwargs)


def _key(args) -> crypto.KeyPair:
    if not args.key:
        raise UsageError("--key is required for this command")
    return load_key(args.key)


def _sign(service, key: crypto.KeyPair, kind: TxKind, payload):
    return make_transaction(key, service.node.next_nonce(key.account), kind, payload)


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_keygen(args) -> int:
    seed = None
    if args.seed is not None:
        try:
            seed = bytes.fromhex(args.seed)
        except ValueError:
            raise InvalidSeed("Seed must be 64 hex characters.") from None
    kp = crypto.keygen(seed)
    if args.out:
        save_key(args.out, kp)
    print(f"public_key: {kp.public_key.hex()}")
    print(f"account: {kp.account.hex()}")
    return 0


def _metadata(pairs) -> dict[str, str]:
    meta = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise UsageError(f"--meta expects key=value, got {pair!r}")
        meta[key] = value
    return meta


def cmd_issue(args) -> int:
    service = _service(args)
    key = _key(args)
    document = Path(args.document).read_bytes()
    doc_hash = crypto.hash_document(document)
    payload = IssuePayload(args.amount, args.maturity, _metadata(args.meta), doc_hash,
                           crypto.sign(key.secret_key, doc_hash))
    _emit(service.issue(_sign(service, key, TxKind.ISSUE_CERTIFICATE, payload)))
    return 0


def cmd_verify(args) -> int:
    service = _service(args)
    document = Path(args.document).read_bytes() if args.document else None
    result = service.verify(args.id, args.at, document)
    reg = result["registry"]
    detail = f"status={reg['status']} maturity={reg['maturity_date']} at={result['at']}"
    if reg["document_valid"] is not None:
        detail += f" document={'ok' if reg['document_valid'] else 'mismatch'}"
    tr = result["transparency"]
    print(f"registry: {'PASS' if result['registry_pass'] else 'FAIL'} ({detail})")
    print(f"transparency: {'PASS' if result['transparency_pass'] else 'FAIL'} "
          f"(sct={'ok' if tr['sct_valid'] else 'missing'} included={'yes' if tr['included'] else 'no'} "
          f"audit={'ok' if tr['sct_audit'] else 'fail'})")
    print(f"overall: {'PASS' if result['overall'] else 'FAIL'}")
    return 0 if result["overall"] else 1


def cmd_revoke(args) -> int:
    service = _service(args)
    key = _key(args)
    _emit(service.revoke(args.id, _sign(service, key, TxKind.REVOKE_CERTIFICATE, RevokePayload(args.id))))
    return 0


def cmd_anomaly(args) -> int:
    service = _service(args)
    key = _key(args)
    tx = _sign(service, key, TxKind.DETECT_ANOMALY, AnomalyPayload(args.id, args.description))
    _emit(service.detect_anomaly(args.id, tx))
    return 0


def cmd_transfer(args) -> int:
    service = _service(args)
    key = _key(args)
    try:
        recipient = bytes.fromhex(args.to)
    except ValueError:
        recipient = b""
    if len(recipient) != 20:
        raise UsageError("--to must be a 20-byte hex account id")
    _emit(service.transfer(_sign(service, key, TxKind.WALLET_TRANSFER, TransferPayload(recipient, args.amount))))
    return 0


def cmd_ct_prove(args) -> int:
    service = _service(args)
    if args.leaf:
        leaf_hash = bytes.fromhex(args.leaf)
    elif args.id is not None:
        cert = service.node.registry.get(args.id)
        sct = service.ctlog.get_sct(cert.document_hash)
        if sct is None:
            print("certificate has no SCT", file=sys.stderr)
            return 1
        leaf_hash = sct.leaf_hash
    else:
        raise UsageError("ct-prove needs --id or --leaf")
    out = service.ct_prove(leaf_hash, args.size)
    proof = merkle.InclusionProof.from_json(out["proof"])
    entry = service.ctlog.get_entries(proof.leaf_index, proof.leaf_index + 1)[0]
    ok = merkle.verify_inclusion(service.ctlog.root_at(proof.tree_size), entry.leaf_bytes(), proof)
    out["verified"] = ok
    _emit(out)
    return 0 if ok else 1


def cmd_ct_audit(args) -> int:
    service = _service(args)
    result = service.verify(args.id, args.at)
    tr = result["transparency"]
    alerts = service.monitor_poll() if service.monitor.watched_issuers else []
    print(f"sct: {'PASS' if tr['sct_valid'] and tr['sct_audit'] else 'FAIL'}")
    print(f"inclusion: {'PASS' if tr['included'] else 'FAIL'}")
    for alert in alerts:
        print(f"alert: {alert['kind']} {alert['message']}")
    return 0 if result["transparency_pass"] and not alerts else 1


def cmd_sentinel_report(args) -> int:
    service = _service(args)
    if args.events:
        for event in load_events(args.events):
            service.ingest(event)
    if args.enforce:
        out = service.enforce(args.end, args.length)
    else:
        out = {"report": service.report(args.end, args.length).to_json()}
    if args.compliance:
        out["compliance"] = service.compliance()
    _emit(out)
    return 0


def cmd_replay(args) -> int:
    cfg = _config(args)
    path = Path(args.chain) if args.chain else Path(cfg.data_dir) / "chain.bin"
    node = Node.replay(path)
    print(f"height: {node.height}")
    print(f"state_digest: {node.state_digest().hex()}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    serve(_config(args))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smartcert", description="Smart certificate node tools.")
    parser.add_argument("--config", help=f"INI config file (overridden by ${CONFIG_ENV})")
    parser.add_argument("--data-dir", help="node data directory")
    parser.add_argument("--listen", help="host:port for serve")
    parser.add_argument("--key", help="key file holding a hex seed")
    parser.add_argument("--now", type=int, help="override the clock (unix seconds)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate a key pair")
    p.add_argument("--seed", help="32-byte hex seed")
    p.add_argument("--out", help="write the seed to this key file")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("issue", help="issue a certificate and log it")
    p.add_argument("--amount", type=int, required=True)
    p.add_argument("--maturity", type=int, required=True)
    p.add_argument("--document", required=True)
    p.add_argument("--meta", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_issue)

    p = sub.add_parser("verify", help="registry + transparency verification")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--at", type=int)
    p.add_argument("--document")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("revoke")
    p.add_argument("--id", type=int, required=True)
    p.set_defaults(func=cmd_revoke)

    p = sub.add_parser("anomaly")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--description", required=True)
    p.set_defaults(func=cmd_anomaly)

    p = sub.add_parser("transfer")
    p.add_argument("--to", required=True)
    p.add_argument("--amount", type=int, required=True)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("ct-prove", help="inclusion proof for a logged certificate")
    p.add_argument("--id", type=int)
    p.add_argument("--leaf")
    p.add_argument("--size", type=int)
    p.set_defaults(func=cmd_ct_prove)

    p = sub.add_parser("ct-audit", help="audit a certificate's SCT and poll the monitor")
    p.add_argument("--id", type=int, required=True)
    p.add_argument("--at", type=int)
    p.set_defaults(func=cmd_ct_audit)

    p = sub.add_parser("sentinel-report", help="correlate events into a risk report")
    p.add_argument("--events", help="JSON-lines event feed")
    p.add_argument("--end", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--enforce", action="store_true")
    p.add_argument("--compliance", action="store_true")
    p.set_defaults(func=cmd_sentinel_report)

    p = sub.add_parser("replay", help="rebuild state from the chain file")
    p.add_argument("--chain", help="chain file (default <data-dir>/chain.bin)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{exc.code}: {exc.message}", file=sys.stderr)
        return 2
    except SmartCertError as exc:
        print(f"{type(exc).__name__}: {exc.message}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
