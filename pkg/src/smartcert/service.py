"""The node service: ledger, CT log and sentinel behind one object, plus the
FastAPI app exposing it over HTTP.

Every mutating request carries a transaction signed by the caller. The
service admits it, seals a block immediately and answers from the receipt.
"""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path
from typing import Callable

import httpx

from . import crypto, merkle
from .config import ServiceConfig, load_or_create_key
from .crypto import Digest
from .ctlog import (
    CTLog,
    CTMonitor,
    LogEntry,
    SignedCertificateTimestamp,
    SignedTreeHead,
    audit_sct,
    verify_certificate_transparency,
)
from .errors import IndexOutOfRange, MalformedTransaction, NotFound, SmartCertError
from .ledger import Block, LedgerTransaction, Node, Receipt, TxKind
from .merkle import ConsistencyProof, InclusionProof
from .model import HttpModelClient
from .registry import ModelClient
from .sentinel import (
    Alert,
    MonitoredEvent,
    Sentinel,
    compliance_check,
    enforcement_transactions,
    load_repository,
)

SIGNATURE_HEADER = "X-Node-Signature"


class SmartCertService:
    def __init__(self, config: ServiceConfig, *, clock: Callable[[], float] = time.time,
                 model_client: ModelClient | None = None):
        config.validate()
        self.config = config
        self.clock = clock
        data = Path(config.data_dir)
        data.mkdir(parents=True, exist_ok=True)
        self.node_key = load_or_create_key(data / "node.key")
        self.log_key = load_or_create_key(data / "log.key")
        self._alerts_path = data / "alerts.jsonl"
        repo = load_repository(config.repository_path) if config.repository_path else []
        self.policy = load_repository(config.policy_path) if config.policy_path else []
        self.sentinel = Sentinel(
            repo,
            authority=config.authority_key(),
            wallet_window=config.wallet_window,
            wallet_threshold=config.wallet_threshold,
            window_length=config.window_length,
            alert_threshold=config.alert_threshold,
            alert_sink=self._persist_alert,
        )
        if self._alerts_path.exists():
            self.sentinel.alerts = [Alert.from_json(json.loads(line))
                                    for line in self._alerts_path.read_text().splitlines() if line.strip()]
        if model_client is None and config.model_endpoint:
            model_client = HttpModelClient()
        self.node = Node.open(data / "chain.bin", config.genesis(), model_client=model_client,
                              max_block_txs=config.max_block_txs,
                              listeners=[self.sentinel.record_wallet_event])
        self.ctlog = CTLog(self.log_key, data / "ct.jsonl")
        self.monitor = CTMonitor(set(config.watched_issuers))
        self._lock = threading.RLock()

    # -- helpers
    def now(self) -> int:
        return int(self.clock())

    def _persist_alert(self, alert: Alert) -> None:
        with open(self._alerts_path, "a") as fh:
            fh.write(json.dumps(alert.to_json(), sort_keys=True) + "\n")

    def seal(self) -> Block:
        with self._lock:
            return self.node.produce_block(max(self.now(), self.node.tip.timestamp))

    def submit_and_seal(self, tx: LedgerTransaction) -> tuple[Block, Receipt]:
        with self._lock:
            digest = self.node.submit_transaction(tx)
            while True:
                block = self.seal()
                for t, receipt in zip(block.transactions, block.receipts):
                    if t.digest() == digest:
                        return block, receipt
                if not block.transactions:
                    raise SmartCertError("Transaction was not sealed.")

    def _expect_kind(self, tx: LedgerTransaction, kind: TxKind):
        if tx.kind != kind:
            raise MalformedTransaction(f"Expected a {kind.label} transaction.")
        return tx.decoded_payload()

    # -- operations
    def issue(self, tx: LedgerTransaction) -> dict:
        self._expect_kind(tx, TxKind.ISSUE_CERTIFICATE)
        with self._lock:
            block, receipt = self.submit_and_seal(tx)
            receipt.raise_for_error()
            cert = self.node.registry.get(receipt.certificate_id)
            entry = LogEntry(cert.document_hash,
                             {"certificate_id": str(cert.id), "issuer": cert.issuer.hex(),
                              "recipient": cert.metadata.get("recipient", "")},
                             block.timestamp)
            sct = self.ctlog.submit_entry(entry)
            self.monitor.expect(cert.issuer.hex(), cert.document_hash)
        return {"id": cert.id, "sct": sct.to_json(), "block": block.height, "tx_digest": tx.digest().hex()}

    def _mutate(self, tx: LedgerTransaction, kind: TxKind, certificate_id: int | None = None) -> dict:
        payload = self._expect_kind(tx, kind)
        if certificate_id is not None and payload.certificate_id != certificate_id:
            raise MalformedTransaction("Transaction certificate id does not match the request path.")
        block, receipt = self.submit_and_seal(tx)
        receipt.raise_for_error()
        return {"block": block.height, "tx_digest": tx.digest().hex(), "receipt": receipt.to_json()}

    def revoke(self, certificate_id: int, tx: LedgerTransaction) -> dict:
        return self._mutate(tx, TxKind.REVOKE_CERTIFICATE, certificate_id)

    def detect_anomaly(self, certificate_id: int, tx: LedgerTransaction) -> dict:
        return self._mutate(tx, TxKind.DETECT_ANOMALY, certificate_id)

    def transfer(self, tx: LedgerTransaction) -> dict:
        return self._mutate(tx, TxKind.WALLET_TRANSFER)

    def certificate(self, certificate_id: int) -> dict:
        return self.node.registry.get(certificate_id).to_json()

    def verify(self, certificate_id: int, at: int | None = None, document: bytes | None = None) -> dict:
        """Registry predicate + transparency + SCT audit, the full client-side check."""
        registry = self.node.registry
        at = self.now() if at is None else at
        registry_ok = registry.verify_certificate(certificate_id, at)
        document_ok = None if document is None else registry.verify_document(certificate_id, document)
        transparency = verify_certificate_transparency(registry, self.ctlog, certificate_id)
        cert = registry.get(certificate_id)
        sct = self.ctlog.get_sct(cert.document_hash)
        sct_ok = False
        if sct is not None:
            index = self.ctlog.leaf_index(sct.leaf_hash)
            leaf = self.ctlog.get_entries(index, index + 1)[0].leaf_bytes()
            sct_ok = audit_sct(sct, leaf, self.ctlog)
        registry_pass = registry_ok and document_ok is not False
        transparency_pass = transparency.transparent and sct_ok
        return {
            "certificate_id": certificate_id,
            "at": at,
            "registry": {"valid": registry_ok, "document_valid": document_ok,
                         "status": cert.status.value, "is_anomaly": cert.is_anomaly,
                         "maturity_date": cert.maturity_date},
            "transparency": dict(transparency.to_json(), sct_audit=sct_ok),
            "registry_pass": registry_pass,
            "transparency_pass": transparency_pass,
            "overall": registry_pass and transparency_pass,
        }

    def ct_prove(self, leaf_hash: Digest, size: int | None = None) -> dict:
        sth = self.ctlog.latest_sth()
        proof = self.ctlog.prove_entry(leaf_hash, size)
        return {"proof": proof.to_json(), "sth": sth.to_json()}

    def ingest(self, event: MonitoredEvent) -> list[dict]:
        return [m.to_json() for m in self.sentinel.ingest_event(event)]

    def report(self, end: int | None = None, length: int | None = None):
        return self.sentinel.correlate(self.now() if end is None else end, length)

    def enforce(self, end: int | None = None, length: int | None = None) -> dict:
        with self._lock:
            report = self.report(end, length)
            try:
                executed = self.sentinel.enforce(report, self.node, max(self.now(), self.node.tip.timestamp))
            finally:
                if self.node.mempool:
                    self.seal()
            committed = enforcement_transactions(self.node, report.report_id)
        return {"report": report.to_json(), "executed": [a.to_json() for a in executed],
                "on_chain": [{"height": h, "tx_index": i, "tx_digest": tx.digest().hex(), "receipt": r.to_json()}
                             for h, i, tx, r in committed]}

    def compliance(self) -> dict:
        with self._lock:
            try:
                flags = self.sentinel.compliance_check(self.node, self.policy, self.now())
            finally:
                if self.node.mempool:
                    self.seal()
        return {"flags": [f.to_json() for f in flags], "rules": len(self.policy)}

    def monitor_poll(self) -> list[dict]:
        return [a.to_json() for a in self.monitor.poll(self.ctlog)]


class HttpLogView:
    """LogView over the service's /ct endpoints."""

    def __init__(self, client: httpx.Client, public_key: bytes):
        self.client = client
        self.public_key = public_key

    def _get(self, path: str, **params):
        resp = self.client.get(path, params=params)
        if resp.status_code == 404:
            raise NotFound(resp.json().get("message"))
        if resp.status_code == 400 and resp.json().get("code") == IndexOutOfRange.code:
            raise IndexOutOfRange(resp.json().get("message"))
        resp.raise_for_status()
        return resp.json()

    def latest_sth(self) -> SignedTreeHead:
        return SignedTreeHead.from_json(self._get("/ct/sth"))

    def get_entries(self, start: int, end: int) -> list[LogEntry]:
        return [LogEntry.from_json(e) for e in self._get("/ct/entries", **{"from": start, "to": end})["entries"]]

    def prove_entry(self, leaf_hash: Digest, tree_size: int | None = None) -> InclusionProof:
        params = {"leaf": leaf_hash.hex()}
        if tree_size is not None:
            params["size"] = tree_size
        return InclusionProof.from_json(self._get("/ct/proof", **params)["proof"])

    def consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        return ConsistencyProof.from_json(self._get("/ct/consistency", first=old_size, second=new_size))

    def get_sct(self, certificate_hash: Digest) -> SignedCertificateTimestamp | None:
        try:
            return SignedCertificateTimestamp.from_json(self._get(f"/ct/sct/{certificate_hash.hex()}"))
        except NotFound:
            return None


def create_app(service: SmartCertService):
    from fastapi import Body, FastAPI, Query, Request
    from fastapi.responses import JSONResponse

    node_secret = service.node_key.secret_key

    class SignedJSONResponse(JSONResponse):
        def __init__(self, *args, **kwargs):
            super().__init__(*args, **kwargs)
            self.headers[SIGNATURE_HEADER] = crypto.sign(node_secret, crypto.sha256(self.body)).hex()

    app = FastAPI(title="smartcert", default_response_class=SignedJSONResponse)
    app.state.service = service

    @app.exception_handler(SmartCertError)
    async def _domain_error(request: Request, exc: SmartCertError):
        return SignedJSONResponse({"code": exc.code, "message": exc.message}, status_code=exc.http_status)

    def tx_from(body: dict) -> LedgerTransaction:
        if not isinstance(body, dict):
            raise MalformedTransaction("Request body must be a signed transaction object.")
        return LedgerTransaction.from_json(body.get("transaction", body))

    @app.get("/node")
    def node_info():
        return {"node_public_key": service.node_key.public_key.hex(),
                "log_public_key": service.log_key.public_key.hex(),
                "log_id": service.ctlog.log_id.hex(),
                "height": service.node.height,
                "state_digest": service.node.state_digest().hex(),
                "merkle_backend": merkle.backend()}

    @app.get("/accounts/{account}")
    def account(account: str):
        acct = _hex(account, 20)
        return {"account": account, "balance": service.node.balance(acct),
                "next_nonce": service.node.next_nonce(acct)}

    @app.post("/certificates", status_code=201)
    def issue(body: dict = Body(...)):
        return service.issue(tx_from(body))

    @app.get("/certificates/{certificate_id}")
    def get_certificate(certificate_id: int):
        return service.certificate(certificate_id)

    @app.get("/certificates/{certificate_id}/verify")
    def verify(certificate_id: int, at: int | None = None, document: str | None = None):
        return service.verify(certificate_id, at, bytes.fromhex(document) if document else None)

    @app.post("/certificates/{certificate_id}/revoke")
    def revoke(certificate_id: int, body: dict = Body(...)):
        return service.revoke(certificate_id, tx_from(body))

    @app.post("/certificates/{certificate_id}/anomaly")
    def anomaly(certificate_id: int, body: dict = Body(...)):
        return service.detect_anomaly(certificate_id, tx_from(body))

    @app.post("/wallet/transfer")
    def transfer(body: dict = Body(...)):
        return service.transfer(tx_from(body))

    @app.post("/ct/submit")
    def ct_submit(body: dict = Body(...)):
        try:
            entry = LogEntry.from_json(body)
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedTransaction(f"Malformed log entry: {exc}") from None
        return service.ctlog.submit_entry(entry).to_json()

    @app.get("/ct/sth")
    def ct_sth():
        return service.ctlog.latest_sth().to_json()

    @app.get("/ct/proof")
    def ct_proof(leaf: str, size: int | None = None):
        return service.ct_prove(_hex(leaf, 32), size)

    @app.get("/ct/entries")
    def ct_entries(start: int = Query(0, alias="from"), end: int | None = Query(None, alias="to")):
        end = service.ctlog.size if end is None else end
        return {"entries": [e.to_json() for e in service.ctlog.get_entries(start, end)]}

    @app.get("/ct/consistency")
    def ct_consistency(first: int, second: int):
        return service.ctlog.consistency(first, second).to_json()

    @app.get("/ct/sct/{certificate_hash}")
    def ct_sct(certificate_hash: str):
        sct = service.ctlog.get_sct(_hex(certificate_hash, 32))
        if sct is None:
            raise NotFound("No SCT for this certificate hash.")
        return sct.to_json()

    @app.post("/sentinel/events")
    def sentinel_events(body: dict | list = Body(...)):
        events = body if isinstance(body, list) else [body]
        out = []
        for raw in events:
            try:
                event = MonitoredEvent.from_json(raw)
            except (KeyError, ValueError, TypeError) as exc:
                raise MalformedTransaction(f"Malformed event: {exc}") from None
            out.extend(service.ingest(event))
        return {"matches": out}

    @app.get("/sentinel/alerts")
    def sentinel_alerts():
        return {"alerts": [a.to_json() for a in service.sentinel.alerts]}

    @app.get("/sentinel/report")
    def sentinel_report(end: int | None = None, length: int | None = None):
        return service.report(end, length).to_json()

    @app.post("/sentinel/enforce")
    def sentinel_enforce(end: int | None = None, length: int | None = None):
        return service.enforce(end, length)

    @app.get("/sentinel/compliance")
    def sentinel_compliance():
        return service.compliance()

    @app.get("/chain/blocks/{height}")
    def chain_block(height: int):
        if not 0 <= height <= service.node.height:
            raise NotFound(f"No block at height {height}.")
        return service.node.chain[height].to_json()

    return app


def _hex(text: str, size: int) -> bytes:
    try:
        raw = bytes.fromhex(text)
    except ValueError:
        raw = b""
    if len(raw) != size:
        raise MalformedTransaction(f"Expected {size} hex-encoded bytes.")
    return raw


def serve(config: ServiceConfig, **kwargs) -> None:
    import uvicorn

    service = SmartCertService(config, **kwargs)
    host, _, port = config.listen_address.rpartition(":")
    uvicorn.run(create_app(service), host=host, port=int(port))
