"""Simulated append-only ledger.

One node produces blocks from its mempool; any number of passive replicas
re-execute the same blocks and must land on the same state digest. There is
no consensus protocol, fork choice or fee market.

Chain file layout: ``MAGIC`` then one record per block,
``u32 length | canonical block bytes | sha256(block bytes)``.
"""

from __future__ import annotations

import enum
import os
import threading
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import crypto, merkle
from .crypto import AccountId, Digest, KeyPair
from .encoding import DecodeError, Reader, Writer
from .errors import (
    ForkDetected,
    InsufficientFunds,
    InvalidSignature,
    MalformedTransaction,
    SmartCertError,
    StaleNonce,
    StateDivergence,
    TimestampRegression,
    UnknownKind,
    WalletFrozen,
    ZeroAmount,
)
from .registry import ModelClient, ModelEndpoint, ModelResponse, Registry

MAGIC = b"SCCHAIN1"
ZERO_DIGEST = bytes(32)
DEFAULT_MAX_BLOCK_TXS = 100


class TxKind(enum.IntEnum):
    ISSUE_CERTIFICATE = 1
    REVOKE_CERTIFICATE = 2
    DETECT_ANOMALY = 3
    FREEZE_CERTIFICATE = 4
    WALLET_TRANSFER = 5
    RECORD_ALERT = 6

    @property
    def label(self) -> str:
        return _LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "TxKind":
        for kind, name in _LABELS.items():
            if name == label:
                return kind
        raise UnknownKind(f"Unknown transaction kind {label!r}.")


_LABELS = {
    TxKind.ISSUE_CERTIFICATE: "IssueCertificate",
    TxKind.REVOKE_CERTIFICATE: "RevokeCertificate",
    TxKind.DETECT_ANOMALY: "DetectAnomaly",
    TxKind.FREEZE_CERTIFICATE: "FreezeCertificate",
    TxKind.WALLET_TRANSFER: "WalletTransfer",
    TxKind.RECORD_ALERT: "RecordAlert",
}


# -- payloads -----------------------------------------------------------------

@dataclass(frozen=True)
class IssuePayload:
    deposit_amount: int
    maturity_date: int
    metadata: dict[str, str]
    document_hash: Digest
    issuer_signature: bytes

    def encode(self) -> bytes:
        return (Writer().u64(self.deposit_amount).u64(self.maturity_date).str_map(self.metadata)
                .fixed(self.document_hash, 32).fixed(self.issuer_signature, 64).getvalue())

    @classmethod
    def decode(cls, r: Reader) -> "IssuePayload":
        return cls(r.u64(), r.u64(), r.str_map(), r.fixed(32), r.fixed(64))

    def to_json(self) -> dict:
        return {"deposit_amount": self.deposit_amount, "maturity_date": self.maturity_date,
                "metadata": dict(self.metadata), "document_hash": self.document_hash.hex(),
                "issuer_signature": self.issuer_signature.hex()}

    @classmethod
    def from_json(cls, d: dict) -> "IssuePayload":
        return cls(int(d["deposit_amount"]), int(d["maturity_date"]), dict(d.get("metadata", {})),
                   bytes.fromhex(d["document_hash"]), bytes.fromhex(d["issuer_signature"]))


@dataclass(frozen=True)
class RevokePayload:
    certificate_id: int

    def encode(self) -> bytes:
        return Writer().u64(self.certificate_id).getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "RevokePayload":
        return cls(r.u64())

    def to_json(self) -> dict:
        return {"certificate_id": self.certificate_id}

    @classmethod
    def from_json(cls, d: dict) -> "RevokePayload":
        return cls(int(d["certificate_id"]))


@dataclass(frozen=True)
class AnomalyPayload:
    certificate_id: int
    description: str

    def encode(self) -> bytes:
        return Writer().u64(self.certificate_id).text(self.description).getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "AnomalyPayload":
        return cls(r.u64(), r.text())

    def to_json(self) -> dict:
        return {"certificate_id": self.certificate_id, "description": self.description}

    @classmethod
    def from_json(cls, d: dict) -> "AnomalyPayload":
        return cls(int(d["certificate_id"]), str(d["description"]))


@dataclass(frozen=True)
class FreezePayload:
    certificate_id: int
    reason: str

    def encode(self) -> bytes:
        return Writer().u64(self.certificate_id).text(self.reason).getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "FreezePayload":
        return cls(r.u64(), r.text())

    def to_json(self) -> dict:
        return {"certificate_id": self.certificate_id, "reason": self.reason}

    @classmethod
    def from_json(cls, d: dict) -> "FreezePayload":
        return cls(int(d["certificate_id"]), str(d.get("reason", "")))


@dataclass(frozen=True)
class TransferPayload:
    recipient: AccountId
    amount: int

    def encode(self) -> bytes:
        return Writer().fixed(self.recipient, 20).u64(self.amount).getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "TransferPayload":
        return cls(r.fixed(20), r.u64())

    def to_json(self) -> dict:
        return {"recipient": self.recipient.hex(), "amount": self.amount}

    @classmethod
    def from_json(cls, d: dict) -> "TransferPayload":
        return cls(bytes.fromhex(d["recipient"]), int(d["amount"]))


@dataclass(frozen=True)
class AlertPayload:
    """Anchors a sentinel alert on chain; state is untouched, the transaction is the record."""

    report_id: Digest
    kind: str
    audience: str
    message: str

    def encode(self) -> bytes:
        return Writer().fixed(self.report_id, 32).text(self.kind).text(self.audience).text(self.message).getvalue()

    @classmethod
    def decode(cls, r: Reader) -> "AlertPayload":
        return cls(r.fixed(32), r.text(), r.text(), r.text())

    def to_json(self) -> dict:
        return {"report_id": self.report_id.hex(), "kind": self.kind, "audience": self.audience,
                "message": self.message}

    @classmethod
    def from_json(cls, d: dict) -> "AlertPayload":
        return cls(bytes.fromhex(d["report_id"]), str(d["kind"]), str(d.get("audience", "")),
                   str(d.get("message", "")))


PAYLOAD_TYPES = {
    TxKind.ISSUE_CERTIFICATE: IssuePayload,
    TxKind.REVOKE_CERTIFICATE: RevokePayload,
    TxKind.DETECT_ANOMALY: AnomalyPayload,
    TxKind.FREEZE_CERTIFICATE: FreezePayload,
    TxKind.WALLET_TRANSFER: TransferPayload,
    TxKind.RECORD_ALERT: AlertPayload,
}


def decode_payload(kind: int, payload: bytes):
    try:
        cls = PAYLOAD_TYPES[TxKind(kind)]
    except ValueError:
        raise UnknownKind(f"Unknown transaction kind {kind}.") from None
    r = Reader(payload)
    out = cls.decode(r)
    r.finish()
    return out


# -- transactions ---------------------------------------------------------------

@dataclass(frozen=True)
class LedgerTransaction:
    nonce: int
    sender_public_key: bytes
    kind: int
    payload: bytes
    signature: bytes

    def signing_digest(self) -> Digest:
        return signing_digest(self.nonce, self.sender_public_key, self.kind, self.payload)

    def encode(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    def write(self, w: Writer) -> None:
        (w.u64(self.nonce).fixed(self.sender_public_key, 32).u8(self.kind)
         .blob(self.payload).fixed(self.signature, 64))

    @classmethod
    def read(cls, r: Reader) -> "LedgerTransaction":
        return cls(r.u64(), r.fixed(32), r.u8(), r.blob(), r.fixed(64))

    @classmethod
    def decode(cls, data: bytes) -> "LedgerTransaction":
        r = Reader(data)
        tx = cls.read(r)
        r.finish()
        return tx

    def digest(self) -> Digest:
        return crypto.sha256(self.encode())

    @property
    def sender(self) -> AccountId:
        return crypto.account_from_public_key(self.sender_public_key)

    def decoded_payload(self):
        return decode_payload(self.kind, self.payload)

    def to_json(self) -> dict:
        out = {
            "nonce": self.nonce,
            "sender_public_key": self.sender_public_key.hex(),
            "kind": TxKind(self.kind).label if self.kind in TxKind._value2member_map_ else self.kind,
            "payload": self.payload.hex(),
            "signature": self.signature.hex(),
        }
        try:
            out["decoded"] = self.decoded_payload().to_json()
        except SmartCertError:
            pass
        return out

    @classmethod
    def from_json(cls, d: dict) -> "LedgerTransaction":
        try:
            kind = d["kind"]
            kind = TxKind.from_label(kind) if isinstance(kind, str) else int(kind)
            return cls(int(d["nonce"]), bytes.fromhex(d["sender_public_key"]), int(kind),
                       bytes.fromhex(d["payload"]), bytes.fromhex(d["signature"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedTransaction(f"Malformed transaction: {exc}") from None


def signing_digest(nonce: int, sender_public_key: bytes, kind: int, payload: bytes) -> Digest:
    w = Writer().u64(nonce).fixed(sender_public_key, 32).u8(kind).blob(payload)
    return crypto.sha256(w.getvalue())


def make_transaction(key_pair: KeyPair, nonce: int, kind: TxKind, payload) -> LedgerTransaction:
    body = payload.encode() if hasattr(payload, "encode") else bytes(payload)
    digest = signing_digest(nonce, key_pair.public_key, int(kind), body)
    return LedgerTransaction(nonce, key_pair.public_key, int(kind), body,
                             crypto.sign(key_pair.secret_key, digest))


# -- receipts, blocks, genesis ------------------------------------------------------

@dataclass(frozen=True)
class Receipt:
    ok: bool
    code: str = "OK"
    message: str = ""
    certificate_id: int | None = None
    model_status: int | None = None
    model_body: str | None = None

    def write(self, w: Writer) -> None:
        w.boolean(self.ok).text(self.code).text(self.message)
        w.optional_u64(self.certificate_id).optional_u64(self.model_status)
        if self.model_body is None:
            w.u8(0)
        else:
            w.u8(1).text(self.model_body)

    @classmethod
    def read(cls, r: Reader) -> "Receipt":
        ok, code, message = r.boolean(), r.text(), r.text()
        cert_id, status = r.optional_u64(), r.optional_u64()
        flag = r.u8()
        if flag > 1:
            raise DecodeError("bad optional flag")
        body = r.text() if flag else None
        return cls(ok, code, message, cert_id, status, body)

    def encode(self) -> bytes:
        w = Writer()
        self.write(w)
        return w.getvalue()

    def to_json(self) -> dict:
        out = {"ok": self.ok, "code": self.code, "message": self.message}
        if self.certificate_id is not None:
            out["certificate_id"] = self.certificate_id
        if self.model_status is not None:
            out["model_status"] = self.model_status
            out["model_body"] = self.model_body
        return out

    def raise_for_error(self) -> None:
        if not self.ok:
            from .errors import error_from_code

            raise error_from_code(self.code, self.message)


@dataclass(frozen=True)
class GenesisConfig:
    timestamp: int = 0
    authority: AccountId | None = None
    balances: dict[AccountId, int] = field(default_factory=dict)
    model_endpoint: ModelEndpoint = field(default_factory=ModelEndpoint)

    def encode(self) -> bytes:
        w = Writer().u64(self.timestamp)
        if self.authority is None:
            w.u8(0)
        else:
            w.u8(1).fixed(self.authority, 20)
        w.text(self.model_endpoint.host).text(self.model_endpoint.path)
        w.u32(len(self.balances))
        for account in sorted(self.balances):
            w.fixed(account, 20).u64(self.balances[account])
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "GenesisConfig":
        r = Reader(data)
        ts = r.u64()
        flag = r.u8()
        if flag > 1:
            raise DecodeError("bad authority flag")
        authority = r.fixed(20) if flag else None
        endpoint = ModelEndpoint(r.text(), r.text())
        balances = {}
        for _ in range(r.u32()):
            account = r.fixed(20)
            balances[account] = r.u64()
        r.finish()
        return cls(ts, authority, balances, endpoint)


@dataclass(frozen=True)
class Block:
    height: int
    parent_digest: Digest
    timestamp: int
    transactions: tuple[LedgerTransaction, ...]
    receipts: tuple[Receipt, ...]
    tx_root: Digest
    state_digest: Digest
    genesis: bytes = b""

    def header_bytes(self) -> bytes:
        return (Writer().u64(self.height).fixed(self.parent_digest, 32).u64(self.timestamp)
                .fixed(self.tx_root, 32).fixed(receipts_root(self.receipts), 32)
                .fixed(self.state_digest, 32).fixed(crypto.sha256(self.genesis), 32).getvalue())

    def digest(self) -> Digest:
        return crypto.sha256(self.header_bytes())

    def encode(self) -> bytes:
        w = Writer().u64(self.height).fixed(self.parent_digest, 32).u64(self.timestamp)
        w.fixed(self.tx_root, 32).fixed(self.state_digest, 32).blob(self.genesis)
        w.u32(len(self.transactions))
        for tx in self.transactions:
            tx.write(w)
        w.u32(len(self.receipts))
        for receipt in self.receipts:
            receipt.write(w)
        return w.getvalue()

    @classmethod
    def decode(cls, data: bytes) -> "Block":
        r = Reader(data)
        height, parent, ts = r.u64(), r.fixed(32), r.u64()
        tx_root, state_digest, genesis = r.fixed(32), r.fixed(32), r.blob()
        n = r.u32()
        if n > r.remaining:
            raise DecodeError()
        txs = tuple(LedgerTransaction.read(r) for _ in range(n))
        m = r.u32()
        if m > r.remaining:
            raise DecodeError()
        receipts = tuple(Receipt.read(r) for _ in range(m))
        r.finish()
        return cls(height, parent, ts, txs, receipts, tx_root, state_digest, genesis)

    def to_json(self) -> dict:
        return {
            "height": self.height,
            "digest": self.digest().hex(),
            "parent_digest": self.parent_digest.hex(),
            "timestamp": self.timestamp,
            "tx_root": self.tx_root.hex(),
            "state_digest": self.state_digest.hex(),
            "transactions": [dict(tx.to_json(), digest=tx.digest().hex()) for tx in self.transactions],
            "receipts": [r.to_json() for r in self.receipts],
        }


def tx_root(transactions: Iterable[LedgerTransaction]) -> Digest:
    return merkle.root_of([tx.digest() for tx in transactions])


def receipts_root(receipts: Iterable[Receipt]) -> Digest:
    return merkle.root_of([r.encode() for r in receipts])


@dataclass(frozen=True)
class WalletEvent:
    sender: AccountId
    recipient: AccountId
    amount: int
    timestamp: int
    height: int
    tx_index: int
    tx_digest: Digest


# -- chain file ----------------------------------------------------------------------

def _record(block: Block) -> bytes:
    body = block.encode()
    return len(body).to_bytes(4, "big") + body + crypto.sha256(body)


def write_chain(path: str | os.PathLike, blocks: Iterable[Block]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for block in blocks:
            fh.write(_record(block))


def read_chain(path: str | os.PathLike) -> list[Block]:
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise StateDivergence("Chain file has a bad header.")
    pos, blocks = len(MAGIC), []
    while pos < len(data):
        if pos + 4 > len(data):
            raise StateDivergence(f"Chain file truncated at block {len(blocks)}.")
        length = int.from_bytes(data[pos:pos + 4], "big")
        body = data[pos + 4:pos + 4 + length]
        check = data[pos + 4 + length:pos + 36 + length]
        if len(body) != length or len(check) != 32:
            raise StateDivergence(f"Chain file truncated at block {len(blocks)}.")
        if crypto.sha256(body) != check:
            raise StateDivergence(f"Stored block {len(blocks)} does not match its checksum.")
        try:
            blocks.append(Block.decode(body))
        except DecodeError:
            raise StateDivergence(f"Block {len(blocks)} could not be decoded.") from None
        pos += 36 + length
    return blocks


# -- node --------------------------------------------------------------------------------

@dataclass
class _State:
    registry: Registry
    balances: dict[AccountId, int]
    nonces: dict[AccountId, int]

    def copy(self) -> "_State":
        return _State(self.registry.copy(), dict(self.balances), dict(self.nonces))

    def digest(self) -> Digest:
        w = Writer()
        self.registry.encode_state(w)
        w.u32(len(self.balances))
        for account in sorted(self.balances):
            w.fixed(account, 20).u64(self.balances[account])
        return crypto.sha256(w.getvalue())


class Node:
    """A ledger node: mempool, block production and deterministic replication."""

    def __init__(self, genesis: GenesisConfig, *, model_client: ModelClient | None = None,
                 max_block_txs: int = DEFAULT_MAX_BLOCK_TXS, chain_path: str | os.PathLike | None = None):
        self.genesis_config = genesis
        self.model_client = model_client
        self.max_block_txs = max_block_txs
        self.chain_path = Path(chain_path) if chain_path is not None else None
        self._state = _State(Registry(genesis.authority, genesis.model_endpoint),
                             dict(genesis.balances), {})
        self._mempool: deque[LedgerTransaction] = deque()
        self._pending_nonce: dict[AccountId, int] = {}
        self._lock = threading.Lock()
        self._listeners: list[Callable[[WalletEvent], None]] = []
        self.chain: list[Block] = []
        block0 = Block(0, ZERO_DIGEST, genesis.timestamp, (), (), merkle.root_of([]),
                       self._state.digest(), genesis.encode())
        self._append(block0)

    # -- views
    @property
    def registry(self) -> Registry:
        return self._state.registry

    @property
    def balances(self) -> dict[AccountId, int]:
        return dict(self._state.balances)

    @property
    def tip(self) -> Block:
        return self.chain[-1]

    @property
    def height(self) -> int:
        return self.tip.height

    @property
    def mempool(self) -> list[LedgerTransaction]:
        with self._lock:
            return list(self._mempool)

    def state_digest(self) -> Digest:
        return self._state.digest()

    def balance(self, account: AccountId) -> int:
        return self._state.balances.get(account, 0)

    def committed_nonce(self, account: AccountId) -> int:
        return self._state.nonces.get(account, 0)

    def next_nonce(self, account: AccountId) -> int:
        with self._lock:
            return max(self._state.nonces.get(account, 0), self._pending_nonce.get(account, 0)) + 1

    def subscribe(self, listener: Callable[[WalletEvent], None]) -> None:
        self._listeners.append(listener)

    def iter_transactions(self):
        """Yield (height, tx_index, tx, receipt) for every committed transaction."""
        for block in self.chain:
            for i, (tx, receipt) in enumerate(zip(block.transactions, block.receipts)):
                yield block.height, i, tx, receipt

    def find_transaction(self, digest: Digest):
        for height, i, tx, receipt in self.iter_transactions():
            if tx.digest() == digest:
                return height, i, tx, receipt
        return None

    # -- mempool
    def _check_admissible(self, tx: LedgerTransaction) -> AccountId:
        try:
            sender = tx.sender
        except SmartCertError:
            raise InvalidSignature("Sender public key is malformed.") from None
        if not crypto.verify(tx.sender_public_key, tx.signing_digest(), tx.signature):
            raise InvalidSignature()
        try:
            decode_payload(tx.kind, tx.payload)
        except DecodeError:
            raise MalformedTransaction("Transaction payload could not be decoded.") from None
        return sender

    def submit_transaction(self, tx: LedgerTransaction) -> Digest:
        """Admit a transaction to the mempool; raises the rejection reason."""
        sender = self._check_admissible(tx)
        with self._lock:
            last = max(self._state.nonces.get(sender, 0), self._pending_nonce.get(sender, 0))
            if tx.nonce <= last:
                raise StaleNonce(f"Nonce {tx.nonce} is not greater than {last}.")
            self._pending_nonce[sender] = tx.nonce
            self._mempool.append(tx)
        return tx.digest()

    # -- execution
    def _query_model(self, registry: Registry, certificate_id: int, description: str) -> ModelResponse:
        endpoint = registry.state.model_endpoint
        if self.model_client is None:
            return ModelResponse(503, "")
        try:
            return self.model_client.send(endpoint.host, endpoint.path,
                                          registry.anomaly_request_body(certificate_id, description))
        except Exception:  # transport failures become a recorded model error
            return ModelResponse(503, "")

    def _execute(self, state: _State, tx: LedgerTransaction, timestamp: int,
                 recorded: Receipt | None = None) -> tuple[Receipt, WalletEvent | None]:
        sender = tx.sender
        if tx.nonce <= state.nonces.get(sender, 0):
            err = StaleNonce(f"Nonce {tx.nonce} is not greater than {state.nonces.get(sender, 0)}.")
            return Receipt(False, err.code, err.message), None
        state.nonces[sender] = tx.nonce
        registry = state.registry
        model: ModelResponse | None = None
        try:
            payload = tx.decoded_payload()
            kind = TxKind(tx.kind)
            if kind is TxKind.ISSUE_CERTIFICATE:
                cert_id = registry.issue_certificate(
                    tx.sender_public_key, payload.deposit_amount, payload.maturity_date,
                    payload.metadata, payload.document_hash, payload.issuer_signature, timestamp)
                return Receipt(True, certificate_id=cert_id), None
            if kind is TxKind.REVOKE_CERTIFICATE:
                registry.revoke_certificate(sender, payload.certificate_id)
                return Receipt(True, certificate_id=payload.certificate_id), None
            if kind is TxKind.DETECT_ANOMALY:
                cert = registry.check_anomaly_preconditions(sender, payload.certificate_id)
                if recorded is None:
                    model = self._query_model(registry, payload.certificate_id, payload.description)
                elif recorded.model_status is None or recorded.model_body is None:
                    raise StateDivergence("Block lacks the recorded model response.")
                else:
                    model = ModelResponse(recorded.model_status, recorded.model_body)
                registry.apply_model_response(cert, payload.description, model)
                return Receipt(True, certificate_id=cert.id, model_status=model.status,
                               model_body=model.body), None
            if kind is TxKind.FREEZE_CERTIFICATE:
                registry.freeze_certificate(sender, payload.certificate_id, payload.reason)
                return Receipt(True, certificate_id=payload.certificate_id), None
            if kind is TxKind.RECORD_ALERT:
                registry.require_authority(sender)
                return Receipt(True), None
            # wallet transfer
            if payload.amount == 0:
                raise ZeroAmount()
            if registry.has_frozen(sender):
                raise WalletFrozen()
            if state.balances.get(sender, 0) < payload.amount:
                raise InsufficientFunds()
            state.balances[sender] -= payload.amount
            state.balances[payload.recipient] = state.balances.get(payload.recipient, 0) + payload.amount
            event = WalletEvent(sender, payload.recipient, payload.amount, timestamp, -1, -1, tx.digest())
            return Receipt(True), event
        except StateDivergence:
            raise
        except SmartCertError as err:
            if model is not None:
                return Receipt(False, err.code, err.message, model_status=model.status,
                               model_body=model.body), None
            return Receipt(False, err.code, err.message), None

    def dry_run(self, tx: LedgerTransaction, timestamp: int | None = None) -> Receipt:
        """Execute ``tx`` against a scratch copy of the state."""
        self._check_admissible(tx)
        ts = self.tip.timestamp if timestamp is None else timestamp
        receipt, _ = self._execute(self._state.copy(), tx, ts)
        return receipt

    def produce_block(self, timestamp: int) -> Block:
        if timestamp < self.tip.timestamp:
            raise TimestampRegression(
                f"Block timestamp {timestamp} is older than tip timestamp {self.tip.timestamp}.")
        with self._lock:
            batch = [self._mempool.popleft() for _ in range(min(self.max_block_txs, len(self._mempool)))]
            if not self._mempool:
                self._pending_nonce.clear()
        height = self.tip.height + 1
        receipts, events = [], []
        for i, tx in enumerate(batch):
            receipt, event = self._execute(self._state, tx, timestamp)
            receipts.append(receipt)
            if event is not None:
                events.append(_place(event, height, i))
        block = Block(height, self.tip.digest(), timestamp, tuple(batch), tuple(receipts),
                      tx_root(batch), self._state.digest())
        self._append(block)
        self._notify(events)
        return block

    def apply_block(self, block: Block) -> None:
        """Re-execute a block produced elsewhere and adopt it if it reproduces exactly."""
        tip = self.tip
        if block.height != tip.height + 1 or block.parent_digest != tip.digest():
            raise ForkDetected(f"Block {block.height} does not extend local tip {tip.height}.")
        if block.timestamp < tip.timestamp:
            raise TimestampRegression()
        if block.genesis:
            raise StateDivergence("Only the genesis block may carry genesis data.")
        if len(block.receipts) != len(block.transactions) or len(block.transactions) > self.max_block_txs:
            raise StateDivergence("Block receipts do not match its transactions.")
        if tx_root(block.transactions) != block.tx_root:
            raise StateDivergence("Transaction root mismatch.")
        for tx in block.transactions:
            try:
                self._check_admissible(tx)
            except SmartCertError:
                raise StateDivergence("Block contains an inadmissible transaction.") from None
        scratch = self._state.copy()
        events = []
        for i, (tx, recorded) in enumerate(zip(block.transactions, block.receipts)):
            receipt, event = self._execute(scratch, tx, block.timestamp, recorded)
            if receipt != recorded:
                raise StateDivergence(f"Receipt {i} of block {block.height} does not reproduce.")
            if event is not None:
                events.append(_place(event, block.height, i))
        if scratch.digest() != block.state_digest:
            raise StateDivergence(f"State digest mismatch at block {block.height}.")
        self._state = scratch
        with self._lock:
            committed = {tx.digest() for tx in block.transactions}
            self._mempool = deque(t for t in self._mempool if t.digest() not in committed)
        self._append(block)
        self._notify(events)

    def _append(self, block: Block) -> None:
        self.chain.append(block)
        if self.chain_path is not None:
            if block.height == 0 and not self.chain_path.exists():
                self.chain_path.parent.mkdir(parents=True, exist_ok=True)
                self.chain_path.write_bytes(MAGIC)
            if block.height > 0 or self.chain_path.stat().st_size == len(MAGIC):
                with open(self.chain_path, "ab") as fh:
                    fh.write(_record(block))

    def _notify(self, events: list[WalletEvent]) -> None:
        for event in events:
            for listener in self._listeners:
                listener(event)

    # -- persistence
    @classmethod
    def replay(cls, path: str | os.PathLike, *, model_client: ModelClient | None = None,
               max_block_txs: int = DEFAULT_MAX_BLOCK_TXS,
               listeners: Iterable[Callable[[WalletEvent], None]] = (),
               attach: bool = False) -> "Node":
        """Rebuild a node from a chain file; raises StateDivergence on any corruption.

        With ``attach`` the rebuilt node keeps appending to the same file.
        """
        blocks = read_chain(path)
        if not blocks:
            raise StateDivergence("Chain file holds no genesis block.")
        first = blocks[0]
        try:
            genesis = GenesisConfig.decode(first.genesis)
        except DecodeError:
            raise StateDivergence("Genesis block could not be decoded.") from None
        node = cls(genesis, model_client=model_client, max_block_txs=max_block_txs)
        if node.tip != first:
            raise StateDivergence("Genesis block does not reproduce.")
        for listener in listeners:
            node.subscribe(listener)
        for block in blocks[1:]:
            try:
                node.apply_block(block)
            except ForkDetected as err:
                raise StateDivergence(str(err)) from None
        if node.state_digest() != blocks[-1].state_digest:
            raise StateDivergence("Tip state digest does not reproduce.")
        if attach:
            node.chain_path = Path(path)
        return node

    @classmethod
    def open(cls, path: str | os.PathLike, genesis: GenesisConfig, **kwargs) -> "Node":
        """Replay ``path`` if it exists, otherwise start a fresh chain there."""
        if Path(path).exists():
            return cls.replay(path, attach=True, **kwargs)
        listeners = kwargs.pop("listeners", ())
        node = cls(genesis, chain_path=path, **kwargs)
        for listener in listeners:
            node.subscribe(listener)
        return node


def _place(event: WalletEvent, height: int, index: int) -> WalletEvent:
    return WalletEvent(event.sender, event.recipient, event.amount, event.timestamp, height, index, event.tx_digest)
