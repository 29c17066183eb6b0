"""Certificate Transparency log, monitor and SCT auditor.

Entries are incorporated into the Merkle tree at submission time (merge
delay 0). Auditors still accept a maximum merge delay so they can judge
logs that do not.
"""

from __future__ import annotations

import enum
import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from . import crypto, merkle
from .crypto import Digest, KeyPair
from .encoding import Writer
from .errors import IndexOutOfRange, NotFound
from .merkle import ConsistencyProof, InclusionProof, MerkleTree
from .registry import Registry


@dataclass(frozen=True)
class LogEntry:
    certificate_hash: Digest
    metadata: dict[str, str]
    submitted_at: int

    def leaf_bytes(self) -> bytes:
        return (Writer().fixed(self.certificate_hash, 32).str_map(self.metadata)
                .u64(self.submitted_at).getvalue())

    def to_json(self) -> dict:
        return {"certificate_hash": self.certificate_hash.hex(), "metadata": dict(self.metadata),
                "submitted_at": self.submitted_at}

    @classmethod
    def from_json(cls, d: dict) -> "LogEntry":
        return cls(bytes.fromhex(d["certificate_hash"]),
                   {str(k): str(v) for k, v in d.get("metadata", {}).items()},
                   int(d["submitted_at"]))


@dataclass(frozen=True)
class SignedCertificateTimestamp:
    log_id: Digest
    timestamp: int
    leaf_hash: Digest
    log_signature: bytes

    def signed_digest(self) -> Digest:
        return sct_digest(self.log_id, self.timestamp, self.leaf_hash)

    def to_json(self) -> dict:
        return {"log_id": self.log_id.hex(), "timestamp": self.timestamp,
                "leaf_hash": self.leaf_hash.hex(), "log_signature": self.log_signature.hex()}

    @classmethod
    def from_json(cls, d: dict) -> "SignedCertificateTimestamp":
        return cls(bytes.fromhex(d["log_id"]), int(d["timestamp"]), bytes.fromhex(d["leaf_hash"]),
                   bytes.fromhex(d["log_signature"]))


@dataclass(frozen=True)
class SignedTreeHead:
    tree_size: int
    root: Digest
    timestamp: int
    log_signature: bytes

    def to_json(self) -> dict:
        return {"tree_size": self.tree_size, "root": self.root.hex(), "timestamp": self.timestamp,
                "log_signature": self.log_signature.hex()}

    @classmethod
    def from_json(cls, d: dict) -> "SignedTreeHead":
        return cls(int(d["tree_size"]), bytes.fromhex(d["root"]), int(d["timestamp"]),
                   bytes.fromhex(d["log_signature"]))


def sct_digest(log_id: Digest, timestamp: int, leaf_hash: Digest) -> Digest:
    return crypto.sha256(Writer().text("sct").fixed(log_id, 32).u64(timestamp).fixed(leaf_hash, 32).getvalue())


def sth_digest(tree_size: int, root: Digest, timestamp: int) -> Digest:
    return crypto.sha256(Writer().text("sth").u64(tree_size).fixed(root, 32).u64(timestamp).getvalue())


def log_id_for(public_key: bytes) -> Digest:
    return crypto.sha256(public_key)


def verify_sct(log_public_key: bytes, sct: SignedCertificateTimestamp) -> bool:
    if sct.log_id != log_id_for(log_public_key):
        return False
    return crypto.verify(log_public_key, sct.signed_digest(), sct.log_signature)


def verify_sth(log_public_key: bytes, sth: SignedTreeHead) -> bool:
    return crypto.verify(log_public_key, sth_digest(sth.tree_size, sth.root, sth.timestamp), sth.log_signature)


class LogView(Protocol):
    """Read side of a log, local or remote."""

    public_key: bytes

    def latest_sth(self) -> SignedTreeHead: ...

    def get_entries(self, start: int, end: int) -> list[LogEntry]: ...

    def prove_entry(self, leaf_hash: Digest, tree_size: int | None = None) -> InclusionProof: ...

    def consistency(self, old_size: int, new_size: int) -> ConsistencyProof: ...

    def get_sct(self, certificate_hash: Digest) -> SignedCertificateTimestamp | None: ...


class CTLog:
    """An append-only CT log backed by a Merkle tree and a dedicated signing key.

    With ``path`` set, entries are appended to a JSON-lines file and reloaded
    on construction, so SCTs and STHs are reproducible across restarts.
    """

    def __init__(self, key_pair: KeyPair, path: str | os.PathLike | None = None):
        self.key_pair = key_pair
        self.public_key = key_pair.public_key
        self.log_id = log_id_for(key_pair.public_key)
        self._tree = MerkleTree()
        self._entries: list[LogEntry] = []
        self._index_by_leaf: dict[Digest, int] = {}
        self._index_by_cert: dict[Digest, int] = {}
        self._lock = threading.Lock()
        self.path = Path(path) if path is not None else None
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self._incorporate(LogEntry.from_json(json.loads(line)))

    @property
    def size(self) -> int:
        return self._tree.size

    def _incorporate(self, entry: LogEntry) -> int:
        index = self._tree.append(entry.leaf_bytes())
        self._entries.append(entry)
        self._index_by_leaf.setdefault(self._tree.leaf_hash_at(index), index)
        self._index_by_cert[entry.certificate_hash] = index
        return index

    def _sct_for(self, index: int) -> SignedCertificateTimestamp:
        entry = self._entries[index]
        lh = self._tree.leaf_hash_at(index)
        sig = crypto.sign(self.key_pair.secret_key, sct_digest(self.log_id, entry.submitted_at, lh))
        return SignedCertificateTimestamp(self.log_id, entry.submitted_at, lh, sig)

    def submit_entry(self, entry: LogEntry) -> SignedCertificateTimestamp:
        with self._lock:
            index = self._index_by_cert.get(entry.certificate_hash)
            if index is None:
                index = self._incorporate(entry)
                if self.path is not None:
                    with open(self.path, "a") as fh:
                        fh.write(json.dumps(entry.to_json(), sort_keys=True) + "\n")
            return self._sct_for(index)

    def get_sct(self, certificate_hash: Digest) -> SignedCertificateTimestamp | None:
        index = self._index_by_cert.get(certificate_hash)
        return None if index is None else self._sct_for(index)

    def latest_sth(self, timestamp: int | None = None) -> SignedTreeHead:
        with self._lock:
            size = self._tree.size
            root = self._tree.root()
            if timestamp is None:
                timestamp = self._entries[-1].submitted_at if self._entries else 0
        sig = crypto.sign(self.key_pair.secret_key, sth_digest(size, root, timestamp))
        return SignedTreeHead(size, root, timestamp, sig)

    def root_at(self, tree_size: int) -> Digest:
        return self._tree.root_at(tree_size)

    def get_entries(self, start: int, end: int) -> list[LogEntry]:
        if not 0 <= start <= end <= self.size:
            raise IndexOutOfRange(f"entries range [{start}, {end}) out of range (size {self.size})")
        return list(self._entries[start:end])

    def leaf_index(self, leaf_hash: Digest) -> int:
        index = self._index_by_leaf.get(leaf_hash)
        if index is None:
            raise NotFound("Leaf is not in the log.")
        return index

    def prove_entry(self, leaf_hash: Digest, tree_size: int | None = None) -> InclusionProof:
        size = self.size if tree_size is None else tree_size
        if not 0 < size <= self.size:
            raise IndexOutOfRange(f"tree size {size} out of range (size {self.size})")
        index = self.leaf_index(leaf_hash)
        if index >= size:
            raise NotFound("Leaf is not within the requested tree size.")
        return self._tree.inclusion_proof(index, size)

    def consistency(self, old_size: int, new_size: int) -> ConsistencyProof:
        return self._tree.consistency_proof(old_size, new_size)


@dataclass(frozen=True)
class TransparencyReport:
    certificate_id: int
    document_hash: Digest
    signature_valid: bool
    sct_valid: bool
    included: bool
    revoked: bool

    @property
    def transparent(self) -> bool:
        return self.signature_valid and self.sct_valid and self.included

    def __bool__(self) -> bool:
        return self.transparent

    def to_json(self) -> dict:
        return {"certificate_id": self.certificate_id, "document_hash": self.document_hash.hex(),
                "signature_valid": self.signature_valid, "sct_valid": self.sct_valid,
                "included": self.included, "revoked": self.revoked, "transparent": self.transparent}


def verify_certificate_transparency(registry: Registry, log_view: LogView, certificate_id: int) -> TransparencyReport:
    """Registry signature facts, SCT presence and inclusion at the latest STH.

    Revocation does not change the transparency verdict (the log is
    append-only); it is reported alongside.
    """
    cert = registry.get(certificate_id)
    sig_ok = crypto.verify(cert.issuer_public_key, cert.document_hash, cert.issuer_signature)
    sct = log_view.get_sct(cert.document_hash)
    sct_ok = sct is not None and verify_sct(log_view.public_key, sct)
    included = False
    if sct_ok:
        included = _included(log_view, sct.leaf_hash, cert.document_hash)
    return TransparencyReport(certificate_id, cert.document_hash, sig_ok, sct_ok, included, cert.is_revoked)


def _included(log_view: LogView, leaf_hash: Digest, certificate_hash: Digest | None) -> bool:
    sth = log_view.latest_sth()
    if not verify_sth(log_view.public_key, sth) or sth.tree_size == 0:
        return False
    try:
        proof = log_view.prove_entry(leaf_hash, sth.tree_size)
        entry = log_view.get_entries(proof.leaf_index, proof.leaf_index + 1)[0]
    except (NotFound, IndexOutOfRange):
        return False
    if certificate_hash is not None and entry.certificate_hash != certificate_hash:
        return False
    return merkle.verify_inclusion(sth.root, entry.leaf_bytes(), proof)


# -- monitor --------------------------------------------------------------------------

class AlertKind(enum.Enum):
    MISISSUANCE = "MisissuanceAlert"
    CONSISTENCY = "ConsistencyAlert"
    BAD_STH = "BadSignatureAlert"


@dataclass(frozen=True)
class MonitorAlert:
    kind: AlertKind
    severity: int
    message: str
    leaf_index: int | None = None
    certificate_hash: Digest | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "severity": self.severity, "message": self.message}
        if self.leaf_index is not None:
            out["leaf_index"] = self.leaf_index
        if self.certificate_hash is not None:
            out["certificate_hash"] = self.certificate_hash.hex()
        return out


@dataclass
class CTMonitor:
    """Watches a log for entries naming watched issuers that were not expected.

    ``expected`` is the legitimate issuance feed: certificate hashes each
    watched issuer (hex account id) actually issued.
    """

    watched_issuers: set[str]
    expected: dict[str, set[Digest]] = field(default_factory=dict)
    issuer_key: str = "issuer"
    last_sth: SignedTreeHead | None = None
    next_index: int = 0

    def expect(self, issuer: str, certificate_hash: Digest) -> None:
        self.expected.setdefault(issuer, set()).add(certificate_hash)

    def poll(self, log_view: LogView) -> list[MonitorAlert]:
        alerts: list[MonitorAlert] = []
        sth = log_view.latest_sth()
        if not verify_sth(log_view.public_key, sth):
            return [MonitorAlert(AlertKind.BAD_STH, 9, "Signed tree head signature does not verify.")]
        old = self.last_sth
        if old is not None and old.tree_size > 0:
            if sth.tree_size < old.tree_size:
                return [MonitorAlert(AlertKind.CONSISTENCY, 10,
                                     f"Log shrank from {old.tree_size} to {sth.tree_size} entries.")]
            try:
                proof = log_view.consistency(old.tree_size, sth.tree_size)
                consistent = merkle.verify_consistency(old.root, sth.root, proof)
            except IndexOutOfRange:
                consistent = False
            if not consistent:
                return [MonitorAlert(AlertKind.CONSISTENCY, 10,
                                     f"Tree head of size {sth.tree_size} is not an extension of size {old.tree_size}.")]
        start = self.next_index
        if sth.tree_size > start:
            for offset, entry in enumerate(log_view.get_entries(start, sth.tree_size)):
                issuer = entry.metadata.get(self.issuer_key)
                if issuer in self.watched_issuers and entry.certificate_hash not in self.expected.get(issuer, ()):
                    alerts.append(MonitorAlert(
                        AlertKind.MISISSUANCE, 8,
                        f"Unexpected certificate logged for watched issuer {issuer}.",
                        leaf_index=start + offset, certificate_hash=entry.certificate_hash))
        self.last_sth = sth
        self.next_index = max(self.next_index, sth.tree_size)
        return alerts


def audit_sct(sct: SignedCertificateTimestamp, leaf: bytes, log_view: LogView) -> bool:
    """Client-side SCT check: signature valid and leaf incorporated at the latest STH.

    Use ``merge_delay_violated`` to tell a pending SCT from a broken promise.
    """
    if not verify_sct(log_view.public_key, sct):
        return False
    if merkle.leaf_hash(leaf) != sct.leaf_hash:
        return False
    sth = log_view.latest_sth()
    if not verify_sth(log_view.public_key, sth) or sth.tree_size == 0:
        return False
    try:
        proof = log_view.prove_entry(sct.leaf_hash, sth.tree_size)
    except (NotFound, IndexOutOfRange):
        return False
    return merkle.verify_inclusion(sth.root, leaf, proof)


def merge_delay_violated(sct: SignedCertificateTimestamp, leaf: bytes, log_view: LogView, *,
                         now: int, max_merge_delay: int) -> bool:
    """True when the promise in ``sct`` is broken: deadline passed, leaf still absent."""
    return now > sct.timestamp + max_merge_delay and not audit_sct(sct, leaf, log_view)
