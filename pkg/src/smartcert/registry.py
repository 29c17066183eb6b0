"""Certificate-of-deposit registry: the deterministic certificate lifecycle.

The registry never reads a clock. Every time-dependent call takes ``now``
(the enclosing block timestamp when driven by the ledger). Preconditions are
checked in the same order as the reference contract so the first failing
condition decides the error, and no state is touched before all checks pass.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import Protocol

from . import crypto
from .crypto import AccountId, Digest, Signature
from .encoding import Writer
from .errors import (
    AlreadyRevoked,
    InvalidIssuerSignature,
    MaturityNotFuture,
    ModelError,
    NotAnomaly,
    NotAuthority,
    NotFound,
    NotOwner,
    RevokedCertificate,
    ZeroDeposit,
)

ANOMALY_PATH = "/detect_anomaly"


class CertificateStatus(enum.Enum):
    ACTIVE = "Active"
    REVOKED = "Revoked"
    FROZEN = "Frozen"


_STATUS_CODES = {CertificateStatus.ACTIVE: 0, CertificateStatus.REVOKED: 1, CertificateStatus.FROZEN: 2}


class EventKind(enum.Enum):
    ISSUED = "CertificateIssued"
    REVOKED = "CertificateRevoked"
    ANOMALY = "AnomalyDetected"
    FROZEN = "CertificateFrozen"
    UNFROZEN = "CertificateUnfrozen"


@dataclass
class CertificateRecord:
    id: int
    owner: AccountId
    issuer: AccountId
    issuer_public_key: bytes
    deposit_amount: int
    maturity_date: int
    metadata: dict[str, str]
    document_hash: Digest
    issuer_signature: Signature
    issued_at: int
    status: CertificateStatus = CertificateStatus.ACTIVE
    is_anomaly: bool = False

    @property
    def is_revoked(self) -> bool:
        return self.status is CertificateStatus.REVOKED

    def encode(self, w: Writer) -> None:
        (w.u64(self.id).fixed(self.owner, 20).fixed(self.issuer, 20)
         .fixed(self.issuer_public_key, 32).u64(self.deposit_amount).u64(self.maturity_date)
         .str_map(self.metadata).fixed(self.document_hash, 32).fixed(self.issuer_signature, 64)
         .u64(self.issued_at).u8(_STATUS_CODES[self.status]).boolean(self.is_anomaly))

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "owner": self.owner.hex(),
            "issuer": self.issuer.hex(),
            "issuer_public_key": self.issuer_public_key.hex(),
            "deposit_amount": self.deposit_amount,
            "maturity_date": self.maturity_date,
            "metadata": dict(self.metadata),
            "document_hash": self.document_hash.hex(),
            "issuer_signature": self.issuer_signature.hex(),
            "issued_at": self.issued_at,
            "status": self.status.value,
            "is_anomaly": self.is_anomaly,
        }


@dataclass(frozen=True)
class RegistryEvent:
    kind: EventKind
    certificate_id: int
    owner: AccountId | None = None
    deposit_amount: int | None = None
    maturity_date: int | None = None
    description: str | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind.value, "certificate_id": self.certificate_id}
        if self.owner is not None:
            out["owner"] = self.owner.hex()
        for name in ("deposit_amount", "maturity_date", "description"):
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out


@dataclass(frozen=True)
class ModelEndpoint:
    host: str = ""
    path: str = ANOMALY_PATH


@dataclass(frozen=True)
class ModelResponse:
    status: int
    body: str


class ModelClient(Protocol):
    def send(self, host: str, path: str, body: str) -> ModelResponse: ...


@dataclass
class RegistryState:
    authority: AccountId | None = None
    model_endpoint: ModelEndpoint = field(default_factory=ModelEndpoint)
    certificates: list[CertificateRecord] = field(default_factory=list)
    next_certificate_id: int = 0
    event_log: list[RegistryEvent] = field(default_factory=list)


class Registry:
    """Smart-certificate registry. Methods mirror the contract functions."""

    def __init__(self, authority: AccountId | None = None, model_endpoint: ModelEndpoint | None = None):
        self.state = RegistryState(authority=authority, model_endpoint=model_endpoint or ModelEndpoint())

    @property
    def certificates(self) -> list[CertificateRecord]:
        return self.state.certificates

    @property
    def next_certificate_id(self) -> int:
        return self.state.next_certificate_id

    @property
    def events(self) -> list[RegistryEvent]:
        return self.state.event_log

    def copy(self) -> "Registry":
        """Independent copy. Records are the only mutable parts; events are frozen."""
        clone = Registry.__new__(Registry)
        st = self.state
        clone.state = RegistryState(st.authority, st.model_endpoint,
                                    [dataclasses.replace(c, metadata=dict(c.metadata)) for c in st.certificates],
                                    st.next_certificate_id, list(st.event_log))
        return clone

    def get(self, certificate_id: int) -> CertificateRecord:
        if not 0 <= certificate_id < len(self.state.certificates):
            raise NotFound()
        return self.state.certificates[certificate_id]

    def owned_by(self, account: AccountId) -> list[CertificateRecord]:
        return [c for c in self.state.certificates if c.owner == account]

    def has_frozen(self, account: AccountId) -> bool:
        return any(c.status is CertificateStatus.FROZEN for c in self.owned_by(account))

    def _emit(self, event: RegistryEvent) -> None:
        self.state.event_log.append(event)

    def issue_certificate(
        self,
        caller_public_key: bytes,
        deposit_amount: int,
        maturity_date: int,
        metadata: dict[str, str],
        document_hash: Digest,
        issuer_signature: Signature,
        now: int,
    ) -> int:
        caller = crypto.account_from_public_key(caller_public_key)
        if not maturity_date > now:
            raise MaturityNotFuture()
        if not deposit_amount > 0:
            raise ZeroDeposit()
        if not crypto.verify(caller_public_key, document_hash, issuer_signature):
            raise InvalidIssuerSignature()
        cert_id = self.state.next_certificate_id
        self.state.certificates.append(CertificateRecord(
            id=cert_id,
            owner=caller,
            issuer=caller,
            issuer_public_key=bytes(caller_public_key),
            deposit_amount=deposit_amount,
            maturity_date=maturity_date,
            metadata=dict(metadata),
            document_hash=bytes(document_hash),
            issuer_signature=bytes(issuer_signature),
            issued_at=now,
        ))
        self.state.next_certificate_id += 1
        self._emit(RegistryEvent(EventKind.ISSUED, cert_id, owner=caller,
                                 deposit_amount=deposit_amount, maturity_date=maturity_date))
        return cert_id

    def verify_certificate(self, certificate_id: int, now: int) -> bool:
        cert = self.get(certificate_id)
        return not cert.is_revoked and cert.maturity_date <= now

    def verify_document(self, certificate_id: int, document: bytes) -> bool:
        cert = self.get(certificate_id)
        if crypto.hash_document(document) != cert.document_hash:
            return False
        return crypto.verify(cert.issuer_public_key, cert.document_hash, cert.issuer_signature)

    def revoke_certificate(self, caller: AccountId, certificate_id: int) -> None:
        cert = self.get(certificate_id)
        if cert.owner != caller:
            raise NotOwner("Only the owner can revoke the certificate.")
        if cert.is_revoked:
            raise AlreadyRevoked()
        cert.status = CertificateStatus.REVOKED
        self._emit(RegistryEvent(EventKind.REVOKED, certificate_id))

    def anomaly_request_body(self, certificate_id: int, description: str) -> str:
        return f"{description},{certificate_id}"

    def check_anomaly_preconditions(self, caller: AccountId, certificate_id: int) -> CertificateRecord:
        cert = self.get(certificate_id)
        if cert.owner != caller:
            raise NotOwner("Only the owner can detect anomalies.")
        if cert.is_revoked:
            raise RevokedCertificate("Certificate is revoked and cannot have anomalies.")
        return cert

    def detect_anomaly(self, caller: AccountId, certificate_id: int, description: str,
                       model_client: ModelClient | None) -> ModelResponse:
        """Ask the model endpoint about a certificate; flag it on an "Anomaly" verdict.

        Returns the model response so the ledger can record it for replicas.
        """
        cert = self.check_anomaly_preconditions(caller, certificate_id)
        endpoint = self.state.model_endpoint
        body = self.anomaly_request_body(certificate_id, description)
        if model_client is None:
            response = ModelResponse(503, "")
        else:
            try:
                response = model_client.send(endpoint.host, endpoint.path, body)
            except Exception:  # transport failure is a model error, never a crash in the apply loop
                response = ModelResponse(503, "")
        self.apply_model_response(cert, description, response)
        return response

    def apply_model_response(self, cert: CertificateRecord, description: str, response: ModelResponse) -> None:
        if response.status != 200:
            raise ModelError()
        if response.body != "Anomaly":
            raise NotAnomaly()
        cert.is_anomaly = True
        self._emit(RegistryEvent(EventKind.ANOMALY, cert.id, description=description))

    def require_authority(self, caller: AccountId) -> None:
        if self.state.authority is None or caller != self.state.authority:
            raise NotAuthority()

    def freeze_certificate(self, authority: AccountId, certificate_id: int, reason: str = "") -> CertificateStatus:
        """Toggle Active <-> Frozen. Only the configured sentinel authority may call this."""
        cert = self.get(certificate_id)
        self.require_authority(authority)
        if cert.is_revoked:
            raise RevokedCertificate("Certificate is revoked and cannot be frozen.")
        if cert.status is CertificateStatus.ACTIVE:
            cert.status = CertificateStatus.FROZEN
            self._emit(RegistryEvent(EventKind.FROZEN, certificate_id, description=reason))
        else:
            cert.status = CertificateStatus.ACTIVE
            self._emit(RegistryEvent(EventKind.UNFROZEN, certificate_id, description=reason))
        return cert.status

    def encode_state(self, w: Writer) -> None:
        w.u64(self.state.next_certificate_id)
        w.u32(len(self.state.certificates))
        for cert in self.state.certificates:
            cert.encode(w)

    def state_digest(self) -> Digest:
        w = Writer()
        self.encode_state(w)
        return crypto.sha256(w.getvalue())
