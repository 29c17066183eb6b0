"""Attack correlation: vulnerability repository, event matching, wallet
monitoring, risk scoring and enforcement through ledger transactions."""

from __future__ import annotations

import enum
import fnmatch
import json
import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import crypto
from .crypto import AccountId, Digest, KeyPair
from .errors import EnforcementFailed, OutOfOrderEvent, ParseError, RepoNotFound, SmartCertError
from .ledger import AlertPayload, FreezePayload, Node, TxKind, WalletEvent, make_transaction
from .registry import CertificateStatus

DEFAULT_WALLET_WINDOW = 60
DEFAULT_WALLET_THRESHOLD = 3
DEFAULT_WINDOW_LENGTH = 300
DEFAULT_ALERT_THRESHOLD = 0.5
HALT_SEVERITY = 8


class ThreatCategory(enum.Enum):
    CLIENT = "ClientVulnerability"
    CONSENSUS_MECHANISM = "ConsensusMechanismVulnerability"
    MINING_POOL = "MiningPoolVulnerability"
    NETWORK = "NetworkVulnerability"
    SMART_CONTRACT = "SmartContractVulnerability"


CATEGORY_ORDER = list(ThreatCategory)


class Layer(enum.Enum):
    MEDIA = "Media"
    WALLET = "Wallet"
    APPLICATION = "Application"
    SMART_CONTRACT = "SmartContract"


class Action(enum.IntEnum):
    NONE = 0
    ALERT = 1
    FREEZE = 2
    HALT = 3

    @property
    def label(self) -> str:
        return self.name.capitalize()


def pattern_matches(pattern: str, text: str) -> bool:
    """Case-insensitive substring match, or an anchored wildcard match when the
    pattern contains ``*``, ``?`` or ``[``."""
    p, t = pattern.lower(), text.lower()
    if any(ch in p for ch in "*?["):
        return fnmatch.fnmatchcase(t, p)
    return p in t


@dataclass(frozen=True)
class VulnerabilitySignature:
    id: str
    category: ThreatCategory
    pattern: str
    severity: int
    layer: Layer

    def __post_init__(self):
        if not self.pattern:
            raise ValueError("pattern must be non-empty")
        if isinstance(self.severity, bool) or not isinstance(self.severity, int) or not 1 <= self.severity <= 10:
            raise ValueError(f"severity must be an integer in 1..10, got {self.severity!r}")

    def matches(self, text: str) -> bool:
        return pattern_matches(self.pattern, text)

    def to_json(self) -> dict:
        return {"id": self.id, "category": self.category.value, "layer": self.layer.value,
                "pattern": self.pattern, "severity": self.severity}

    @classmethod
    def from_json(cls, d: dict) -> "VulnerabilitySignature":
        return cls(id=str(d["id"]), category=ThreatCategory(d["category"]), pattern=str(d["pattern"]),
                   severity=d["severity"], layer=Layer(d["layer"]))


def load_repository(path) -> list[VulnerabilitySignature]:
    path = Path(path)
    if not path.is_file():
        raise RepoNotFound(f"Vulnerability repository not found: {path}")
    signatures = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            signatures.append(VulnerabilitySignature.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(exc) or type(exc).__name__, line=lineno) from None
    return signatures


@dataclass(frozen=True)
class MonitoredEvent:
    source: Layer
    timestamp: int
    subject: str
    description: str
    attributes: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"source": self.source.value, "timestamp": self.timestamp, "subject": self.subject,
                "description": self.description, "attributes": dict(self.attributes)}

    @classmethod
    def from_json(cls, d: dict) -> "MonitoredEvent":
        return cls(Layer(d["source"]), int(d["timestamp"]), str(d.get("subject", "")),
                   str(d["description"]), {str(k): str(v) for k, v in d.get("attributes", {}).items()})


def load_events(path) -> list[MonitoredEvent]:
    events = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            events.append(MonitoredEvent.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(str(exc) or type(exc).__name__, line=lineno) from None
    return events


@dataclass(frozen=True)
class Match:
    event: MonitoredEvent
    signature: VulnerabilitySignature
    sequence: int = 0

    def to_json(self) -> dict:
        return {"event": self.event.to_json(), "signature": self.signature.to_json()}


@dataclass(frozen=True)
class AnomalyFinding:
    wallet: AccountId
    timestamp: int
    transfers: tuple[WalletEvent, ...]

    def to_json(self) -> dict:
        return {
            "wallet": self.wallet.hex(),
            "timestamp": self.timestamp,
            "transfers": [{"recipient": t.recipient.hex(), "amount": t.amount, "timestamp": t.timestamp,
                           "height": t.height, "tx_index": t.tx_index} for t in self.transfers],
        }


def noisy_or(severities: Iterable[int]) -> float:
    score = 1.0 - math.prod(1.0 - s / 10.0 for s in severities)
    return min(1.0, max(0.0, score))


def predict_category(matches: Sequence[Match]) -> ThreatCategory | None:
    if not matches:
        return None
    totals = defaultdict(int)
    for m in matches:
        totals[m.signature.category] += m.signature.severity
    best = max(totals.values())
    return next(c for c in CATEGORY_ORDER if totals.get(c) == best)


def noisy_or_predictor(matches: Sequence[Match]) -> tuple[float, ThreatCategory | None]:
    return noisy_or(m.signature.severity for m in matches), predict_category(matches)


Predictor = Callable[[Sequence[Match]], "tuple[float, ThreatCategory | None]"]


@dataclass(frozen=True)
class RiskReport:
    window: tuple[int, int]
    matched: tuple[Match, ...]
    findings: tuple[AnomalyFinding, ...]
    predicted_category: ThreatCategory | None
    score: float
    recommended_action: Action

    @property
    def report_id(self) -> Digest:
        body = json.dumps(self.summary(), sort_keys=True, separators=(",", ":"))
        return crypto.sha256(body.encode())

    def summary(self) -> dict:
        return {
            "window": list(self.window),
            "matched": [m.to_json() for m in self.matched],
            "findings": [f.to_json() for f in self.findings],
            "predicted_category": self.predicted_category.value if self.predicted_category else None,
            "score": self.score,
            "recommended_action": self.recommended_action.label,
        }

    def to_json(self) -> dict:
        return dict(self.summary(), report_id=self.report_id.hex())


@dataclass(frozen=True)
class Alert:
    kind: str
    message: str
    timestamp: int
    report_id: str = ""
    audience: str = "user"
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind, "message": self.message, "timestamp": self.timestamp,
                "report_id": self.report_id, "audience": self.audience, "details": self.details}

    @classmethod
    def from_json(cls, d: dict) -> "Alert":
        return cls(d["kind"], d["message"], int(d["timestamp"]), d.get("report_id", ""),
                   d.get("audience", "user"), d.get("details", {}))


@dataclass(frozen=True)
class ExecutedAction:
    action: Action
    certificate_id: int | None
    tx_digest: Digest
    report_id: Digest

    def to_json(self) -> dict:
        return {"action": self.action.label, "certificate_id": self.certificate_id,
                "tx_digest": self.tx_digest.hex(), "report_id": self.report_id.hex()}


@dataclass(frozen=True)
class ComplianceFlag:
    height: int
    tx_index: int
    tx_digest: Digest
    field: str
    rule_id: str

    def to_json(self) -> dict:
        return {"height": self.height, "tx_index": self.tx_index, "tx_digest": self.tx_digest.hex(),
                "field": self.field, "rule_id": self.rule_id}


def _report_reason(report_id: Digest) -> str:
    return f"report:{report_id.hex()}"


class Sentinel:
    """Attack correlator fed by monitored events and ledger wallet events."""

    def __init__(
        self,
        repository: Iterable[VulnerabilitySignature] = (),
        *,
        authority: KeyPair | None = None,
        wallet_window: int = DEFAULT_WALLET_WINDOW,
        wallet_threshold: int = DEFAULT_WALLET_THRESHOLD,
        window_length: int = DEFAULT_WINDOW_LENGTH,
        alert_threshold: float = DEFAULT_ALERT_THRESHOLD,
        halt_severity: int = HALT_SEVERITY,
        predictor: Predictor = noisy_or_predictor,
        alert_sink: Callable[[Alert], None] | None = None,
    ):
        if wallet_window <= 0 or wallet_threshold < 1 or window_length <= 0:
            raise ValueError("window lengths and wallet threshold must be positive")
        if not 0.0 <= alert_threshold <= 1.0:
            raise ValueError("alert_threshold must be in [0, 1]")
        self.repository = list(repository)
        self.authority = authority
        self.wallet_window = wallet_window
        self.wallet_threshold = wallet_threshold
        self.window_length = window_length
        self.alert_threshold = alert_threshold
        self.halt_severity = halt_severity
        self.predictor = predictor
        self.alert_sink = alert_sink
        self.alerts: list[Alert] = []
        self._matches: list[Match] = []
        self._findings: list[AnomalyFinding] = []
        self._last_ts: dict[Layer, int] = {}
        self._seq = 0
        self._counterparties: dict[AccountId, set[AccountId]] = defaultdict(set)
        self._new_transfers: dict[AccountId, list[WalletEvent]] = defaultdict(list)
        self._lock = threading.Lock()

    # -- ingestion
    def ingest_event(self, event: MonitoredEvent) -> list[Match]:
        with self._lock:
            last = self._last_ts.get(event.source)
            if last is not None and event.timestamp < last:
                raise OutOfOrderEvent()
            self._last_ts[event.source] = event.timestamp
            found = []
            for sig in self.repository:
                if sig.layer is event.source and sig.matches(event.description):
                    found.append(Match(event, sig, self._seq))
                    self._seq += 1
            self._matches.extend(found)
            return found

    def record_wallet_event(self, event: WalletEvent) -> AnomalyFinding | None:
        """Ledger listener. Tracks counterparties and runs the wallet rule."""
        with self._lock:
            seen = self._counterparties[event.sender]
            if event.recipient not in seen:
                self._new_transfers[event.sender].append(event)
                seen.add(event.recipient)
        finding = self.wallet_rule(event.sender, event.timestamp)
        if finding is not None:
            with self._lock:
                self._findings.append(finding)
        return finding

    def wallet_rule(self, wallet: AccountId, now: int) -> AnomalyFinding | None:
        with self._lock:
            recent = tuple(e for e in self._new_transfers.get(wallet, ())
                           if now - self.wallet_window < e.timestamp <= now)
        if len(recent) >= self.wallet_threshold:
            return AnomalyFinding(wallet, now, recent)
        return None

    @property
    def matches(self) -> list[Match]:
        return list(self._matches)

    @property
    def findings(self) -> list[AnomalyFinding]:
        return list(self._findings)

    # -- correlation
    def correlate(self, window_end: int, window_length: int | None = None) -> RiskReport:
        length = self.window_length if window_length is None else window_length
        start = window_end - length
        with self._lock:
            matched = tuple(m for m in self._matches if start <= m.event.timestamp <= window_end)
            latest: dict[AccountId, AnomalyFinding] = {}
            for f in self._findings:
                if start <= f.timestamp <= window_end:
                    latest[f.wallet] = f
        findings = tuple(latest.values())
        return self.build_report((start, window_end), matched, findings)

    def build_report(self, window, matched, findings=()) -> RiskReport:
        score, category = self.predictor(matched)
        action = Action.NONE
        if score >= self.alert_threshold:
            action = Action.ALERT
        if findings:
            action = Action.FREEZE
        if any(m.signature.layer is Layer.SMART_CONTRACT and m.signature.severity >= self.halt_severity
               for m in matched):
            action = Action.HALT
        return RiskReport(tuple(window), tuple(matched), tuple(findings), category, score, action)

    # -- enforcement
    def _record_alert(self, alert: Alert) -> None:
        self.alerts.append(alert)
        if self.alert_sink is not None:
            self.alert_sink(alert)

    def _halt_targets(self, report: RiskReport, node: Node) -> list[int]:
        registry = node.registry
        targets: list[int] = []
        for m in report.matched:
            if m.signature.layer is not Layer.SMART_CONTRACT or m.signature.severity < self.halt_severity:
                continue
            subject = m.event.subject.strip()
            if subject.isdigit():
                ids = [int(subject)]
            else:
                try:
                    account = bytes.fromhex(subject)
                except ValueError:
                    continue
                ids = [c.id for c in registry.owned_by(account)]
            targets.extend(i for i in ids if i not in targets)
        return targets

    def _submit(self, node: Node, kind: TxKind, payload, timestamp: int) -> Digest:
        tx = make_transaction(self.authority, node.next_nonce(self.authority.account), kind, payload)
        node.dry_run(tx, timestamp).raise_for_error()
        return node.submit_transaction(tx)

    def _anchor_alert(self, alert: Alert, node: Node, report_id: Digest, failures: list) -> ExecutedAction | None:
        """Feed the alert and, with an authority key, record it on chain."""
        self._record_alert(alert)
        if self.authority is None:
            return None
        payload = AlertPayload(report_id, alert.kind, alert.audience, alert.message)
        try:
            digest = self._submit(node, TxKind.RECORD_ALERT, payload, alert.timestamp)
        except SmartCertError as err:
            failures.append((None, err.code, err.message))
            return None
        return ExecutedAction(Action.ALERT, None, digest, report_id)

    def enforce(self, report: RiskReport, node: Node, timestamp: int | None = None) -> list[ExecutedAction]:
        """Carry out ``report.recommended_action``.

        Freeze and Halt submit one signed FreezeCertificate transaction per
        affected active certificate. Every alert goes to the feed and, when an
        authority key is configured, into a RecordAlert transaction. The
        caller seals the submitted transactions into a block.
        """
        action = report.recommended_action
        if action is Action.NONE:
            return []
        ts = node.tip.timestamp if timestamp is None else timestamp
        rid = report.report_id
        executed: list[ExecutedAction] = []
        failures: list = []
        if action is Action.ALERT:
            alert = Alert("RiskAlert", f"Risk score {report.score:.3f} over threshold.", ts,
                          rid.hex(), details={"predicted_category": _cat(report)})
            anchored = self._anchor_alert(alert, node, rid, failures)
            if failures:
                raise EnforcementFailed(f"Alert could not be recorded: {failures[0][2]}",
                                        reason=failures[0][1], failures=failures)
            return [anchored] if anchored else []

        if self.authority is None:
            raise EnforcementFailed("Sentinel has no authority key configured.", reason="NOT_AUTHORITY")
        if action is Action.FREEZE:
            targets = []
            for finding in report.findings:
                targets.extend(c.id for c in node.registry.owned_by(finding.wallet))
        else:
            targets = self._halt_targets(report, node)
        targets = [i for i in targets if 0 <= i < node.registry.next_certificate_id
                   and node.registry.get(i).status is CertificateStatus.ACTIVE]

        for cert_id in targets:
            try:
                digest = self._submit(node, TxKind.FREEZE_CERTIFICATE,
                                      FreezePayload(cert_id, _report_reason(rid)), ts)
            except SmartCertError as err:
                failures.append((cert_id, err.code, err.message))
                continue
            executed.append(ExecutedAction(action, cert_id, digest, rid))

        frozen = [a.certificate_id for a in executed]
        if action is Action.FREEZE:
            alert = Alert(
                "WalletFrozen",
                "Unusual transfers to unknown addresses; wallet transactions frozen pending verification.",
                ts, rid.hex(), "user", {"wallets": [f.wallet.hex() for f in report.findings], "certificates": frozen})
        else:
            sigs = sorted({m.signature.id for m in report.matched
                           if m.signature.layer is Layer.SMART_CONTRACT and m.signature.severity >= self.halt_severity})
            alert = Alert(
                "ContractHalted", "Smart contract operations halted after a suspected exploit.",
                ts, rid.hex(), "developer",
                {"signatures": sigs, "predicted_category": _cat(report), "certificates": frozen,
                 "evidence": [m.event.description for m in report.matched
                              if m.signature.layer is Layer.SMART_CONTRACT]})
        anchored = self._anchor_alert(alert, node, rid, failures)
        if anchored is not None:
            executed.append(anchored)
        if failures:
            raise EnforcementFailed(f"{len(failures)} enforcement action(s) rejected: {failures[0][2]}",
                                    reason=failures[0][1], executed=executed, failures=failures)
        return executed

    # -- compliance
    def compliance_check(self, node_or_txs, rules: Iterable[VulnerabilitySignature],
                         timestamp: int = 0) -> list[ComplianceFlag]:
        """Flag non-compliant transactions. Given a Node and an authority key, the
        institution alert is also recorded on chain under the flag set's digest."""
        flags = compliance_check(node_or_txs, rules)
        if flags:
            body = json.dumps([f.to_json() for f in flags], sort_keys=True, separators=(",", ":"))
            digest = crypto.sha256(body.encode())
            alert = Alert("ComplianceViolation", f"{len(flags)} non-compliant transaction field(s).",
                          timestamp, digest.hex(), "institution", {"flags": [f.to_json() for f in flags]})
            node = node_or_txs if isinstance(node_or_txs, Node) else None
            if node is None:
                self._record_alert(alert)
            elif not enforcement_transactions(node, digest):  # each flag set is anchored once
                failures: list = []
                self._anchor_alert(alert, node, digest, failures)
                if failures:
                    raise EnforcementFailed(f"Alert could not be recorded: {failures[0][2]}",
                                            reason=failures[0][1], failures=failures)
        return flags


def _cat(report: RiskReport) -> str | None:
    return report.predicted_category.value if report.predicted_category else None


def enforcement_transactions(node: Node, report_id: Digest):
    """Committed FreezeCertificate and RecordAlert transactions issued for ``report_id``."""
    reason = _report_reason(report_id)
    out = []
    for height, index, tx, receipt in node.iter_transactions():
        if tx.kind == TxKind.FREEZE_CERTIFICATE:
            hit = tx.decoded_payload().reason == reason
        elif tx.kind == TxKind.RECORD_ALERT:
            hit = tx.decoded_payload().report_id == report_id
        else:
            continue
        if hit:
            out.append((height, index, tx, receipt))
    return out


def compliance_check(node_or_txs, rules: Iterable[VulnerabilitySignature]) -> list[ComplianceFlag]:
    """Flag IssueCertificate transactions whose metadata keys hit a policy rule.

    ``node_or_txs`` is a Node or an iterable of (height, tx_index, tx, receipt).
    Only Application-layer rules apply.
    """
    rules = [r for r in rules if r.layer is Layer.APPLICATION]
    source = node_or_txs.iter_transactions() if isinstance(node_or_txs, Node) else node_or_txs
    flags = []
    for height, index, tx, _receipt in source:
        if tx.kind != TxKind.ISSUE_CERTIFICATE:
            continue
        try:
            metadata = tx.decoded_payload().metadata
        except SmartCertError:
            continue
        for key in metadata:
            for rule in rules:
                if rule.matches(key):
                    flags.append(ComplianceFlag(height, index, tx.digest(), key, rule.id))
    return flags
