import json
import random

import pytest

from smartcert import crypto
from smartcert.errors import EnforcementFailed, OutOfOrderEvent, ParseError, RepoNotFound
from smartcert.ledger import TxKind, WalletEvent
from smartcert.registry import CertificateStatus
from smartcert.sentinel import (
    Action,
    Layer,
    Match,
    MonitoredEvent,
    Sentinel,
    ThreatCategory,
    VulnerabilitySignature,
    compliance_check,
    enforcement_transactions,
    load_events,
    load_repository,
    noisy_or,
    pattern_matches,
    predict_category,
)

from helpers import issue_tx, seal
from oracles import noisy_or_exact


def sig(id, pattern, severity, layer=Layer.MEDIA, category=ThreatCategory.CLIENT):
    return VulnerabilitySignature(id, category, pattern, severity, layer)


def event(desc, ts=100, layer=Layer.MEDIA, subject=""):
    return MonitoredEvent(layer, ts, subject, desc)


def test_pattern_matching():
    assert pattern_matches("session-hijack", "Platform X Session-Hijack vulnerability disclosed")
    assert not pattern_matches("reentrancy", "integer overflow")
    assert pattern_matches("*drain*", "funds DRAINED from pool")
    assert not pattern_matches("drain*", "funds drained")
    assert pattern_matches("personal_?d", "personal_id")


@pytest.mark.parametrize("severity", [0, 11, 2.5, True, "5"])
def test_signature_rejects_bad_severity(severity):
    with pytest.raises(ValueError):
        sig("s", "x", severity)


def test_signature_rejects_empty_pattern():
    with pytest.raises(ValueError):
        sig("s", "", 3)


def test_load_repository(tmp_path):
    path = tmp_path / "repo.jsonl"
    rows = [sig("a", "hijack", 5).to_json(), sig("b", "reentrancy", 9, Layer.SMART_CONTRACT,
                                                 ThreatCategory.SMART_CONTRACT).to_json()]
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n\n")
    repo = load_repository(path)
    assert [s.id for s in repo] == ["a", "b"] and repo[1].layer is Layer.SMART_CONTRACT
    path.write_text(json.dumps(rows[0]) + "\n" + json.dumps(dict(rows[1], severity=12)) + "\n")
    with pytest.raises(ParseError) as exc:
        load_repository(path)
    assert exc.value.line == 2
    path.write_text("{not json\n")
    with pytest.raises(ParseError):
        load_repository(path)
    with pytest.raises(RepoNotFound):
        load_repository(tmp_path / "missing.jsonl")


def test_load_events(tmp_path):
    path = tmp_path / "events.jsonl"
    path.write_text(json.dumps(event("hello", 5).to_json()) + "\n")
    assert load_events(path) == [event("hello", 5)]


def test_media_match_only_on_matching_layer():
    s = Sentinel([sig("m", "session-hijack", 5), sig("w", "session-hijack", 5, Layer.WALLET)])
    found = s.ingest_event(event("platform X session-hijack vulnerability disclosed"))
    assert [m.signature.id for m in found] == ["m"]


def test_out_of_order_per_source():
    s = Sentinel([])
    s.ingest_event(event("a", 100))
    s.ingest_event(event("b", 100))
    s.ingest_event(event("c", 50, Layer.WALLET))
    with pytest.raises(OutOfOrderEvent):
        s.ingest_event(event("d", 99))


def _transfer(sender, recipient, ts):
    return WalletEvent(sender, recipient, 1, ts, 1, 0, bytes(32))


def test_wallet_rule_fires_on_k_new_addresses():
    s = Sentinel([], wallet_window=60, wallet_threshold=3)
    w = b"\x01" * 20
    assert s.record_wallet_event(_transfer(w, b"\x02" * 20, 100)) is None
    assert s.record_wallet_event(_transfer(w, b"\x03" * 20, 105)) is None
    finding = s.record_wallet_event(_transfer(w, b"\x04" * 20, 110))
    assert finding is not None and len(finding.transfers) == 3 and finding.wallet == w


def test_wallet_rule_ignores_known_and_stale():
    s = Sentinel([], wallet_window=60, wallet_threshold=3)
    w = b"\x01" * 20
    s.record_wallet_event(_transfer(w, b"\x02" * 20, 0))
    s.record_wallet_event(_transfer(w, b"\x03" * 20, 10))
    assert s.record_wallet_event(_transfer(w, b"\x02" * 20, 20)) is None   # known address
    assert s.record_wallet_event(_transfer(w, b"\x04" * 20, 60)) is None   # first one left the window
    assert s.findings == []


def test_score_and_actions():
    s = Sentinel([])
    one = Match(event("x"), sig("a", "x", 5))
    r = s.build_report((0, 1), [one])
    assert r.score == pytest.approx(0.5, abs=1e-12) and r.recommended_action is Action.ALERT
    low = s.build_report((0, 1), [Match(event("x"), sig("b", "x", 4))])
    assert low.recommended_action is Action.NONE
    sc = [Match(event("x", layer=Layer.SMART_CONTRACT), sig("c", "x", 5, Layer.SMART_CONTRACT)),
          Match(event("x", layer=Layer.SMART_CONTRACT), sig("d", "x", 8, Layer.SMART_CONTRACT))]
    halt = s.build_report((0, 1), sc)
    assert halt.score == pytest.approx(0.9, abs=1e-12) and halt.recommended_action is Action.HALT
    assert s.build_report((0, 1), []).score == 0.0


def test_noisy_or_matches_exact_oracle():
    rng = random.Random(8)
    for _ in range(200):
        sev = [rng.randint(1, 10) for _ in range(rng.randint(0, 12))]
        assert abs(noisy_or(sev) - float(noisy_or_exact(sev))) <= 1e-12
    assert noisy_or([10, 3]) == 1.0


def test_category_tie_break_follows_enum_order():
    a = Match(event("x"), sig("a", "x", 4, category=ThreatCategory.SMART_CONTRACT))
    b = Match(event("x"), sig("b", "x", 4, category=ThreatCategory.NETWORK))
    assert predict_category([a, b]) is ThreatCategory.NETWORK
    assert predict_category([b, a]) is ThreatCategory.NETWORK
    c = Match(event("x"), sig("c", "x", 1, category=ThreatCategory.SMART_CONTRACT))
    assert predict_category([a, b, c]) is ThreatCategory.SMART_CONTRACT
    assert predict_category([]) is None


def test_correlate_respects_window():
    s = Sentinel([sig("m", "hijack", 6)], window_length=100)
    s.ingest_event(event("hijack one", 10))
    s.ingest_event(event("hijack two", 200))
    r = s.correlate(250)
    assert [m.event.timestamp for m in r.matched] == [200]
    assert r.window == (150, 250)
    assert s.correlate(250).report_id == r.report_id


def test_enforce_freeze_submits_transactions(node, alice, bob, authority):
    seal(node, issue_tx(node, alice), lambda: issue_tx(node, bob, document=b"b"))
    s = Sentinel([], authority=authority, wallet_threshold=1)
    finding = s.record_wallet_event(_transfer(alice.account, bob.account, node.tip.timestamp))
    report = s.build_report((0, node.tip.timestamp), [], [finding])
    assert report.recommended_action is Action.FREEZE
    executed = s.enforce(report, node)
    assert [(a.action, a.certificate_id) for a in executed] == [(Action.FREEZE, 0), (Action.ALERT, None)]
    seal(node)
    assert node.registry.get(0).status is CertificateStatus.FROZEN
    assert node.registry.get(1).status is CertificateStatus.ACTIVE
    on_chain = enforcement_transactions(node, report.report_id)
    assert [tx.kind for _, _, tx, _ in on_chain] == [TxKind.FREEZE_CERTIFICATE, TxKind.RECORD_ALERT]
    assert all(r.ok for *_, r in on_chain)
    assert [tx.digest() for _, _, tx, _ in on_chain] == [a.tx_digest for a in executed]
    assert s.alerts[-1].kind == "WalletFrozen"
    assert on_chain[1][2].decoded_payload().kind == "WalletFrozen"


def test_enforce_alert_recorded_on_chain(node, authority):
    sink = []
    s = Sentinel([], authority=authority, alert_sink=sink.append)
    report = s.build_report((0, 1), [Match(event("x"), sig("a", "x", 7))])
    (executed,) = s.enforce(report, node)
    assert executed.action is Action.ALERT and sink[0].kind == "RiskAlert"
    seal(node)
    (_, _, tx, receipt), = enforcement_transactions(node, report.report_id)
    assert receipt.ok and tx.kind == TxKind.RECORD_ALERT and tx.digest() == executed.tx_digest
    assert node.registry.certificates == []
    none = s.build_report((0, 1), [])
    assert s.enforce(none, node) == [] and len(sink) == 1


def test_alert_without_authority_is_feed_only(node):
    s = Sentinel([])
    report = s.build_report((0, 1), [Match(event("x"), sig("a", "x", 7))])
    assert s.enforce(report, node) == []
    assert node.mempool == [] and s.alerts[0].kind == "RiskAlert"


def test_enforce_without_authority(node, alice):
    seal(node, issue_tx(node, alice))
    s = Sentinel([], wallet_threshold=1)
    finding = s.record_wallet_event(_transfer(alice.account, b"\x07" * 20, 5))
    with pytest.raises(EnforcementFailed) as exc:
        s.enforce(s.build_report((0, 10), [], [finding]), node)
    assert exc.value.reason == "NOT_AUTHORITY"


def test_enforce_with_wrong_key_reports_failures(node, alice, bob):
    seal(node, issue_tx(node, alice))
    s = Sentinel([], authority=bob, wallet_threshold=1)
    finding = s.record_wallet_event(_transfer(alice.account, b"\x07" * 20, 5))
    with pytest.raises(EnforcementFailed) as exc:
        s.enforce(s.build_report((0, 10), [], [finding]), node)
    assert exc.value.reason == "NOT_AUTHORITY" and exc.value.failures and node.mempool == []


def test_halt_targets_subject_certificate(node, alice, authority):
    seal(node, issue_tx(node, alice), lambda: issue_tx(node, alice, document=b"2"))
    s = Sentinel([sig("re", "reentrancy", 8, Layer.SMART_CONTRACT, ThreatCategory.SMART_CONTRACT)],
                 authority=authority)
    s.ingest_event(event("reentrancy exploit observed", 1500, Layer.SMART_CONTRACT, subject="1"))
    report = s.correlate(1500)
    assert report.recommended_action is Action.HALT
    executed = s.enforce(report, node, 1500)
    seal(node, at=1500)
    assert [a.certificate_id for a in executed if a.action is Action.HALT] == [1]
    kinds = [tx.kind for _, _, tx, _ in enforcement_transactions(node, report.report_id)]
    assert kinds == [TxKind.FREEZE_CERTIFICATE, TxKind.RECORD_ALERT]
    assert node.registry.get(1).status is CertificateStatus.FROZEN
    assert s.alerts[-1].kind == "ContractHalted" and s.alerts[-1].audience == "developer"


def test_compliance_flags_disallowed_key(node, alice):
    seal(node, issue_tx(node, alice, metadata={"recipient": "A", "personal_id": "123"}))
    rules = [sig("gdpr-1", "personal_id", 6, Layer.APPLICATION), sig("ignored", "recipient", 6, Layer.MEDIA)]
    flags = compliance_check(node, rules)
    assert len(flags) == 1
    f = flags[0]
    assert (f.height, f.tx_index, f.field, f.rule_id) == (1, 0, "personal_id", "gdpr-1")
    s = Sentinel([])
    s.compliance_check(node, rules, timestamp=9)
    assert s.alerts[-1].kind == "ComplianceViolation" and s.alerts[-1].audience == "institution"
    assert node.mempool == []


def test_compliance_alert_recorded_on_chain(node, alice, authority):
    seal(node, issue_tx(node, alice, metadata={"personal_id": "123"}))
    s = Sentinel([], authority=authority)
    s.compliance_check(node, [sig("gdpr-1", "personal_id", 6, Layer.APPLICATION)], timestamp=9)
    block = seal(node)
    assert block.transactions[0].kind == TxKind.RECORD_ALERT and block.receipts[0].ok
    assert block.transactions[0].decoded_payload().report_id.hex() == s.alerts[-1].report_id


def test_invalid_parameters():
    with pytest.raises(ValueError):
        Sentinel([], wallet_threshold=0)
    with pytest.raises(ValueError):
        Sentinel([], alert_threshold=1.5)


def test_network_flood_is_alert_only(node, authority):
    net = sig("ddos", "request flood", 6, Layer.MEDIA, ThreatCategory.NETWORK)
    s = Sentinel([net], authority=authority)
    s.ingest_event(event("Request flood against validator RPC reported", 100))
    report = s.correlate(100)
    assert report.predicted_category is ThreatCategory.NETWORK
    assert report.recommended_action is Action.ALERT


def test_action_ranking():
    assert Action.HALT > Action.FREEZE > Action.ALERT > Action.NONE
    s = Sentinel([])
    halt = Match(event("x", layer=Layer.SMART_CONTRACT), sig("h", "x", 8, Layer.SMART_CONTRACT))
    assert s.build_report((0, 1), [halt], ["finding"]).recommended_action is Action.HALT
