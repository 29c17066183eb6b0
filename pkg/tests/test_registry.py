import copy

import pytest

from smartcert import crypto
from smartcert.errors import (
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
from smartcert.model import CallableModelClient
from smartcert.registry import CertificateStatus, EventKind, ModelEndpoint, Registry

NOW = 1_700_000_000
DOC = b"certificate of deposit #1"


def _issue(reg, kp, amount=1000, maturity=NOW + 86_400, now=NOW, doc=DOC, sig=None):
    h = crypto.hash_document(doc)
    return reg.issue_certificate(kp.public_key, amount, maturity, {"recipient": "Alice", "issuer": "Bank"},
                                 h, sig if sig is not None else crypto.sign(kp.secret_key, h), now)


@pytest.fixture
def reg(authority):
    return Registry(authority=authority.account, model_endpoint=ModelEndpoint("http://model"))


def test_issue_first_certificate(reg, alice):
    assert _issue(reg, alice) == 0
    cert = reg.get(0)
    assert cert.owner == alice.account and cert.status is CertificateStatus.ACTIVE and not cert.is_anomaly
    assert reg.next_certificate_id == 1
    ev = reg.events[-1]
    assert (ev.kind, ev.certificate_id, ev.owner, ev.deposit_amount, ev.maturity_date) == \
        (EventKind.ISSUED, 0, alice.account, 1000, NOW + 86_400)


def test_issue_zero_deposit(reg, alice):
    with pytest.raises(ZeroDeposit) as exc:
        _issue(reg, alice, amount=0, maturity=NOW + 1)
    assert exc.value.message == "Deposit amount must be greater than 0."


def test_issue_maturity_equal_now_rejected(reg, alice):
    with pytest.raises(MaturityNotFuture) as exc:
        _issue(reg, alice, amount=5, maturity=NOW)
    assert exc.value.message == "Maturity date must be in the future."


def test_maturity_checked_before_deposit(reg, alice):
    with pytest.raises(MaturityNotFuture):
        _issue(reg, alice, amount=0, maturity=NOW - 1)


def test_issue_bad_signature(reg, alice, bob):
    h = crypto.hash_document(DOC)
    with pytest.raises(InvalidIssuerSignature):
        _issue(reg, alice, sig=crypto.sign(bob.secret_key, h))


def test_verify_certificate_literal_predicate(reg, alice):
    _issue(reg, alice, maturity=NOW + 10)
    assert reg.verify_certificate(0, NOW) is False          # not matured yet
    assert reg.verify_certificate(0, NOW + 10) is True      # maturity <= now
    assert reg.verify_certificate(0, NOW + 1_000) is True
    reg.revoke_certificate(alice.account, 0)
    assert reg.verify_certificate(0, NOW + 1_000) is False


def test_verify_missing(reg):
    with pytest.raises(NotFound) as exc:
        reg.verify_certificate(0, NOW)
    assert exc.value.message == "Certificate does not exist."


def test_verify_ignores_frozen_and_anomaly(reg, alice, authority):
    _issue(reg, alice, maturity=NOW + 10)
    reg.freeze_certificate(authority.account, 0)
    reg.get(0).is_anomaly = True
    assert reg.verify_certificate(0, NOW + 10)


def test_verify_document(reg, alice):
    _issue(reg, alice)
    assert reg.verify_document(0, DOC)
    assert not reg.verify_document(0, DOC[:-1] + b"2")
    reg.get(0).issuer_signature = bytes(64)
    assert not reg.verify_document(0, DOC)
    with pytest.raises(NotFound):
        reg.verify_document(5, DOC)


def test_revoke(reg, alice, bob):
    _issue(reg, alice)
    with pytest.raises(NotOwner) as exc:
        reg.revoke_certificate(bob.account, 0)
    assert exc.value.message == "Only the owner can revoke the certificate."
    reg.revoke_certificate(alice.account, 0)
    assert reg.get(0).status is CertificateStatus.REVOKED
    assert reg.events[-1].kind is EventKind.REVOKED
    with pytest.raises(AlreadyRevoked) as exc:
        reg.revoke_certificate(alice.account, 0)
    assert exc.value.message == "Certificate is already revoked."
    with pytest.raises(NotFound):
        reg.revoke_certificate(alice.account, 1)


def _model(status, body):
    return CallableModelClient(lambda req: (status, body))


def test_detect_anomaly_flags_certificate(reg, alice):
    _issue(reg, alice)
    client = _model(200, "Anomaly")
    reg.detect_anomaly(alice.account, 0, "drained funds", client)
    assert reg.get(0).is_anomaly
    assert reg.events[-1].kind is EventKind.ANOMALY and reg.events[-1].description == "drained funds"
    assert client.requests == [("http://model", "/detect_anomaly", "drained funds,0")]


@pytest.mark.parametrize("status,body,err,msg", [
    (200, "Normal", NotAnomaly, "Not detected as an anomaly"),
    (500, "Anomaly", ModelError, "Machine learning model error"),
    (200, "anomaly", NotAnomaly, "Not detected as an anomaly"),
])
def test_detect_anomaly_rejections(reg, alice, status, body, err, msg):
    _issue(reg, alice)
    before = reg.state_digest()
    with pytest.raises(err) as exc:
        reg.detect_anomaly(alice.account, 0, "x", _model(status, body))
    assert exc.value.message == msg
    assert not reg.get(0).is_anomaly
    assert reg.state_digest() == before


def test_detect_anomaly_guards(reg, alice, bob):
    _issue(reg, alice)
    with pytest.raises(NotOwner) as exc:
        reg.detect_anomaly(bob.account, 0, "x", _model(200, "Anomaly"))
    assert exc.value.message == "Only the owner can detect anomalies."
    reg.revoke_certificate(alice.account, 0)
    with pytest.raises(RevokedCertificate) as exc:
        reg.detect_anomaly(alice.account, 0, "x", _model(200, "Anomaly"))
    assert exc.value.message == "Certificate is revoked and cannot have anomalies."
    with pytest.raises(NotFound):
        reg.detect_anomaly(alice.account, 3, "x", _model(200, "Anomaly"))


def test_model_transport_failure_is_model_error(reg, alice):
    _issue(reg, alice)

    def boom(body):
        raise ConnectionError("down")

    with pytest.raises(ModelError):
        reg.detect_anomaly(alice.account, 0, "x", CallableModelClient(boom))


def test_freeze_toggle_and_guards(reg, alice, authority):
    _issue(reg, alice)
    with pytest.raises(NotAuthority):
        reg.freeze_certificate(alice.account, 0)
    assert reg.freeze_certificate(authority.account, 0) is CertificateStatus.FROZEN
    assert reg.has_frozen(alice.account)
    assert reg.freeze_certificate(authority.account, 0) is CertificateStatus.ACTIVE
    reg.revoke_certificate(alice.account, 0)
    with pytest.raises(RevokedCertificate):
        reg.freeze_certificate(authority.account, 0)
    with pytest.raises(NotFound):
        reg.freeze_certificate(authority.account, 9)


def test_revoked_is_absorbing(reg, alice, authority):
    _issue(reg, alice)
    reg.freeze_certificate(authority.account, 0)
    reg.revoke_certificate(alice.account, 0)
    for op in (lambda: reg.freeze_certificate(authority.account, 0),
               lambda: reg.revoke_certificate(alice.account, 0),
               lambda: reg.detect_anomaly(alice.account, 0, "x", _model(200, "Anomaly"))):
        with pytest.raises(Exception):
            op()
        assert reg.get(0).status is CertificateStatus.REVOKED


def test_error_paths_leave_state_identical(reg, alice, bob):
    _issue(reg, alice)
    snapshot = copy.deepcopy(reg.state)
    digest = reg.state_digest()
    failing = [
        lambda: _issue(reg, alice, amount=0),
        lambda: _issue(reg, alice, maturity=NOW),
        lambda: _issue(reg, alice, sig=bytes(64)),
        lambda: reg.revoke_certificate(bob.account, 0),
        lambda: reg.revoke_certificate(alice.account, 4),
        lambda: reg.freeze_certificate(bob.account, 0),
    ]
    for op in failing:
        with pytest.raises(Exception):
            op()
        assert reg.state_digest() == digest
        assert reg.state == snapshot


def test_ids_dense_and_replay_deterministic(alice, bob, authority):
    def run():
        r = Registry(authority=authority.account)
        for i in range(10):
            kp = alice if i % 2 else bob
            _issue(r, kp, amount=i + 1, doc=bytes([i]))
        r.revoke_certificate(alice.account, 1)
        r.freeze_certificate(authority.account, 2)
        return r

    a, b = run(), run()
    assert [c.id for c in a.certificates] == list(range(10))
    assert a.next_certificate_id == sum(1 for e in a.events if e.kind is EventKind.ISSUED)
    assert a.state_digest() == b.state_digest()
    assert [a.verify_certificate(i, NOW + 10**6) for i in range(10)] == \
        [b.verify_certificate(i, NOW + 10**6) for i in range(10)]


def test_copy_is_independent(reg, alice, authority):
    _issue(reg, alice)
    clone = reg.copy()
    clone.revoke_certificate(alice.account, 0)
    clone.get(0).metadata["x"] = "y"
    assert reg.get(0).status is CertificateStatus.ACTIVE and "x" not in reg.get(0).metadata
    assert len(clone.events) == len(reg.events) + 1
    assert reg.state_digest() != clone.state_digest()
