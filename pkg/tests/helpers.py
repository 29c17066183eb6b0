from smartcert import crypto
from smartcert.ledger import (
    AnomalyPayload,
    FreezePayload,
    IssuePayload,
    RevokePayload,
    TransferPayload,
    TxKind,
    make_transaction,
)


def issue_tx(node, kp, document=b"deposit certificate", amount=1000, maturity=None, metadata=None, nonce=None):
    doc_hash = crypto.hash_document(document)
    payload = IssuePayload(amount, node.tip.timestamp + 86_400 if maturity is None else maturity,
                           metadata or {"recipient": "Alice", "issuer": "Bank"}, doc_hash,
                           crypto.sign(kp.secret_key, doc_hash))
    return make_transaction(kp, node.next_nonce(kp.account) if nonce is None else nonce,
                            TxKind.ISSUE_CERTIFICATE, payload)


def revoke_tx(node, kp, cert_id):
    return make_transaction(kp, node.next_nonce(kp.account), TxKind.REVOKE_CERTIFICATE, RevokePayload(cert_id))


def anomaly_tx(node, kp, cert_id, description):
    return make_transaction(kp, node.next_nonce(kp.account), TxKind.DETECT_ANOMALY,
                            AnomalyPayload(cert_id, description))


def freeze_tx(node, kp, cert_id, reason="test"):
    return make_transaction(kp, node.next_nonce(kp.account), TxKind.FREEZE_CERTIFICATE,
                            FreezePayload(cert_id, reason))


def transfer_tx(node, kp, recipient, amount):
    return make_transaction(kp, node.next_nonce(kp.account), TxKind.WALLET_TRANSFER,
                            TransferPayload(recipient, amount))


def seal(node, *txs, at=None):
    """Submit ``txs`` and produce a block; callables are built after earlier submissions."""
    for tx in txs:
        node.submit_transaction(tx() if callable(tx) else tx)
    return node.produce_block(node.tip.timestamp + 1 if at is None else at)
