"""Error hierarchy shared by every layer.

Each error carries a machine ``code`` (used on the wire and in ledger
receipts), a human message and the HTTP status the service answers with.
"""

from __future__ import annotations


class SmartCertError(Exception):
    code = "ERROR"
    http_status = 400
    default_message = "Smart certificate error"

    def __init__(self, message: str | None = None):
        self.message = message if message is not None else self.default_message
        super().__init__(self.message)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.message!r})"


# crypto
class InvalidSeed(SmartCertError):
    code = "INVALID_SEED"
    default_message = "Seed must be exactly 32 bytes."


class InvalidKey(SmartCertError):
    code = "INVALID_KEY"
    default_message = "Malformed public key."


# merkle / ctlog
class IndexOutOfRange(SmartCertError):
    code = "INDEX_OUT_OF_RANGE"
    default_message = "Index out of range."


# registry
class NotFound(SmartCertError):
    code = "NOT_FOUND"
    http_status = 404
    default_message = "Certificate does not exist."


class MaturityNotFuture(SmartCertError):
    code = "MATURITY_NOT_FUTURE"
    default_message = "Maturity date must be in the future."


class ZeroDeposit(SmartCertError):
    code = "ZERO_DEPOSIT"
    default_message = "Deposit amount must be greater than 0."


class InvalidIssuerSignature(SmartCertError):
    code = "INVALID_ISSUER_SIGNATURE"
    default_message = "Issuer signature does not verify over the document hash."


class NotOwner(SmartCertError):
    code = "NOT_OWNER"
    http_status = 403
    default_message = "Only the owner can revoke the certificate."


class AlreadyRevoked(SmartCertError):
    code = "ALREADY_REVOKED"
    http_status = 409
    default_message = "Certificate is already revoked."


class RevokedCertificate(SmartCertError):
    code = "REVOKED_CERTIFICATE"
    http_status = 409
    default_message = "Certificate is revoked and cannot have anomalies."


class ModelError(SmartCertError):
    code = "MODEL_ERROR"
    http_status = 502
    default_message = "Machine learning model error"


class NotAnomaly(SmartCertError):
    code = "NOT_ANOMALY"
    http_status = 422
    default_message = "Not detected as an anomaly"


class NotAuthority(SmartCertError):
    code = "NOT_AUTHORITY"
    http_status = 403
    default_message = "Only the sentinel authority can freeze certificates."


# ledger
class InvalidSignature(SmartCertError):
    code = "INVALID_SIGNATURE"
    http_status = 401
    default_message = "Transaction signature is invalid."


class StaleNonce(SmartCertError):
    code = "STALE_NONCE"
    http_status = 409
    default_message = "Transaction nonce is not greater than the last used nonce."


class UnknownKind(SmartCertError):
    code = "UNKNOWN_KIND"
    default_message = "Unknown transaction kind."


class MalformedTransaction(SmartCertError):
    code = "MALFORMED_TRANSACTION"
    default_message = "Transaction could not be decoded."


class TimestampRegression(SmartCertError):
    code = "TIMESTAMP_REGRESSION"
    default_message = "Block timestamp is older than the chain tip."


class ForkDetected(SmartCertError):
    code = "FORK_DETECTED"
    http_status = 409
    default_message = "Block does not extend the local tip."


class StateDivergence(SmartCertError):
    code = "STATE_DIVERGENCE"
    http_status = 409
    default_message = "Re-execution does not reproduce the block."


class InsufficientFunds(SmartCertError):
    code = "INSUFFICIENT_FUNDS"
    default_message = "Insufficient balance."


class WalletFrozen(SmartCertError):
    code = "WALLET_FROZEN"
    http_status = 403
    default_message = "Wallet transactions are frozen."


class ZeroAmount(SmartCertError):
    code = "ZERO_AMOUNT"
    default_message = "Transfer amount must be greater than 0."


# sentinel
class RepoNotFound(SmartCertError):
    code = "REPO_NOT_FOUND"
    http_status = 500
    default_message = "Vulnerability repository not found."


class ParseError(SmartCertError):
    code = "PARSE_ERROR"
    line = None

    def __init__(self, message: str | None = None, line: int | None = None):
        self.line = line
        if line is not None and message is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EnforcementFailed(SmartCertError):
    code = "ENFORCEMENT_FAILED"
    http_status = 409
    default_message = "Enforcement action rejected by the ledger."
    reason = None
    executed: list = []
    failures: list = []

    def __init__(self, message: str | None = None, reason: str | None = None, executed=(), failures=()):
        self.reason = reason
        self.executed = list(executed)
        self.failures = list(failures)
        super().__init__(message)


def _all_subclasses(cls):
    for sub in cls.__subclasses__():
        yield sub
        yield from _all_subclasses(sub)


ERRORS_BY_CODE: dict[str, type[SmartCertError]] = {
    cls.code: cls for cls in _all_subclasses(SmartCertError)
}


def error_from_code(code: str, message: str) -> SmartCertError:
    """Rebuild an exception from a stored (code, message) pair, e.g. a receipt."""
    cls = ERRORS_BY_CODE.get(code, SmartCertError)
    err = cls.__new__(cls)
    SmartCertError.__init__(err, message)
    return err


class OutOfOrderEvent(SmartCertError):
    code = "OUT_OF_ORDER_EVENT"
    default_message = "Event timestamp is older than the last event from the same source."


ERRORS_BY_CODE[OutOfOrderEvent.code] = OutOfOrderEvent
