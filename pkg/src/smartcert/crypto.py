"""Hashing, Ed25519 keys and signatures, account ids, possession proofs."""

from __future__ import annotations

import functools
import hashlib
import os
from dataclasses import dataclass, field

from cryptography.exceptions import InvalidSignature as _CryptoInvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from . import _ed25519 as ed
from .errors import InvalidKey, InvalidSeed

DIGEST_SIZE = 32
PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
ACCOUNT_SIZE = 20

Digest = bytes
Signature = bytes
AccountId = bytes

EMPTY_DIGEST = hashlib.sha256(b"").digest()


def sha256(data: bytes) -> Digest:
    return hashlib.sha256(data).digest()


def hash_document(document: bytes) -> Digest:
    """SHA-256 of the exact document bytes."""
    return hashlib.sha256(document).digest()


@dataclass(frozen=True)
class KeyPair:
    """An Ed25519 key pair. ``secret_key`` is the 32-byte RFC 8032 seed."""

    secret_key: bytes = field(repr=False)
    public_key: bytes

    @property
    def account(self) -> AccountId:
        return account_from_public_key(self.public_key)

    def __repr__(self) -> str:
        return f"KeyPair(public_key={self.public_key.hex()})"


def keygen(seed: bytes | None = None) -> KeyPair:
    if seed is None:
        seed = os.urandom(32)
    elif not isinstance(seed, (bytes, bytearray)) or len(seed) != 32:
        raise InvalidSeed()
    seed = bytes(seed)
    sk = Ed25519PrivateKey.from_private_bytes(seed)
    pk = sk.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return KeyPair(secret_key=seed, public_key=pk)


def sign(secret_key: bytes, digest: Digest) -> Signature:
    if len(digest) != DIGEST_SIZE:
        raise ValueError("digest must be 32 bytes")
    if len(secret_key) != 32:
        raise InvalidSeed()
    return Ed25519PrivateKey.from_private_bytes(bytes(secret_key)).sign(bytes(digest))


def verify(public_key: bytes, digest: Digest, signature: Signature) -> bool:
    # malformed input of any kind is a plain "no"
    try:
        if len(public_key) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
            return False
        if len(digest) != DIGEST_SIZE:
            return False
        Ed25519PublicKey.from_public_bytes(bytes(public_key)).verify(bytes(signature), bytes(digest))
        return True
    except (_CryptoInvalidSignature, ValueError, TypeError):
        return False


@functools.lru_cache(maxsize=4096)
def _on_curve(public_key: bytes) -> bool:
    # point decoding costs a modular exponentiation; senders repeat constantly
    return ed.decode(public_key) is not None


def account_from_public_key(public_key: bytes) -> AccountId:
    if not isinstance(public_key, (bytes, bytearray)) or len(public_key) != PUBLIC_KEY_SIZE:
        raise InvalidKey()
    if not _on_curve(bytes(public_key)):
        raise InvalidKey("Public key is not a valid curve point.")
    return hashlib.sha256(bytes(public_key)).digest()[:ACCOUNT_SIZE]


@dataclass(frozen=True)
class PossessionProof:
    """Non-interactive Schnorr proof of knowledge of a key pair's secret scalar."""

    commitment: bytes
    challenge: bytes
    response: bytes
    context: bytes

    def to_json(self) -> dict:
        return {
            "commitment": self.commitment.hex(),
            "challenge": self.challenge.hex(),
            "response": self.response.hex(),
            "context": self.context.hex(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "PossessionProof":
        return cls(
            commitment=bytes.fromhex(data["commitment"]),
            challenge=bytes.fromhex(data["challenge"]),
            response=bytes.fromhex(data["response"]),
            context=bytes.fromhex(data["context"]),
        )


def _challenge(commitment: bytes, public_key: bytes, context: bytes) -> bytes:
    return hashlib.sha256(commitment + public_key + context).digest()


def prove_possession(key_pair: KeyPair, context: bytes) -> PossessionProof:
    a, prefix = ed.secret_scalar(key_pair.secret_key)
    # hedged nonce: fresh randomness mixed with the secret prefix
    r = int.from_bytes(hashlib.sha512(prefix + os.urandom(32) + context).digest(), "little") % ed.L
    commitment = ed.encode(ed.base_mult(r))
    challenge = _challenge(commitment, key_pair.public_key, context)
    c = int.from_bytes(challenge, "little") % ed.L
    s = (r + c * a) % ed.L
    return PossessionProof(commitment, challenge, s.to_bytes(32, "little"), bytes(context))


def verify_possession(public_key: bytes, context: bytes, proof: PossessionProof) -> bool:
    try:
        if len(proof.commitment) != 32 or len(proof.response) != 32 or len(proof.challenge) != 32:
            return False
        if proof.context != context:
            return False
        if _challenge(proof.commitment, public_key, context) != proof.challenge:
            return False
        s = int.from_bytes(proof.response, "little")
        if s >= ed.L:
            return False
        big_a = ed.decode(bytes(public_key))
        big_r = ed.decode(proof.commitment)
        if big_a is None or big_r is None or ed.is_small_order(big_a):
            return False
        c = int.from_bytes(proof.challenge, "little") % ed.L
        return ed.equal(ed.base_mult(s), ed.add(big_r, ed.scalar_mult(c, big_a)))
    except (TypeError, AttributeError, ValueError):
        return False
