"""Smart certificates: a deterministic certificate registry on a simulated
ledger, a Certificate Transparency log, and an attack-correlation sentinel."""

from .crypto import (
    KeyPair,
    PossessionProof,
    account_from_public_key,
    hash_document,
    keygen,
    prove_possession,
    sign,
    verify,
    verify_possession,
)
from .ctlog import CTLog, CTMonitor, LogEntry, audit_sct, verify_certificate_transparency
from .ledger import Block, GenesisConfig, LedgerTransaction, Node, TxKind, make_transaction
from .merkle import MerkleTree, verify_consistency, verify_inclusion
from .registry import Registry
from .sentinel import Sentinel, ThreatCategory, load_repository

__version__ = "0.1.0"
