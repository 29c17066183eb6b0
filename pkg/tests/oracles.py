"""Independent reference computations. Nothing here imports the package's
Merkle or scoring code."""

import hashlib
from fractions import Fraction


def mth(leaves):
    """Merkle tree hash straight from the recursive definition."""
    if not leaves:
        return hashlib.sha256(b"").digest()
    if len(leaves) == 1:
        return hashlib.sha256(b"\x00" + leaves[0]).digest()
    k = 1
    while k * 2 < len(leaves):
        k *= 2
    return hashlib.sha256(b"\x01" + mth(leaves[:k]) + mth(leaves[k:])).digest()


def noisy_or_exact(severities):
    prod = Fraction(1)
    for s in severities:
        prod *= 1 - Fraction(s, 10)
    return 1 - prod
