"""Pure-Python Merkle kernels. Same API as the compiled ``_merkle_ext``.

All functions take ``hashes``: the concatenation of 32-byte leaf hashes.
"""

from __future__ import annotations

from hashlib import sha256

BACKEND = "python"


def _split(n: int) -> int:
    # largest power of two strictly below n (n >= 2)
    return 1 << ((n - 1).bit_length() - 1)


def hash_leaves(leaves) -> bytes:
    return b"".join(sha256(b"\x00" + leaf).digest() for leaf in leaves)


def _level(hashes: bytes, lo: int, hi: int) -> list[bytes]:
    return [hashes[i * 32:(i + 1) * 32] for i in range(lo, hi)]


def _fold(level: list[bytes]) -> bytes:
    # bottom-up pairing with the odd node carried up equals the split-at-power-of-two recursion
    while len(level) > 1:
        nxt = [sha256(b"\x01" + level[i] + level[i + 1]).digest() for i in range(0, len(level) - 1, 2)]
        if len(level) & 1:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def subtree_root(hashes: bytes, lo: int, hi: int) -> bytes:
    if not 0 <= lo < hi <= len(hashes) // 32:
        raise ValueError("bad range")
    return _fold(_level(hashes, lo, hi))


def inclusion_path(hashes: bytes, index: int, size: int) -> list[bytes]:
    if not 0 <= index < size <= len(hashes) // 32:
        raise ValueError("bad index")
    level = _level(hashes, 0, size)
    path = []
    while len(level) > 1:
        sib = index ^ 1
        if sib < len(level):
            path.append(level[sib])
        nxt = [sha256(b"\x01" + level[i] + level[i + 1]).digest() for i in range(0, len(level) - 1, 2)]
        if len(level) & 1:
            nxt.append(level[-1])
        level = nxt
        index >>= 1
    return path


def consistency_path(hashes: bytes, old_size: int, new_size: int) -> list[bytes]:
    if not 1 <= old_size <= new_size <= len(hashes) // 32:
        raise ValueError("bad sizes")
    out: list[bytes] = []

    def sub(m: int, lo: int, hi: int, complete: bool) -> None:
        n = hi - lo
        if m == n:
            if not complete:
                out.append(subtree_root(hashes, lo, hi))
            return
        k = _split(n)
        if m <= k:
            sub(m, lo, lo + k, complete)
            out.append(subtree_root(hashes, lo + k, hi))
        else:
            sub(m - k, lo + k, hi, False)
            out.append(subtree_root(hashes, lo, lo + k))

    sub(old_size, 0, new_size, True)
    return out
