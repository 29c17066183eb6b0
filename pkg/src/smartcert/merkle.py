"""Append-only Merkle tree with RFC 6962 hashing, inclusion and consistency proofs.

Proof generation runs on the kernels in ``_merkle_ext`` (compiled) when they
are importable and on ``_merkle_py`` otherwise. Set ``SMARTCERT_PURE_PYTHON=1``
to force the fallback.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

from .crypto import EMPTY_DIGEST, Digest
from .errors import IndexOutOfRange

from . import _merkle_py

try:
    if os.environ.get("SMARTCERT_PURE_PYTHON") == "1":
        raise ImportError("pure python requested")
    from . import _merkle_ext as _kernels
except ImportError:
    _kernels = _merkle_py

LEAF_PREFIX = b"\x00"
NODE_PREFIX = b"\x01"


def backend() -> str:
    return _kernels.BACKEND


def set_backend(name: str) -> str:
    """Switch kernels ("compiled" or "python"); returns the previous backend name."""
    global _kernels
    previous = _kernels.BACKEND
    if name == "python":
        _kernels = _merkle_py
    elif name == "compiled":
        from . import _merkle_ext

        _kernels = _merkle_ext
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def compiled_available() -> bool:
    try:
        from . import _merkle_ext  # noqa: F401
    except ImportError:
        return False
    return True


def leaf_hash(leaf: bytes) -> Digest:
    return hashlib.sha256(LEAF_PREFIX + leaf).digest()


def node_hash(left: Digest, right: Digest) -> Digest:
    return hashlib.sha256(NODE_PREFIX + left + right).digest()


@dataclass(frozen=True)
class InclusionProof:
    leaf_index: int
    tree_size: int
    audit_path: tuple[Digest, ...]

    def to_json(self) -> dict:
        return {
            "leaf_index": self.leaf_index,
            "tree_size": self.tree_size,
            "audit_path": [d.hex() for d in self.audit_path],
        }

    @classmethod
    def from_json(cls, data: dict) -> "InclusionProof":
        return cls(int(data["leaf_index"]), int(data["tree_size"]),
                   tuple(bytes.fromhex(h) for h in data["audit_path"]))


@dataclass(frozen=True)
class ConsistencyProof:
    old_size: int
    new_size: int
    path: tuple[Digest, ...]

    def to_json(self) -> dict:
        return {"old_size": self.old_size, "new_size": self.new_size,
                "path": [d.hex() for d in self.path]}

    @classmethod
    def from_json(cls, data: dict) -> "ConsistencyProof":
        return cls(int(data["old_size"]), int(data["new_size"]),
                   tuple(bytes.fromhex(h) for h in data["path"]))


class MerkleTree:
    """Append-only tree. Keeps the leaf inputs, a packed buffer of leaf hashes,
    and one cached peak digest per level of the compact range so the root is
    maintained incrementally."""

    def __init__(self, leaves=()):
        self._leaves: list[bytes] = []
        self._hashes = bytearray()
        self._peaks: list[tuple[int, Digest]] = []
        for leaf in leaves:
            self.append(leaf)

    def __len__(self) -> int:
        return len(self._leaves)

    @property
    def size(self) -> int:
        return len(self._leaves)

    @property
    def leaves(self) -> tuple[bytes, ...]:
        return tuple(self._leaves)

    def leaf_hash_at(self, index: int) -> Digest:
        if not 0 <= index < self.size:
            raise IndexOutOfRange(f"leaf index {index} out of range for size {self.size}")
        return bytes(self._hashes[index * 32:(index + 1) * 32])

    def append(self, leaf: bytes) -> int:
        leaf = bytes(leaf)
        digest = leaf_hash(leaf)
        index = len(self._leaves)
        self._leaves.append(leaf)
        self._hashes += digest
        size, node = 1, digest
        while self._peaks and self._peaks[-1][0] == size:
            left_size, left = self._peaks.pop()
            node = node_hash(left, node)
            size += left_size
        self._peaks.append((size, node))
        return index

    def extend(self, leaves) -> None:
        for leaf in leaves:
            self.append(leaf)

    def root(self) -> Digest:
        if not self._peaks:
            return EMPTY_DIGEST
        acc = self._peaks[-1][1]
        for _, peak in reversed(self._peaks[:-1]):
            acc = node_hash(peak, acc)
        return acc

    def root_at(self, size: int) -> Digest:
        """Root of the first ``size`` leaves, recomputed by the kernel."""
        if not 0 <= size <= self.size:
            raise IndexOutOfRange(f"size {size} out of range (tree size {self.size})")
        if size == 0:
            return EMPTY_DIGEST
        return _kernels.subtree_root(bytes(self._hashes), 0, size)

    def inclusion_proof(self, leaf_index: int, tree_size: int | None = None) -> InclusionProof:
        if tree_size is None:
            tree_size = self.size
        if not 0 < tree_size <= self.size:
            raise IndexOutOfRange(f"tree size {tree_size} out of range (tree size {self.size})")
        if not 0 <= leaf_index < tree_size:
            raise IndexOutOfRange(f"leaf index {leaf_index} out of range for size {tree_size}")
        path = _kernels.inclusion_path(bytes(self._hashes), leaf_index, tree_size)
        return InclusionProof(leaf_index, tree_size, tuple(path))

    def consistency_proof(self, old_size: int, new_size: int | None = None) -> ConsistencyProof:
        if new_size is None:
            new_size = self.size
        if not 0 < new_size <= self.size:
            raise IndexOutOfRange(f"new size {new_size} out of range (tree size {self.size})")
        if not 1 <= old_size <= new_size:
            raise IndexOutOfRange(f"old size {old_size} must be in 1..{new_size}")
        path = _kernels.consistency_path(bytes(self._hashes), old_size, new_size)
        return ConsistencyProof(old_size, new_size, tuple(path))


def root(tree: MerkleTree) -> Digest:
    return tree.root()


def root_of(leaves) -> Digest:
    """Root of a list of leaf inputs without keeping a tree around."""
    leaves = list(leaves)
    if not leaves:
        return EMPTY_DIGEST
    return _kernels.subtree_root(_kernels.hash_leaves(leaves), 0, len(leaves))


def root_from_inclusion(leaf: bytes, proof: InclusionProof) -> Digest | None:
    index, size = proof.leaf_index, proof.tree_size
    if not 0 <= index < size:
        return None
    fn, sn = index, size - 1
    r = leaf_hash(leaf)
    for p in proof.audit_path:
        if len(p) != 32 or sn == 0:
            return None
        if fn & 1 or fn == sn:
            r = node_hash(p, r)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            r = node_hash(r, p)
        fn >>= 1
        sn >>= 1
    if sn != 0:
        return None
    return r


def verify_inclusion(expected_root: Digest, leaf: bytes, proof: InclusionProof) -> bool:
    try:
        return root_from_inclusion(bytes(leaf), proof) == bytes(expected_root)
    except (TypeError, AttributeError):
        return False


def verify_consistency(old_root: Digest, new_root: Digest, proof: ConsistencyProof) -> bool:
    try:
        return _verify_consistency(bytes(old_root), bytes(new_root), proof)
    except (TypeError, AttributeError, IndexError):
        return False


def _verify_consistency(old_root: bytes, new_root: bytes, proof: ConsistencyProof) -> bool:
    first, second = proof.old_size, proof.new_size
    path = list(proof.path)
    if first < 1 or first > second:
        return False
    if any(len(p) != 32 for p in path):
        return False
    if first == second:
        return not path and old_root == new_root
    if not path:
        return False
    if first & (first - 1) == 0:
        path.insert(0, old_root)
    fn, sn = first - 1, second - 1
    while fn & 1:
        fn >>= 1
        sn >>= 1
    fr = sr = path[0]
    for c in path[1:]:
        if sn == 0:
            return False
        if fn & 1 or fn == sn:
            fr = node_hash(c, fr)
            sr = node_hash(c, sr)
            if not fn & 1:
                while not fn & 1 and fn != 0:
                    fn >>= 1
                    sn >>= 1
        else:
            sr = node_hash(sr, c)
        fn >>= 1
        sn >>= 1
    return sn == 0 and fr == old_root and sr == new_root
