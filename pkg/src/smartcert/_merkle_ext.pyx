# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled Merkle kernels over a packed leaf-hash buffer (OpenSSL SHA-256)."""

from libc.string cimport memcpy

# The low-level SHA256_* calls skip the per-call provider lookup that the
# one-shot SHA256() does under OpenSSL 3.
cdef extern from "openssl/sha.h" nogil:
    ctypedef struct SHA256_CTX:
        pass
    int SHA256_Init(SHA256_CTX *c)
    int SHA256_Update(SHA256_CTX *c, const void *data, size_t n)
    int SHA256_Final(unsigned char *md, SHA256_CTX *c)

BACKEND = "compiled"


cdef inline size_t _split(size_t n) noexcept nogil:
    cdef size_t k = 1
    while (k << 1) < n:
        k <<= 1
    return k


cdef inline void _sha(const unsigned char *d, size_t n, unsigned char *out) noexcept nogil:
    cdef SHA256_CTX ctx
    SHA256_Init(&ctx)
    SHA256_Update(&ctx, d, n)
    SHA256_Final(out, &ctx)


cdef void _mth(const unsigned char *h, size_t lo, size_t hi, unsigned char *out) noexcept nogil:
    cdef unsigned char buf[65]
    cdef size_t k
    if hi - lo == 1:
        memcpy(out, h + lo * 32, 32)
        return
    k = _split(hi - lo)
    buf[0] = 1
    _mth(h, lo, lo + k, buf + 1)
    _mth(h, lo + k, hi, buf + 33)
    _sha(buf, 65, out)


cdef bytes _root(const unsigned char *h, size_t lo, size_t hi):
    cdef unsigned char out[32]
    with nogil:
        _mth(h, lo, hi, out)
    return out[:32]


def hash_leaves(leaves):
    cdef Py_ssize_t n = len(leaves), i
    cdef bytearray result = bytearray(32 * n)
    cdef unsigned char *dst = result
    cdef unsigned char zero = 0
    cdef SHA256_CTX ctx
    cdef bytes leaf
    for i in range(n):
        leaf = bytes(leaves[i])
        SHA256_Init(&ctx)
        SHA256_Update(&ctx, &zero, 1)
        SHA256_Update(&ctx, <const char *> leaf, len(leaf))
        SHA256_Final(dst + 32 * i, &ctx)
    return bytes(result)


def subtree_root(const unsigned char[:] hashes, Py_ssize_t lo, Py_ssize_t hi):
    if not (0 <= lo < hi <= hashes.shape[0] // 32):
        raise ValueError("bad range")
    return _root(&hashes[0], lo, hi)


cdef void _path(const unsigned char *h, size_t m, size_t lo, size_t hi, list out):
    cdef size_t k
    if hi - lo == 1:
        return
    k = _split(hi - lo)
    if m < k:
        _path(h, m, lo, lo + k, out)
        out.append(_root(h, lo + k, hi))
    else:
        _path(h, m - k, lo + k, hi, out)
        out.append(_root(h, lo, lo + k))


def inclusion_path(const unsigned char[:] hashes, Py_ssize_t index, Py_ssize_t size):
    if not (0 <= index < size <= hashes.shape[0] // 32):
        raise ValueError("bad index")
    cdef list out = []
    _path(&hashes[0], index, 0, size, out)
    return out


cdef void _subproof(const unsigned char *h, size_t m, size_t lo, size_t hi, bint complete, list out):
    cdef size_t n = hi - lo, k
    if m == n:
        if not complete:
            out.append(_root(h, lo, hi))
        return
    k = _split(n)
    if m <= k:
        _subproof(h, m, lo, lo + k, complete, out)
        out.append(_root(h, lo + k, hi))
    else:
        _subproof(h, m - k, lo + k, hi, False, out)
        out.append(_root(h, lo, lo + k))


def consistency_path(const unsigned char[:] hashes, Py_ssize_t old_size, Py_ssize_t new_size):
    if not (1 <= old_size <= new_size <= hashes.shape[0] // 32):
        raise ValueError("bad sizes")
    cdef list out = []
    _subproof(&hashes[0], old_size, 0, new_size, True, out)
    return out
