# cython: boundscheck=False, wraparound=False
"""Compiled mining kernel: SHA-256 nonce scan via OpenSSL's libcrypto.

The 80-byte header splits into a constant 76-byte prefix and the 4-byte
nonce, so the scan precomputes the digest state over the prefix once and
per nonce only clones the context and absorbs the trailing 4 bytes (one
compression instead of two, no per-hash allocation).

Must stay bit-identical to distbsim._kernels.pure; the test suite
cross-checks both backends on the same inputs.
"""

from libc.string cimport memcpy

cdef extern from "openssl/evp.h" nogil:
    ctypedef struct EVP_MD:
        pass
    ctypedef struct EVP_MD_CTX:
        pass
    const EVP_MD *EVP_sha256()
    EVP_MD_CTX *EVP_MD_CTX_new()
    void EVP_MD_CTX_free(EVP_MD_CTX *ctx)
    int EVP_DigestInit_ex(EVP_MD_CTX *ctx, const EVP_MD *type, void *impl)
    int EVP_DigestUpdate(EVP_MD_CTX *ctx, const void *data, size_t count)
    int EVP_DigestFinal_ex(EVP_MD_CTX *ctx, unsigned char *md, unsigned int *size)
    int EVP_MD_CTX_copy_ex(EVP_MD_CTX *out, const EVP_MD_CTX *src)

BACKEND = "native"


cdef int _leading_zero_bits(const unsigned char *digest) nogil:
    cdef int bits = 0
    cdef int i
    cdef unsigned char byte
    for i in range(32):
        byte = digest[i]
        if byte == 0:
            bits += 8
            continue
        while not byte & 0x80:
            bits += 1
            byte = <unsigned char>(byte << 1)
        break
    return bits


def leading_zero_bits(bytes digest):
    """Count leading zero bits of a digest (big-endian bit order)."""
    if len(digest) != 32:
        from . import pure
        return pure.leading_zero_bits(digest)
    return _leading_zero_bits(<const unsigned char *><char *>digest)


def mine_scan(bytes prefix, int difficulty, unsigned long long start_nonce,
              unsigned long long limit):
    """Scan nonces in [start_nonce, limit) for a difficulty-satisfying hash.

    Returns (nonce, attempts, digest) or None if the range is exhausted.
    """
    if len(prefix) != 76:
        raise ValueError("header prefix must be 76 bytes")
    cdef unsigned char tail[4]
    cdef unsigned char digest[32]
    cdef unsigned int digest_len = 32
    cdef unsigned long long nonce = start_nonce
    cdef unsigned long long attempts = 0
    cdef int found = 0
    cdef const unsigned char *prefix_ptr = <const unsigned char *><char *>prefix
    cdef EVP_MD_CTX *base = EVP_MD_CTX_new()
    cdef EVP_MD_CTX *work = EVP_MD_CTX_new()
    if base == NULL or work == NULL:
        if base != NULL:
            EVP_MD_CTX_free(base)
        if work != NULL:
            EVP_MD_CTX_free(work)
        raise MemoryError("EVP_MD_CTX_new failed")
    try:
        with nogil:
            EVP_DigestInit_ex(base, EVP_sha256(), NULL)
            EVP_DigestUpdate(base, prefix_ptr, 76)
            while nonce < limit:
                attempts += 1
                tail[0] = <unsigned char>(nonce & 0xFF)
                tail[1] = <unsigned char>((nonce >> 8) & 0xFF)
                tail[2] = <unsigned char>((nonce >> 16) & 0xFF)
                tail[3] = <unsigned char>((nonce >> 24) & 0xFF)
                EVP_MD_CTX_copy_ex(work, base)
                EVP_DigestUpdate(work, tail, 4)
                EVP_DigestFinal_ex(work, digest, &digest_len)
                if _leading_zero_bits(digest) >= difficulty:
                    found = 1
                    break
                nonce += 1
    finally:
        EVP_MD_CTX_free(base)
        EVP_MD_CTX_free(work)
    if not found:
        return None
    return nonce, attempts, bytes(digest[:32])
