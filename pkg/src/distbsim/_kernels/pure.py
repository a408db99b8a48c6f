"""Pure-Python mining kernel, the fallback when the C extension is absent.

Both backends must return bit-identical results: the nonce scan is a
deterministic walk from `start_nonce` upward, four little-endian bytes
appended to the 76-byte header prefix, hashed with SHA-256 until the
digest clears `difficulty` leading zero bits.
"""

import hashlib

BACKEND = "pure"


def leading_zero_bits(digest: bytes) -> int:
    """Count leading zero bits of a digest (big-endian bit order)."""
    bits = 0
    for byte in digest:
        if byte == 0:
            bits += 8
            continue
        while not byte & 0x80:
            bits += 1
            byte <<= 1
        break
    return bits


def mine_scan(prefix: bytes, difficulty: int, start_nonce: int, limit: int):
    """Scan nonces in [start_nonce, limit) for a difficulty-satisfying hash.

    Returns (nonce, attempts, digest) or None if the range is exhausted.
    `prefix` is the fixed 76-byte head of the 80-byte header.
    """
    if len(prefix) != 76:
        raise ValueError("header prefix must be 76 bytes")
    sha256 = hashlib.sha256
    attempts = 0
    for nonce in range(start_nonce, limit):
        attempts += 1
        digest = sha256(prefix + nonce.to_bytes(4, "little")).digest()
        if leading_zero_bits(digest) >= difficulty:
            return nonce, attempts, digest
    return None
