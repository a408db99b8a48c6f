"""Hot-kernel backend selection.

Prefers the compiled extension (OpenSSL-backed nonce scan) and falls back
to the pure-Python implementation. Set DISTB_PURE=1 to force the fallback,
e.g. for benchmarking or debugging. Both backends produce identical
results; only speed differs.
"""

import os

from . import pure

if os.environ.get("DISTB_PURE"):
    _impl = pure
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = pure

BACKEND = _impl.BACKEND
mine_scan = _impl.mine_scan
leading_zero_bits = _impl.leading_zero_bits

__all__ = ["BACKEND", "mine_scan", "leading_zero_bits", "pure"]
