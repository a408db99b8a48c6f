"""Seeded random streams, split by component name.

Every source of randomness in a scenario draws from its own stream,
derived from the root seed and a component label. Adding a new component
(or reordering draws inside one) never perturbs the draws seen by the
others, which keeps regenerated outputs byte-stable.
"""

import hashlib
import random

__all__ = ["split_stream", "derive_seed"]


def derive_seed(seed: int, *labels) -> int:
    """Derive a 64-bit child seed from a root seed and a label path."""
    tag = "/".join(str(part) for part in labels)
    digest = hashlib.sha256(f"{seed}/{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def split_stream(seed: int, *labels) -> random.Random:
    """Return an independent `random.Random` keyed by (seed, labels)."""
    return random.Random(derive_seed(seed, *labels))
