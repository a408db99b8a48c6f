"""Deterministic simulator for a blockchain-verified SDN fabric with an
energy-aware IoT clustering layer.

Subpackages of note: `ledger` (hash-chained proof-of-work block store),
`flowtable` (match-action switching and canonical dumps), `control`
(controller cluster, isolation, verification rounds), `iot` (clustering,
head election, radio energy), `traffic` (workloads and attacks),
`metrics`, `engine`/`world`/`scenarios` (event core and experiments),
`gateway` (REST surface), `cli`.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend  # noqa: F401
