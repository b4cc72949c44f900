"""Named, portable random streams.

Every stream is a PCG64 generator seeded from ``SeedSequence(seed,
spawn_key=(domain, *key))``, so a stream depends only on the root seed and
its key, never on the order in which other streams were consumed.
"""

from __future__ import annotations

import numpy as np

# stream domains
DATA = 1
DECOMP = 2
TREE = 3
WALK = 4
CUT = 5
EXIT = 6
GRAPH = 7
REP = 8


def _entropy(seed):
    if seed is None:
        raise ValueError("a seed is required")
    if isinstance(seed, (tuple, list)):
        return [int(s) for s in seed]
    return int(seed)


def stream(seed, domain: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=(int(domain),) + tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def node_streams(seed, n: int, *key: int) -> list[np.random.Generator]:
    """One data-plane stream per node for the phase identified by ``key``."""
    return [stream(seed, DATA, *key, u) for u in range(n)]


def derive_seed(seed, domain: int, *key: int) -> int:
    """A 63-bit child seed, for handing a sub-computation its own root."""
    ss = np.random.SeedSequence(_entropy(seed), spawn_key=(int(domain),) + tuple(int(k) for k in key))
    return int(ss.generate_state(2, np.uint64)[0] >> np.uint64(1))
