"""
Reproducible random streams.

Chains are processed in fixed-size blocks and block ``b`` always draws from
stream ``b``: a Philox generator keyed by splitmix64(seed) and jumped b+1
times. Results therefore do not depend on how many workers run the blocks or
in which order they finish.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(seed: int) -> int:
    """One round of the splitmix64 finaliser; turns small seeds into well-mixed keys."""
    z = (int(seed) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def chain_stream(seed: int, block: int = 0) -> np.random.Generator:
    """Generator for chain block `block` of a run seeded with `seed`."""
    if block < 0:
        raise ValueError(f"block index must be >= 0, got {block}")
    bit_gen = np.random.Philox(key=splitmix64(seed))
    return np.random.Generator(bit_gen.jumped(block + 1))


def block_slices(n_chains: int, block_size: int) -> list:
    """Contiguous [start, stop) chain ranges, one per block."""
    if block_size < 1:
        raise ValueError("block size must be >= 1")
    return [(start, min(start + block_size, n_chains)) for start in range(0, n_chains, block_size)]


def auxiliary_stream(seed: int, purpose: int) -> np.random.Generator:
    """Stream for draws outside the chain blocks (initial states, reference samples).

    Keyed apart from the chain streams so adding a reference draw never shifts a chain.
    """
    if purpose < 0:
        raise ValueError(f"stream purpose must be >= 0, got {purpose}")
    key = splitmix64((splitmix64(seed) + purpose + 1) & MASK64)
    return np.random.Generator(np.random.Philox(key=key))
