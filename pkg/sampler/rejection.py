"""
Batched rejection sampling.

Every chain (item) in a batch runs its own accept/reject sequence. Items that
are still waiting get several proposals per round, sized from the running
acceptance estimate; the first accepted proposal in an item's sequence is
kept, so the output law is the same as drawing one proposal at a time.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from .errors import AcceptanceExceededError, RejectionCapError

logger = logging.getLogger(__name__)

DEFAULT_CAP = 10**6
ACCEPT_TOL = 1e-9
MAX_OVERSAMPLE = 64
_ROUND_BUDGET = 1 << 16

ProposeFn = Callable[[np.ndarray, np.random.Generator], Tuple[np.ndarray, np.ndarray]]


@dataclass
class RejectionResult:
    samples: np.ndarray
    attempts: np.ndarray
    excursions: int
    failed: np.ndarray

    @property
    def rejections(self) -> np.ndarray:
        return np.maximum(self.attempts - 1, 0)

    @property
    def acceptance_rate(self) -> float:
        accepted = int(np.count_nonzero(~self.failed))
        total = int(np.sum(self.attempts))
        return accepted / total if total else 0.0


def rejection_sample(
    n_items: int,
    point_shape: tuple,
    propose: ProposeFn,
    rng: np.random.Generator,
    *,
    cap: int = DEFAULT_CAP,
    clip: bool = True,
    what: str = "rejection sampler",
    raise_on_cap: bool = True,
) -> RejectionResult:
    """Draw one accepted proposal per item.

    `propose(idx, rng)` returns one proposal per entry of the index array
    `idx` (entries may repeat) together with the log acceptance ratio log V.
    With `clip` a proposal with V > 1 is accepted and counted as an
    excursion; without it such a proposal raises AcceptanceExceededError.
    """
    if cap < 1:
        raise ValueError("rejection cap must be >= 1")
    samples = np.full((n_items,) + tuple(point_shape), np.nan)
    attempts = np.zeros(n_items, dtype=np.int64)
    done = np.zeros(n_items, dtype=bool)
    failed = np.zeros(n_items, dtype=bool)
    excursions = 0
    accepted_total = 0
    proposed_total = 0

    while True:
        active = np.flatnonzero(~done)
        if active.size == 0:
            break
        rate = (accepted_total + 1.0) / (proposed_total + 1.0)
        remaining = cap - attempts[active]
        k = int(min(MAX_OVERSAMPLE, max(1, math.ceil(1.0 / rate)), max(1, _ROUND_BUDGET // active.size),
                    int(np.max(remaining))))
        idx = np.repeat(active, k)
        proposals, log_v = propose(idx, rng)
        log_v = np.asarray(log_v, dtype=float)
        u = rng.uniform(size=idx.size)
        # proposals past an item's remaining budget are drawn but never count
        budget = np.minimum(remaining, k)
        accept = (np.log1p(-u) < np.minimum(log_v, 0.0)).reshape(active.size, k)
        accept &= np.arange(k)[None, :] < budget[:, None]
        hit = accept.any(axis=1)
        first = np.argmax(accept, axis=1)
        used = np.where(hit, first + 1, budget)

        # only proposals up to the first acceptance belong to an item's sequence
        in_sequence = np.arange(k)[None, :] < used[:, None]
        over = (log_v.reshape(active.size, k) > ACCEPT_TOL) & in_sequence
        if np.any(over):
            if not clip:
                raise AcceptanceExceededError(
                    f"{what}: acceptance ratio {math.exp(min(np.max(log_v), 700.0)):.6g} > 1"
                )
            excursions += int(np.count_nonzero(over))
        attempts[active] += used
        rows = np.flatnonzero(hit)
        if rows.size:
            chosen = rows * k + first[rows]
            samples[active[rows]] = proposals[chosen]
            done[active[rows]] = True
        accepted_total += rows.size
        proposed_total += int(np.sum(used))

        over_cap = active[(~hit) & (attempts[active] >= cap)]
        if over_cap.size:
            estimate = accepted_total / max(proposed_total, 1)
            if raise_on_cap:
                raise RejectionCapError(what, cap, estimate)
            logger.warning("%s: %d items hit the cap of %d proposals (acceptance %.3g)",
                           what, over_cap.size, cap, estimate)
            failed[over_cap] = True
            done[over_cap] = True

    return RejectionResult(samples=samples, attempts=attempts, excursions=excursions, failed=failed)
