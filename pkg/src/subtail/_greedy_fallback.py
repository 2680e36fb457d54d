"""Pure-numpy greedy capacity-capped assignment, used when the compiled
kernel is unavailable. Must stay semantically identical to subtail._greedy."""

from __future__ import annotations

import numpy as np


def greedy_capacity_assign(sim: np.ndarray, capacity: int) -> np.ndarray:
    """Assign each row of `sim` (samples x centers) to a center.

    Repeatedly extracts the globally maximal (sample, open center) entry;
    np.argmax's row-major first-occurrence rule breaks ties by lowest
    sample index, then lowest center index. A center closes once it holds
    `capacity` samples.
    """
    sim = np.asarray(sim, dtype=np.float64)
    n, m = sim.shape
    if n == 0:
        return np.empty(0, dtype=np.int64)
    if capacity < 1:
        raise ValueError("capacity must be >= 1")
    if capacity * m < n:
        raise ValueError("capacity * centers < samples: assignment infeasible")

    work = sim.copy()
    assign = np.full(n, -1, dtype=np.int64)
    counts = np.zeros(m, dtype=np.int64)
    for _ in range(n):
        flat = int(np.argmax(work))
        i, j = divmod(flat, m)
        if not np.isfinite(work[i, j]):
            raise RuntimeError("all centers closed with samples remaining")
        assign[i] = j
        counts[j] += 1
        work[i, :] = -np.inf
        if counts[j] >= capacity:
            work[:, j] = -np.inf
    return assign
