"""Counter-based random number generation.

All randomness in the toolkit flows through Philox4x64 streams.  A stream is
addressed by ``(seed, lane, member)``: the seed is the Philox key, and the
(lane, member) pair is placed in the high words of the 256-bit counter, so
distinct addresses yield provably non-overlapping streams and identical
addresses replay bit-identically on every platform.

Lanes partition usage: lane 0 carries the driving noise of the rough-path
layer, lane 1 the per-particle Monte Carlo noise of the mean-field layer.
"""

from __future__ import annotations

import numpy as np

DRIVER_LANE = 0
PARTICLE_LANE = 1
INIT_LANE = 2


def stream(seed: int, lane: int, member: int = 0) -> np.random.Generator:
    """Generator for the Philox stream addressed by (seed, lane, member)."""
    if seed < 0 or lane < 0 or member < 0:
        raise ValueError("stream address components must be non-negative")
    bg = np.random.Philox(
        key=np.uint64(seed),
        counter=np.array([0, 0, member, lane], dtype=np.uint64),
    )
    return np.random.Generator(bg)


def gaussian_increments(
    seed: int, lane: int, member: int, n: int, d: int, dt: float | np.ndarray
) -> np.ndarray:
    """Draw (n, d) Gaussian increments with per-row variance dt.

    dt may be a scalar or an (n,) array of cell widths.
    """
    g = stream(seed, lane, member).standard_normal((n, d))
    return g * np.sqrt(np.asarray(dt)).reshape(-1, 1)
