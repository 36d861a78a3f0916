"""Deterministic sampling streams.

Every randomized estimator in the package draws from a stream derived from
(seed, label, counter...) so that sample i is a pure function of the seed and
its index.  Results are therefore bit-identical no matter how samples are
batched or spread over workers, and enlarging a budget extends the sample
sequence instead of reshuffling it.
"""

from __future__ import annotations

import zlib

import numpy as np

# Samples are produced in fixed-size blocks; a budget that is not a multiple
# of the block size truncates the final block, which preserves the prefix
# property for nested budgets.
BLOCK = 512


def _label_id(label: str) -> int:
    return zlib.crc32(label.encode("ascii"))


def stream(seed: int, label: str, *counters: int) -> np.random.Generator:
    """Independent generator for (seed, label, counters)."""
    key = (_label_id(label),) + tuple(int(c) for c in counters)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def sphere_points(gen: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n points uniform on the unit sphere in R^dim (rows)."""
    g = gen.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    # resample-free guard; a zero draw has probability 0 but a NaN row would
    # poison downstream reductions
    norms[norms == 0.0] = 1.0
    return g / norms


def ball_points(gen: np.random.Generator, n: int, center: np.ndarray,
                radius: float) -> np.ndarray:
    """n points uniform in the closed euclidean ball."""
    center = np.asarray(center, dtype=float)
    dim = center.size
    dirs = sphere_points(gen, n, dim)
    radii = radius * gen.random(n) ** (1.0 / dim)
    return center[None, :] + dirs * radii[:, None]


def block_count(budget: int) -> int:
    return (int(budget) + BLOCK - 1) // BLOCK


def block_size(budget: int, block_index: int) -> int:
    """Size of block block_index when the total budget is budget."""
    lo = block_index * BLOCK
    return max(0, min(BLOCK, int(budget) - lo))
