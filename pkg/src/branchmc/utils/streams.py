"""Counter-based random streams keyed by (seed, sample, particle).

Every stream is a Philox generator whose key is derived from a SeedSequence with an
explicit spawn key, so the numbers a sample consumes depend only on the seed and the
sample's index, never on which worker thread ran it.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

_TWO_53 = 2**53

# spawn-key tags; tuple length already separates most families
_TREE_TAG = 0
_PARTICLE_TAG = 1
_BATCH_TAG = 2**40
_DERIVED_TAG = 2**41


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent Philox generator for the given seed and spawn key."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(sequence))


def derive_seed(seed: int, *key: int) -> int:
    """A new 63-bit seed derived from (seed, key), used to hand seeds to nested runs."""
    sequence = np.random.SeedSequence(seed, spawn_key=(_DERIVED_TAG, *key))
    return int(sequence.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def gaussians(rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """Standard normals by inverse CDF of uniforms on the open interval (0, 1)."""
    u = (rng.integers(0, _TWO_53, size=size, dtype=np.uint64) + 0.5) / _TWO_53
    return ndtri(u)


@dataclass(frozen=True)
class SampleStreams:
    """Streams used by one Monte Carlo sample."""

    seed: int
    sample_index: int

    def tree(self) -> np.random.Generator:
        """Stream for branch clocks, brancher picks and offspring counts."""
        return substream(self.seed, self.sample_index, _TREE_TAG)

    def particle(self, stream_id: int) -> np.random.Generator:
        """Brownian stream of the particle whose counter id is `stream_id`."""
        return substream(self.seed, self.sample_index, _PARTICLE_TAG, stream_id)


def batch_stream(seed: int, batch_index: int) -> np.random.Generator:
    """Stream for a whole batch of samples in the vectorized engine."""
    return substream(seed, _BATCH_TAG, batch_index)
