"""Named random sub-streams derived from a single master seed.

Every trial owns three independent streams, one per kind of call made by
the two-point estimator: the Gaussian direction, the noise of the far
query ``f(x + mu u)`` and the noise of the near query ``f(x)``. Streams are
keyed by ``(trial, call)`` through :class:`numpy.random.SeedSequence` spawn
keys, so any trial can be replayed alone and trials never share draws.
Within a stream, iteration ``t`` consumes the ``t``-th block of draws.
"""

import numpy as np

DIRECTION, NOISE_FAR, NOISE_NEAR = 0, 1, 2
# reference computations during estimator verification
REFERENCE = 3
CALL_NAMES = {DIRECTION: "direction", NOISE_FAR: "noise_far", NOISE_NEAR: "noise_near",
              REFERENCE: "reference"}

# Draws are pre-generated in blocks of this many iterations.
BLOCK = 1024


def substream(master_seed, *key):
    """Generator for the named sub-stream ``key`` of ``master_seed``."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


class TrialStreams:
    """The three call streams of one trial."""

    def __init__(self, master_seed, trial, prefix=()):
        self.master_seed = int(master_seed)
        self.trial = int(trial)
        self.prefix = tuple(int(k) for k in prefix)
        key = tuple(prefix) + (self.trial,)
        self.direction = substream(master_seed, *key, DIRECTION)
        self.noise_far = substream(master_seed, *key, NOISE_FAR)
        self.noise_near = substream(master_seed, *key, NOISE_NEAR)

    def block(self, size, n):
        """Next ``size`` iterations of draws: directions and two noise vectors."""
        return (self.direction.standard_normal((size, n)),
                self.noise_far.standard_normal(size),
                self.noise_near.standard_normal(size))


def as_streams(rng):
    """Coerce an int seed, Generator or TrialStreams into TrialStreams."""
    if isinstance(rng, TrialStreams):
        return rng
    if isinstance(rng, np.random.Generator):
        seed = int(rng.integers(0, 2 ** 63))
        return TrialStreams(seed, 0)
    if rng is None:
        return TrialStreams(np.random.SeedSequence().entropy % 2 ** 63, 0)
    return TrialStreams(int(rng), 0)
