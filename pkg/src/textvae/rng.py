"""Counter-based random number generation.

Every stochastic component (corpus synthesis, init, reparameterization,
decoding, GAN noise) gets its own stream keyed by (seed, stream_id), so
reordering one component's draws never perturbs another's. Draw number
`counter` of a stream is a pure function of (seed, stream_id, counter).
"""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RngState:
    """Seedable counter-based generator (Philox under the hood)."""

    seed: int
    stream_id: int = 0
    counter: int = 0

    def _generator(self):
        # Each call occupies its own 2^192-block region of the Philox
        # counter space, so draws of any size never overlap.
        bitgen = np.random.Philox(key=np.array([self.seed, self.stream_id], dtype=np.uint64),
                                  counter=np.array([0, 0, 0, self.counter], dtype=np.uint64))
        return np.random.Generator(bitgen)

    def _next(self):
        g = self._generator()
        self.counter += 1
        return g

    def stream(self, stream_id):
        """Independent stream sharing this state's seed."""
        return RngState(seed=self.seed, stream_id=stream_id)

    def normal(self, shape=()):
        return self._next().standard_normal(size=shape)

    def uniform(self, shape=()):
        return self._next().random(size=shape)

    def integers(self, low, high, shape=()):
        return self._next().integers(low, high, size=shape)

    def choice(self, n, size, replace=True):
        return self._next().choice(n, size=size, replace=replace)

    def permutation(self, n):
        return self._next().permutation(n)

    def copy(self):
        return RngState(self.seed, self.stream_id, self.counter)
