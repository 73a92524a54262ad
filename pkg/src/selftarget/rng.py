"""Counter-based random streams on top of numpy's Philox generator.

Every draw runs on a fresh generator whose counter block is derived from
(seed, stream id, draw index), so results depend only on those three values:
no hidden global state, and draws stay reproducible no matter how many
numbers earlier draws consumed.
"""

import numpy as np

# Fixed stream ids, one per purpose. Never renumber: checkpoints record draw
# counters per stream and replays must land on the same counter blocks.
WEIGHTS = 1
PRUNE = 2
SHUFFLE = 3
DROPOUT = 4
SUBSET = 5
READOUT = 6
MISC = 7


class RngStream:
    """One named stream of deterministic draws.

    Each draw uses Philox key (seed, stream) with counter word 1 set to the
    draw index, which gives every draw its own 2^64 block of counter space.
    """

    def __init__(self, seed, stream, draws=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream) & 0xFFFFFFFFFFFFFFFF
        self.draws = int(draws)

    def _generator(self):
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        counter = np.array([0, self.draws, 0, 0], dtype=np.uint64)
        self.draws += 1
        return np.random.Generator(np.random.Philox(counter=counter, key=key))

    def uniform(self, shape, low=0.0, high=1.0, dtype=np.float32):
        """Uniform draw on [low, high) with the requested float dtype."""
        dtype = np.dtype(dtype)
        out = self._generator().random(size=shape, dtype=dtype)
        if low != 0.0 or high != 1.0:
            out = out * dtype.type(high - low) + dtype.type(low)
        return out

    def normal(self, shape, dtype=np.float32):
        return self._generator().standard_normal(size=shape, dtype=np.dtype(dtype))

    def permutation(self, n):
        return self._generator().permutation(int(n))

    def integers(self, low, high, shape=None):
        return self._generator().integers(low, high, size=shape)

    def state(self):
        return {"seed": self.seed, "stream": self.stream, "draws": self.draws}

    @classmethod
    def from_state(cls, state):
        return cls(state["seed"], state["stream"], state["draws"])
