"""Counter-based deterministic random numbers (SplitMix64).

The synthetic-dump generator needs streams that are reproducible across
platforms, NumPy versions and languages, so it avoids ``np.random`` and
uses the SplitMix64 mixing function on an explicit counter: element ``i``
of stream ``seed`` is ``mix64(seed + (i + 1) * GAMMA)`` with the usual
xor-shift/multiply finalizer. Floats come from the top 53 bits.

Substreams are derived by folding integer tags into the seed with the
same mixer, so e.g. the attention and hidden-state blocks of one dump
draw from independent streams of a single spec seed.
"""

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_MASK = (1 << 64) - 1


def mix64(x):
    """Scalar SplitMix64 finalizer on a Python int (mod 2**64)."""
    z = x & _MASK
    z = ((z ^ (z >> 30)) * _M1) & _MASK
    z = ((z ^ (z >> 27)) * _M2) & _MASK
    return z ^ (z >> 31)


def derive(seed, *tags):
    """Fold integer tags into ``seed`` to name an independent substream."""
    s = seed & _MASK
    for t in tags:
        s = mix64((s + (t & _MASK) * GAMMA) & _MASK)
    return s


def uint64_block(seed, start, count):
    """Vectorized block [start, start+count) of the uint64 stream."""
    idx = np.arange(start, start + count, dtype=np.uint64)
    z = (np.uint64(seed & _MASK) + (idx + np.uint64(1)) * np.uint64(GAMMA))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def unit_block(seed, start, count):
    """Floats in [0, 1) for block [start, start+count), float64."""
    u = uint64_block(seed, start, count)
    return (u >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


class Stream:
    """Sequential view over one counter stream."""

    def __init__(self, seed):
        self.seed = seed & _MASK
        self.pos = 0

    def floats(self, *shape):
        """Next ``prod(shape)`` uniforms in [0, 1), reshaped; float64."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        block = unit_block(self.seed, self.pos, n)
        self.pos += n
        return block.reshape(shape) if shape else float(block[0])

    def integers(self, low, high, count=None):
        """Uniform ints in [low, high); single int when count is None."""
        span = int(high) - int(low)
        if span <= 0:
            raise ValueError("empty integer range")
        n = 1 if count is None else int(count)
        u = uint64_block(self.seed, self.pos, n)
        self.pos += n
        vals = (u % np.uint64(span)).astype(np.int64) + int(low)
        return int(vals[0]) if count is None else vals

    def choice_without_replacement(self, n, k):
        """k distinct indices from range(n), order by draw."""
        if k > n:
            raise ValueError("sample larger than population")
        picked = []
        taken = set()
        while len(picked) < k:
            v = self.integers(0, n)
            if v not in taken:
                taken.add(v)
                picked.append(v)
        return picked

    def substream(self, *tags):
        return Stream(derive(self.seed, *tags))
