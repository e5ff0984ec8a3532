"""Counter-based coin source.

Coin ``i`` of a sketch with seed ``s`` is the top bit of
``splitmix64(s + (i + 1) * GAMMA)``. Because the generator state after
``i`` draws is a closed-form function of ``(s, i)``, restoring a decoded
sketch only needs the seed and the number of coins already consumed.
"""

RNG_ID = 1  # splitmix64, top output bit, counter-indexed

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB


def splitmix64(state):
    z = state & MASK64
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31)


def coin_bit(seed, index):
    """Return the fair bit number ``index`` (0-based) of the stream ``seed``."""
    return splitmix64(seed + (index + 1) * GAMMA) >> 63


class CoinSource:
    """Callable coin stream; ``used`` counts the bits drawn so far."""

    __slots__ = ("seed", "used")

    def __init__(self, seed, used=0):
        self.seed = seed & MASK64
        self.used = used

    def __call__(self):
        bit = coin_bit(self.seed, self.used)
        self.used += 1
        return bit
