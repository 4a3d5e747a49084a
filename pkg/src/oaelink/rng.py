"""SplitMix64: the simulator's pinned, portable random generator.

Every fault decision in a run is drawn from a SplitMix64 stream so that a
(scenario, seed) pair replays to the same trace on any platform. The
algorithm is Steele, Lea & Flood's SplitMix64 with Vigna's constants:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

all arithmetic mod 2**64. ``split`` derives an independent child stream
for a named channel, so adding traffic on one direction of a link does
not perturb the decisions drawn on the other.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h ^= b
        h = (h * 0x100000001B3) & MASK64
    return h


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return _mix64(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def chance(self, p: float) -> bool:
        # p == 0 must never fire, p == 1 must always fire
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return self.random() < p

    def split(self, channel: str) -> "SplitMix64":
        """Child stream keyed by channel name; does not advance the parent."""
        return SplitMix64(_mix64(self.state ^ fnv1a64(channel.encode())))
