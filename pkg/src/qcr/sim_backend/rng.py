"""SplitMix64 streams and the shot-seed derivation."""
from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (no state increment)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def shot_seed(master_seed: int, shot_index: int) -> int:
    return mix64(master_seed + shot_index + 1)


class RngStream:
    """A SplitMix64 generator; ``draws`` counts units consumed so far."""

    __slots__ = ("state", "draws")

    def __init__(self, seed: int = 0):
        self.state = seed & MASK64
        self.draws = 0

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def next_unit(self) -> float:
        self.draws += 1
        return (self.next_u64() >> 11) / 9007199254740992.0  # 2**53

    def copy(self) -> "RngStream":
        other = RngStream(self.state)
        other.draws = self.draws
        return other

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RngStream) and other.state == self.state

    def __repr__(self) -> str:
        return f"RngStream(state={self.state:#018x}, draws={self.draws})"


def rng_next_unit(rng: RngStream) -> float:
    return rng.next_unit()
