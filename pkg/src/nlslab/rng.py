"""Seeded SplitMix64 generator: the single randomness source of a run.

Deterministic across platforms (pure integer arithmetic), so a fixed seed
gives byte-identical sampled probe vectors and byte-identical outputs.
"""

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        return lo + (hi - lo) * (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def spawn(self) -> "SplitMix64":
        """Independent child stream (for parallel probe workers)."""
        return SplitMix64(self.next_u64())
