"""Counter-based random streams for reproducible, call-order-independent generation.

Every stream is addressed by (seed, *path) where path parts are strings or
integers. Drawing from one stream never affects another, so instance fields can
be generated in any order and still come out identical. The generator is a
keyed SplitMix64: output k of a stream is mix64(key + k * GOLDEN), pure 64-bit
integer arithmetic, hence bit-identical across platforms.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(x: int) -> int:
    """SplitMix64 finalizer: bijective 64-bit scramble."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def _part_hash(part: str | int) -> int:
    if isinstance(part, bool):  # bool is an int subclass; reject to avoid surprises
        raise TypeError("stream path parts must be str or int, not bool")
    if isinstance(part, int):
        return mix64(part & _MASK64) ^ 0xD6E8FEB86659FD93
    if isinstance(part, str):
        return _fnv1a(part.encode("utf-8"))
    raise TypeError(f"stream path parts must be str or int, got {type(part).__name__}")


def stream_key(seed: int, *path: str | int) -> int:
    """Derive the 64-bit key of the stream addressed by (seed, *path)."""
    key = mix64((seed & _MASK64) ^ 0xA0761D6478BD642F)
    for part in path:
        key = mix64((key + _part_hash(part)) & _MASK64)
    return key


class Stream:
    """One independent random stream; draws advance an internal counter."""

    __slots__ = ("seed", "path", "key", "counter")

    def __init__(self, seed: int, *path: str | int):
        self.seed = seed
        self.path = path
        self.key = stream_key(seed, *path)
        self.counter = 0

    def child(self, *path: str | int) -> "Stream":
        """A sub-stream with its own counter; unaffected by this stream's state."""
        return Stream(self.seed, *self.path, *path)

    def next_raw(self) -> int:
        value = mix64((self.key + self.counter * _GOLDEN) & _MASK64)
        self.counter += 1
        return value

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform float in [lo, hi) with 53-bit resolution."""
        u = (self.next_raw() >> 11) * (2.0**-53)
        return lo + (hi - lo) * u

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive, exactly unbiased."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_raw()
            if v < limit:
                return lo + (v % span)

    def choice(self, seq):
        if not seq:
            raise ValueError("cannot choose from an empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> list:
        """Fisher-Yates shuffle, in place; returns the list for convenience."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
        return items
