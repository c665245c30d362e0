"""Word-sized atomic read-modify-write primitives.

CPython exposes no hardware atomics, so each operation below is the
software stand-in for a single machine instruction (``lock or``,
``lock and``, ``cmpxchg``).  A short critical section on a striped lock
makes the read-modify-write indivisible; no lock is ever held across two
operations, so algorithms composed from these primitives keep their
lock-free structure.  Plain loads need no lock: reading one list slot is
already indivisible.
"""

from __future__ import annotations

import threading
from typing import MutableSequence

MASK64 = (1 << 64) - 1


def _stripes(n: int) -> int:
    size = 1
    while size < n and size < 256:
        size <<= 1
    return size


class AtomicWords:
    """Array of unsigned words with atomic fetch-or / fetch-and / CAS."""

    __slots__ = ("words", "_locks", "_stripe_mask")

    def __init__(self, words: MutableSequence[int]) -> None:
        self.words = words
        n = _stripes(len(words))
        self._locks = [threading.Lock() for _ in range(n)]
        self._stripe_mask = n - 1

    def __len__(self) -> int:
        return len(self.words)

    def load(self, i: int) -> int:
        return self.words[i]

    def store(self, i: int, value: int) -> None:
        with self._locks[i & self._stripe_mask]:
            self.words[i] = value

    def fetch_or(self, i: int, mask: int) -> int:
        words = self.words
        with self._locks[i & self._stripe_mask]:
            prev = words[i]
            words[i] = prev | mask
        return prev

    def fetch_and(self, i: int, mask: int) -> int:
        words = self.words
        with self._locks[i & self._stripe_mask]:
            prev = words[i]
            words[i] = prev & mask
        return prev

    def fetch_add(self, i: int, delta: int) -> int:
        words = self.words
        with self._locks[i & self._stripe_mask]:
            prev = words[i]
            words[i] = prev + delta
        return prev

    def compare_exchange(self, i: int, expected: int, desired: int) -> int:
        """Install ``desired`` iff the word equals ``expected``; return the prior value."""
        words = self.words
        with self._locks[i & self._stripe_mask]:
            prev = words[i]
            if prev == expected:
                words[i] = desired
        return prev

    def fetch_min(self, i: int, value: int) -> int:
        words = self.words
        with self._locks[i & self._stripe_mask]:
            prev = words[i]
            if value < prev:
                words[i] = value
        return prev


class AtomicCounter:
    """A single atomic integer."""

    __slots__ = ("_value", "_lock")

    def __init__(self, value: int = 0) -> None:
        self._value = value
        self._lock = threading.Lock()

    @property
    def value(self) -> int:
        return self._value

    def add(self, delta: int = 1) -> int:
        with self._lock:
            prev = self._value
            self._value = prev + delta
        return prev


def rotated_lowest_bit(word: int, hint: int, width: int = 64) -> int:
    """Index of the lowest set bit of ``word`` after rotating right by ``hint % width``.

    ``word`` must be nonzero and fit in ``width`` bits.
    """
    r = hint % width
    if r:
        word = ((word >> r) | (word << (width - r))) & ((1 << width) - 1)
    low = (word & -word).bit_length() - 1
    return (low + r) % width
