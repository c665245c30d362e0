"""Lock-free hierarchical bitmap.

Level 0 holds the ``num_bits`` payload bits packed into containers of
``word_bits`` bits.  Each higher level holds one bit per container of the
level below; that bit is set iff the container is nonzero.  The summary
levels are only *eventually* consistent: a thread that moves a container
between zero and nonzero owns the job of updating the summary bit, and
does so with the retrying ``set``/``clear`` of the next level.  Once every
operation has returned, all levels agree.

``try_find_set`` walks from the single top container down, so a lookup
costs one load per level.
"""

from __future__ import annotations

import time
from itertools import chain
from typing import Collection, Iterator

from .atomic import AtomicWords, rotated_lowest_bit

MAX_BITS = 1 << 40

ALL_ZEROS = "zeros"
ALL_ONES = "ones"


def _backoff(spins: int) -> int:
    # yield first; if the other party still has not moved, really sleep so the
    # interpreter hands it the GIL
    time.sleep(0 if spins < 8 else 1e-5)
    return spins + 1


class HierarchicalBitmap:
    """Concurrent bitmap of ``num_bits`` bits with summary levels.

    ``word_bits`` is 64 in production.  Narrower containers exist only so
    tests can build small multi-level bitmaps.
    """

    def __init__(self, num_bits: int, initial: str = ALL_ZEROS, word_bits: int = 64) -> None:
        if not isinstance(num_bits, int) or num_bits < 1:
            raise ValueError(f"num_bits must be a positive integer, got {num_bits!r}")
        if num_bits > MAX_BITS:
            raise OverflowError(f"num_bits {num_bits} exceeds {MAX_BITS}")
        if initial not in (ALL_ZEROS, ALL_ONES):
            raise ValueError(f"initial must be {ALL_ZEROS!r} or {ALL_ONES!r}")
        if word_bits < 2 or word_bits > 64:
            raise ValueError("word_bits must be in [2, 64]")

        self.num_bits = num_bits
        self.word_bits = word_bits
        self._full = (1 << word_bits) - 1
        # per level: number of meaningful bits
        sizes = [num_bits]
        while sizes[-1] > word_bits:
            sizes.append(-(-sizes[-1] // word_bits))
        self._sizes = sizes
        self.levels: list[AtomicWords] = []
        for n in sizes:
            ncont = -(-n // word_bits)
            if initial == ALL_ONES:
                words = [self._full] * ncont
                tail = n % word_bits
                if tail:
                    words[-1] = (1 << tail) - 1
            else:
                words = [0] * ncont
            self.levels.append(AtomicWords(words))
        self.depth = len(self.levels)
        self.trace: list[tuple[str, int, int]] | None = None

    # ------------------------------------------------------------------
    # single-bit transitions

    def _check(self, pos: int) -> None:
        if not 0 <= pos < self.num_bits:
            raise IndexError(f"bit {pos} out of range [0, {self.num_bits})")

    def try_set(self, pos: int) -> bool:
        """Set bit ``pos``; True iff this call performed the 0 -> 1 transition."""
        self._check(pos)
        return self._try_set(0, pos)

    def try_clear(self, pos: int) -> bool:
        """Clear bit ``pos``; True iff this call performed the 1 -> 0 transition."""
        self._check(pos)
        return self._try_clear(0, pos)

    def set(self, pos: int) -> None:
        """Retry ``try_set`` until this thread performs the transition.

        Only call this when the caller owns the transition: if nobody ever
        clears an already-set bit, it spins forever.
        """
        self._check(pos)
        self._set(0, pos)

    def clear(self, pos: int) -> None:
        self._check(pos)
        self._clear(0, pos)

    def _try_set(self, level: int, pos: int) -> bool:
        w = self.word_bits
        cid, mask = divmod(pos, w)
        mask = 1 << mask
        prev = self.levels[level].fetch_or(cid, mask)
        if prev & mask:
            return False
        if self.trace is not None:
            self.trace.append(("set", level, pos))
        if prev == 0 and level + 1 < self.depth:
            # container went 0 -> nonzero: this thread owns the summary bit
            self._set(level + 1, cid)
        return True

    def _try_clear(self, level: int, pos: int) -> bool:
        w = self.word_bits
        cid, mask = divmod(pos, w)
        mask = 1 << mask
        prev = self.levels[level].fetch_and(cid, ~mask & self._full)
        if not prev & mask:
            return False
        if self.trace is not None:
            self.trace.append(("clear", level, pos))
        if level + 1 < self.depth and prev.bit_count() == 1:
            # cleared the last bit of the container
            self._clear(level + 1, cid)
        return True

    def _set(self, level: int, pos: int) -> None:
        spins = 0
        while not self._try_set(level, pos):
            spins = _backoff(spins)

    def _clear(self, level: int, pos: int) -> None:
        spins = 0
        while not self._try_clear(level, pos):
            spins = _backoff(spins)

    # ------------------------------------------------------------------
    # search

    def try_find_set(self, hint: int = 0) -> int | None:
        """Position of some set bit, or None if a visited container reads zero.

        The bit was set when its container was read; callers must confirm
        ownership with an atomic operation before acting on it.
        """
        w = self.word_bits
        pos = 0
        for level in range(self.depth - 1, -1, -1):
            word = self.levels[level].words[pos]
            if not word:
                return None
            pos = pos * w + rotated_lowest_bit(word, hint, w)
        return pos

    def scan_find_set(self, hint: int = 0, exclude: Collection[int] = ()) -> int | None:
        """Like ``try_find_set`` but reads level 0 directly, ignoring summaries.

        Positions in ``exclude`` are treated as clear.  Costs O(N / word_bits)
        reads; callers use it to tell a truly empty bitmap from summary
        levels that lag behind a concurrent update.
        """
        w = self.word_bits
        words = self.levels[0].words
        masks: dict[int, int] = {}
        for p in exclude:
            masks[p // w] = masks.get(p // w, 0) | 1 << (p % w)
        n = len(words)
        start = hint % n
        for i in chain(range(start, n), range(start)):
            word = words[i]
            if word and i in masks:
                word &= ~masks[i]
            if word:
                return i * w + rotated_lowest_bit(word, hint, w)
        return None

    def find_and_clear(self, hint: int = 0) -> int | None:
        """Find a set bit and clear it; None when the bitmap (appears) empty."""
        while True:
            pos = self.try_find_set(hint)
            if pos is None:
                return None
            if self._try_clear(0, pos):
                return pos

    # ------------------------------------------------------------------
    # quiescent inspection (callers guarantee no operation is in flight)

    def get(self, pos: int) -> bool:
        self._check(pos)
        cid, off = divmod(pos, self.word_bits)
        return bool(self.levels[0].words[cid] >> off & 1)

    def popcount(self) -> int:
        return sum(w.bit_count() for w in self.levels[0].words)

    def iter_set(self) -> Iterator[int]:
        w = self.word_bits
        for cid, word in enumerate(self.levels[0].words):
            base = cid * w
            while word:
                low = word & -word
                yield base + low.bit_length() - 1
                word ^= low

    def is_consistent(self) -> bool:
        w = self.word_bits
        for level in range(self.depth):
            words = self.levels[level].words
            n = self._sizes[level]
            tail = n % w
            if tail and words[-1] >> tail:
                return False
            if level + 1 < self.depth:
                summary = self.levels[level + 1].words
                for cid, word in enumerate(words):
                    bit = summary[cid // w] >> (cid % w) & 1
                    if bit != (word != 0):
                        return False
        return True

    def container_counts(self) -> list[int]:
        return [len(level) for level in self.levels]

    def dump(self) -> str:
        digits = -(-self.word_bits // 4)
        lines = []
        for level, words in enumerate(self.levels):
            body = " ".join(f"{x:0{digits}x}" for x in words.words)
            lines.append(f"L{level}: {body}")
        return "\n".join(lines)

    def debug_flip(self, level: int, pos: int) -> None:
        """Flip one bit without propagation.  Fault injection for tests only."""
        cid, off = divmod(pos, self.word_bits)
        self.levels[level].words[cid] ^= 1 << off

    def __repr__(self) -> str:
        return f"HierarchicalBitmap(num_bits={self.num_bits}, levels={self.container_counts()})"
