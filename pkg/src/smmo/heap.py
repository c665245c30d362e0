"""Block heap: fixed grid of equally sized SOA blocks plus block-state bitmaps.

Every block starts with a 16-byte header made of two words: a type tag
(``type_id + 1``, or 0 for a block that belongs to no type) and the 64-bit
object allocation bitmap.  The data segment that follows holds one column
per field.  Reservation and release update the header with a two-word
compare-and-swap, so a stale block index can never reserve a slot in a
block that has been freed or handed to another type: the tag check and
the bitmap update happen in the same atomic step.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .atomic import MASK64, rotated_lowest_bit
from .errors import DoubleFree, HeapInconsistency, InvalidHandle, LayoutError
from .hbitmap import ALL_ONES, ALL_ZEROS, HierarchicalBitmap

MAX_CAPACITY = 64
HEADER_BYTES = 16
COLUMN_ALIGN = 8
NONE_TAG = 0


def _align(n: int, a: int = COLUMN_ALIGN) -> int:
    return -(-n // a) * a


class ObjectHandle(NamedTuple):
    type_id: int
    block: int
    slot: int


@dataclass(frozen=True)
class TypeDescriptor:
    type_id: int
    field_widths: tuple[int, ...]
    capacity: int
    column_offsets: tuple[int, ...]

    @property
    def object_bytes(self) -> int:
        return sum(self.field_widths)

    @property
    def capacity_mask(self) -> int:
        return (1 << self.capacity) - 1


def columns_size(widths: Sequence[int], capacity: int) -> int:
    """Bytes taken by ``capacity`` objects laid out as 8-byte aligned columns."""
    return sum(_align(capacity * w) for w in widths)


def _column_offsets(widths: Sequence[int], capacity: int) -> tuple[int, ...]:
    offsets = []
    off = 0
    for w in widths:
        offsets.append(off)
        off += _align(capacity * w)
    return tuple(offsets)


def compute_layout(declared_types: Sequence[Sequence[int]]) -> tuple[int, list[TypeDescriptor]]:
    """Derive the block size and per-type descriptors.

    The type with the fewest bytes per object (first declared wins ties)
    gets 64 slots and fixes the data-segment size; every other type gets
    the largest capacity whose aligned columns fit in that segment.
    Returns ``(block_bytes, descriptors)``; ``block_bytes`` includes the header.
    """
    if not declared_types:
        raise LayoutError("at least one type must be declared")
    for i, widths in enumerate(declared_types):
        if not widths:
            raise LayoutError(f"type {i} has no fields")
        for w in widths:
            if w not in (4, 8):
                raise LayoutError(f"type {i}: field width {w} not in (4, 8)")

    sizes = [sum(w) for w in declared_types]
    smallest = min(range(len(sizes)), key=lambda i: (sizes[i], i))
    segment = columns_size(declared_types[smallest], MAX_CAPACITY)

    descriptors = []
    for type_id, widths in enumerate(declared_types):
        cap = MAX_CAPACITY
        while cap > 0 and columns_size(widths, cap) > segment:
            cap -= 1
        if cap == 0:
            raise LayoutError(f"type {type_id} does not fit a single object in a {segment}-byte block")
        descriptors.append(
            TypeDescriptor(type_id, tuple(widths), cap, _column_offsets(widths, cap))
        )
    return HEADER_BYTES + segment, descriptors


class Heap:
    """``num_blocks`` blocks of ``block_bytes`` each, with state bitmaps.

    ``free`` starts all-ones; ``allocated[T]`` and ``active[T]`` start empty.
    """

    def __init__(
        self,
        descriptors: Sequence[TypeDescriptor],
        block_bytes: int,
        num_blocks: int | None = None,
        heap_bytes: int | None = None,
    ) -> None:
        if (num_blocks is None) == (heap_bytes is None):
            raise ValueError("give exactly one of num_blocks, heap_bytes")
        if num_blocks is None:
            num_blocks = heap_bytes // block_bytes
        if num_blocks < 1:
            raise ValueError("heap must hold at least one block")
        if block_bytes % 8:
            raise LayoutError("block size must be a multiple of 8")

        self.descriptors = list(descriptors)
        self.block_bytes = block_bytes
        self.num_blocks = num_blocks
        self.storage = bytearray(num_blocks * block_bytes)
        self._words = memoryview(self.storage).cast("Q")
        self._wpb = block_bytes // 8
        nlocks = 1
        while nlocks < num_blocks and nlocks < 256:
            nlocks <<= 1
        self._locks = [threading.Lock() for _ in range(nlocks)]
        self._lock_mask = nlocks - 1
        self._capmasks = [d.capacity_mask for d in self.descriptors]

        self.free = HierarchicalBitmap(num_blocks, ALL_ONES)
        self.allocated = [HierarchicalBitmap(num_blocks, ALL_ZEROS) for _ in self.descriptors]
        self.active = [HierarchicalBitmap(num_blocks, ALL_ZEROS) for _ in self.descriptors]

    @property
    def heap_bytes(self) -> int:
        return len(self.storage)

    # ------------------------------------------------------------------
    # header access

    def header(self, block: int) -> tuple[int | None, int]:
        """(type_id or None, object bitmap).  Not atomic across the two words."""
        i = block * self._wpb
        tag = self._words[i]
        return (tag - 1 if tag else None), self._words[i + 1]

    def _cas_header(self, block: int, tag: int, bits: int, new_tag: int, new_bits: int) -> bool:
        words = self._words
        i = block * self._wpb
        with self._locks[block & self._lock_mask]:
            if words[i] == tag and words[i + 1] == bits:
                words[i] = new_tag
                words[i + 1] = new_bits
                return True
        return False

    def initialize_block(self, block: int, type_id: int) -> None:
        """Hand a block to ``type_id``.  Caller must own it (won it from ``free``)."""
        words = self._words
        i = block * self._wpb
        with self._locks[block & self._lock_mask]:
            words[i + 1] = 0
            words[i] = type_id + 1

    def reserve(self, block: int, type_id: int, hint: int = 0) -> tuple[int, bool] | None:
        """Claim one free slot; returns ``(slot, now_full)`` or None.

        None means the block is full or no longer belongs to ``type_id``.
        The successful CAS is the allocation's linearization point.
        """
        tag = type_id + 1
        cap = self._capmasks[type_id]
        words = self._words
        i = block * self._wpb
        while True:
            if words[i] != tag:
                return None
            bits = words[i + 1]
            vacant = ~bits & cap
            if not vacant:
                return None
            slot = rotated_lowest_bit(vacant, hint)
            new = bits | (1 << slot)
            if self._cas_header(block, tag, bits, tag, new):
                return slot, new == cap

    def reserve_many(self, block: int, type_id: int, k: int, hint: int = 0) -> tuple[list[int], bool]:
        """Claim up to ``k`` slots with a single successful CAS."""
        tag = type_id + 1
        cap = self._capmasks[type_id]
        words = self._words
        i = block * self._wpb
        while True:
            if words[i] != tag:
                return [], False
            bits = words[i + 1]
            vacant = ~bits & cap
            if not vacant:
                return [], False
            slots = []
            take = 0
            while vacant and len(slots) < k:
                s = rotated_lowest_bit(vacant, hint)
                slots.append(s)
                take |= 1 << s
                vacant &= ~(1 << s)
            new = bits | take
            if self._cas_header(block, tag, bits, tag, new):
                return slots, new == cap

    def release(self, block: int, type_id: int, slot: int) -> int:
        """Clear a slot bit; returns the bitmap value before the clear."""
        tag = type_id + 1
        mask = 1 << slot
        words = self._words
        i = block * self._wpb
        while True:
            cur_tag = words[i]
            bits = words[i + 1]
            if cur_tag != tag:
                if cur_tag == NONE_TAG:
                    raise DoubleFree(f"block {block} is not allocated (handle {type_id}/{block}/{slot})")
                raise InvalidHandle(
                    f"handle type {type_id} does not match block {block} type {cur_tag - 1}"
                )
            if not bits & mask:
                raise DoubleFree(f"slot {slot} of block {block} is not live")
            if self._cas_header(block, tag, bits, tag, bits & ~mask & MASK64):
                return bits

    def invalidate(self, block: int, type_id: int) -> bool:
        """Atomically move an empty ``type_id`` block to the untyped state."""
        return self._cas_header(block, type_id + 1, 0, NONE_TAG, 0)

    # ------------------------------------------------------------------
    # addressing

    def field_location(self, handle: ObjectHandle, field_index: int) -> int:
        d = self.descriptors[handle.type_id]
        if not 0 <= field_index < len(d.field_widths):
            raise IndexError(f"type {handle.type_id} has no field {field_index}")
        return (
            handle.block * self.block_bytes
            + HEADER_BYTES
            + d.column_offsets[field_index]
            + handle.slot * d.field_widths[field_index]
        )

    def is_live(self, handle: ObjectHandle) -> bool:
        t, b, s = handle
        if not (0 <= b < self.num_blocks and 0 <= t < len(self.descriptors)):
            return False
        i = b * self._wpb
        return self._words[i] == t + 1 and bool(self._words[i + 1] >> s & 1)

    # ------------------------------------------------------------------
    # quiescent inspection

    def live_objects(self, type_id: int) -> int:
        tag = type_id + 1
        words = self._words
        wpb = self._wpb
        total = 0
        for b in range(self.num_blocks):
            if words[b * wpb] == tag:
                total += words[b * wpb + 1].bit_count()
        return total

    def live_handles(self, type_id: int) -> list[ObjectHandle]:
        """Sequential walk over every block and slot."""
        tag = type_id + 1
        out = []
        for b in range(self.num_blocks):
            i = b * self._wpb
            if self._words[i] != tag:
                continue
            bits = self._words[i + 1]
            for s in range(MAX_CAPACITY):
                if bits >> s & 1:
                    out.append(ObjectHandle(type_id, b, s))
        return out

    def block_state(self, block: int) -> frozenset[str]:
        """Multistate of a block, cross-checked against all state bitmaps.

        Returns ``{"free"}``, ``{"allocated[T]"}`` or
        ``{"allocated[T]", "active[T]"}``; raises HeapInconsistency if the
        header and bitmaps disagree.  Requires quiescence.
        """
        type_id, bits = self.header(block)
        free = self.free.get(block)
        alloc = [t for t, bm in enumerate(self.allocated) if bm.get(block)]
        act = [t for t, bm in enumerate(self.active) if bm.get(block)]

        def fail(why: str) -> HeapInconsistency:
            return HeapInconsistency(
                f"block {block}: {why} (header type={type_id}, bits={bits:#x}, "
                f"free={free}, allocated={alloc}, active={act})"
            )

        if type_id is None:
            if not free or alloc or act or bits:
                raise fail("untyped block must be free and empty")
            return frozenset({"free"})
        if free:
            raise fail("typed block is marked free")
        if alloc != [type_id]:
            raise fail("allocated bitmaps disagree with header")
        cap = self._capmasks[type_id]
        if bits & ~cap:
            raise fail("bits set beyond capacity")
        if not bits:
            raise fail("typed block holds no objects at quiescence")
        want_active = bits != cap
        if act != ([type_id] if want_active else []):
            raise fail("active bitmaps disagree with fill level")
        state = {f"allocated[{type_id}]"}
        if want_active:
            state.add(f"active[{type_id}]")
        return frozenset(state)

    def check_consistency(self) -> None:
        """Raise unless every block and every state bitmap is consistent."""
        for bm in [self.free, *self.allocated, *self.active]:
            if not bm.is_consistent():
                raise HeapInconsistency(f"summary levels inconsistent in {bm!r}")
        for b in range(self.num_blocks):
            self.block_state(b)

    def block_counts(self) -> dict[str, int]:
        counts = {"free": self.free.popcount()}
        for t in range(len(self.descriptors)):
            counts[f"allocated[{t}]"] = self.allocated[t].popcount()
            counts[f"active[{t}]"] = self.active[t].popcount()
        return counts

    def non_full_blocks(self, type_id: int) -> int:
        tag = type_id + 1
        cap = self._capmasks[type_id]
        n = 0
        for b in range(self.num_blocks):
            i = b * self._wpb
            if self._words[i] == tag and self._words[i + 1] != cap:
                n += 1
        return n
