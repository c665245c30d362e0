"""Comparison allocators with the same interface as ``Allocator``.

``BitmapAllocator`` keeps each type in one flat SOA array sized up front
and finds empty slots with a hierarchical bitmap; it has no notion of
blocks, so it lacks the active-block density policy.

``ScatterAllocator`` keeps each type in a flat array-of-structs slot array
and places new objects by hashing a per-thread counter to a start slot,
then probing linearly for a free occupancy bit.  This is the allocation
behavior of hashing GPU allocators (mallocMC, halloc): little contention,
scattered placement.  Slots are rounded up to 16 bytes, the allocation
granularity of those allocators.

Both split ``heap_bytes`` evenly across the declared types and charge
their bookkeeping bits against the same budget.
"""

from __future__ import annotations

import threading
import time
from typing import Sequence

from .allocator import ALLOC, DEALLOC, OOM, OOM_RETRIES, AllocatorStats, _Counters, thread_hint
from .atomic import MASK64, AtomicWords
from .errors import DoubleFree, InvalidHandle, OutOfMemory
from .hbitmap import ALL_ONES, HierarchicalBitmap
from .heap import ObjectHandle

GROUP = 64
SCATTER_ALIGN = 16
_HASH_MUL = 0x9E3779B97F4A7C15


def _align(n: int, a: int) -> int:
    return -(-n // a) * a


class _FlatAllocator:
    name = "flat"

    def __init__(self, declared_types: Sequence[Sequence[int]], heap_bytes: int) -> None:
        if not declared_types:
            raise ValueError("at least one type must be declared")
        self.field_widths = [tuple(w) for w in declared_types]
        self._ntypes = len(declared_types)
        self.heap_bytes = heap_bytes
        self._share = heap_bytes // self._ntypes
        self._counters = _Counters(self._ntypes)
        self.slots: list[int] = []

    def capacity(self, type_id: int) -> int:
        return GROUP

    def num_groups(self) -> int:
        return max(-(-n // GROUP) for n in self.slots) if self.slots else 0

    def make_handle(self, type_id: int, group: int, slot: int) -> ObjectHandle:
        return ObjectHandle(type_id, 0, group * GROUP + slot)

    def live_count(self, type_id: int) -> int:
        return self._counters.total(ALLOC, type_id) - self._counters.total(DEALLOC, type_id)

    def stats(self, type_id: int | None = None) -> AllocatorStats:
        t = self._counters.total
        return AllocatorStats(
            fast_path=t(ALLOC, type_id),
            oom=t(OOM, type_id),
            allocs=t(ALLOC, type_id),
            deallocs=t(DEALLOC, type_id),
        )

    def _check(self, handle: ObjectHandle) -> None:
        t, b, s = handle
        if not (0 <= t < self._ntypes and b == 0 and 0 <= s < self.slots[t]):
            raise InvalidHandle(f"handle {handle} out of range")

    def live_handles(self, type_id: int) -> list[ObjectHandle]:
        out = []
        for g in range(-(-self.slots[type_id] // GROUP)):
            bits = self.group_word(type_id, g)
            for s in range(GROUP):
                if bits >> s & 1:
                    out.append(ObjectHandle(type_id, 0, g * GROUP + s))
        return out

    def group_flags(self, type_id: int) -> list[int]:
        ngroups = self.num_groups()
        words = [0] * -(-ngroups // 64)
        for g in range(-(-self.slots[type_id] // GROUP)):
            if self.group_word(type_id, g):
                words[g >> 6] |= 1 << (g & 63)
        return words

    def occupied_groups(self, type_id: int) -> int:
        return sum(1 for g in range(-(-self.slots[type_id] // GROUP)) if self.group_word(type_id, g))

    def fragmentation(self, type_id: int) -> float:
        """Same formula as the block allocator, with 64-slot groups standing in for blocks."""
        groups = self.occupied_groups(type_id)
        if not groups:
            return 0.0
        live = sum(self.group_word(type_id, g).bit_count() for g in range(-(-self.slots[type_id] // GROUP)))
        return 1.0 - live / (groups * GROUP)


class BitmapAllocator(_FlatAllocator):
    name = "bitmap"

    def __init__(self, declared_types: Sequence[Sequence[int]], heap_bytes: int) -> None:
        super().__init__(declared_types, heap_bytes)
        self.buffers: list[bytearray] = []
        self.column_offsets: list[tuple[int, ...]] = []
        self.free: list[HierarchicalBitmap | None] = []
        for widths in self.field_widths:
            obj = sum(widths)
            # one free bit per slot; columns padded to 8 bytes
            n = max(0, (self._share - 8 * len(widths)) * 8 // (8 * obj + 1))
            while n and sum(_align(n * w, 8) for w in widths) + -(-n // 8) > self._share:
                n -= 1
            offs, off = [], 0
            for w in widths:
                offs.append(off)
                off += _align(n * w, 8)
            self.slots.append(n)
            self.column_offsets.append(tuple(offs))
            self.buffers.append(bytearray(off))
            self.free.append(HierarchicalBitmap(n, ALL_ONES) if n else None)

    def allocate(self, type_id: int) -> ObjectHandle:
        bm = self.free[type_id]
        c = self._counters.mine()
        if bm is not None:
            hint = thread_hint()
            for _ in range(OOM_RETRIES):
                slot = bm.find_and_clear(hint)
                if slot is not None:
                    c[ALLOC * self._ntypes + type_id] += 1
                    return ObjectHandle(type_id, 0, slot)
                time.sleep(0)
        c[OOM * self._ntypes + type_id] += 1
        raise OutOfMemory(f"bitmap allocator: type {type_id} has no free slot")

    def deallocate(self, handle: ObjectHandle) -> None:
        self._check(handle)
        if not self.free[handle[0]].try_set(handle[2]):
            raise DoubleFree(f"slot {handle[2]} of type {handle[0]} is not live")
        self._counters.mine()[DEALLOC * self._ntypes + handle[0]] += 1

    def is_live(self, handle: ObjectHandle) -> bool:
        t, b, s = handle
        if not (0 <= t < self._ntypes and b == 0 and 0 <= s < self.slots[t]):
            return False
        return not self.free[t].get(s)

    def group_word(self, type_id: int, group: int) -> int:
        n = self.slots[type_id]
        lo = group * GROUP
        if lo >= n:
            return 0
        valid = (1 << min(GROUP, n - lo)) - 1
        return ~self.free[type_id].levels[0].words[group] & valid

    def field_ref(self, type_id: int, field_index: int):
        return (
            self.buffers[type_id],
            self.column_offsets[type_id][field_index],
            0,
            self.field_widths[type_id][field_index],
        )


class ScatterAllocator(_FlatAllocator):
    name = "scatter"

    def __init__(self, declared_types: Sequence[Sequence[int]], heap_bytes: int) -> None:
        super().__init__(declared_types, heap_bytes)
        self.buffers = []
        self.slot_bytes: list[int] = []
        self.field_offsets: list[tuple[int, ...]] = []
        self.occupancy: list[AtomicWords] = []
        for widths in self.field_widths:
            offs, off = [], 0
            for w in widths:
                off = _align(off, w)
                offs.append(off)
                off += w
            size = _align(off, SCATTER_ALIGN)
            n = self._share * 8 // (8 * size + 1)
            while n and n * size + 8 * -(-n // 64) > self._share:
                n -= 1
            self.slots.append(n)
            self.slot_bytes.append(size)
            self.field_offsets.append(tuple(offs))
            self.buffers.append(bytearray(n * size))
            self.occupancy.append(AtomicWords([0] * -(-n // 64)))
        self._local = threading.local()
        self.probe_total = 0
        self.probe_calls = 0

    def _start(self, n: int) -> int:
        try:
            ctr = self._local.counter
        except AttributeError:
            ctr = 0
        self._local.counter = ctr + 1
        h = (((thread_hint() << 32) | (ctr & 0xFFFF_FFFF)) * _HASH_MUL) & MASK64
        return (h >> 20) % n

    def allocate(self, type_id: int) -> ObjectHandle:
        n = self.slots[type_id]
        c = self._counters.mine()
        if n:
            occ = self.occupancy[type_id]
            words = occ.words
            start = self._start(n)
            pos = start
            stepped = 0
            while stepped < n:
                gi = pos >> 6
                off = pos & 63
                word = words[gi]
                limit = min(64, n - (gi << 6))
                vacant = ~word & ((1 << limit) - 1) & ~((1 << off) - 1)
                if vacant:
                    bit = (vacant & -vacant).bit_length() - 1
                    mask = 1 << bit
                    if not occ.fetch_or(gi, mask) & mask:
                        self.probe_total += stepped + bit - off + 1
                        self.probe_calls += 1
                        c[ALLOC * self._ntypes + type_id] += 1
                        return ObjectHandle(type_id, 0, (gi << 6) + bit)
                    continue  # lost the race for this bit; rescan the word
                stepped += limit - off
                pos = (gi << 6) + limit
                if pos >= n:
                    pos = 0
        c[OOM * self._ntypes + type_id] += 1
        raise OutOfMemory(f"scatter allocator: type {type_id} found no free slot in a full probe cycle")

    def deallocate(self, handle: ObjectHandle) -> None:
        self._check(handle)
        t, _, s = handle
        mask = 1 << (s & 63)
        prev = self.occupancy[t].fetch_and(s >> 6, ~mask & MASK64)
        if not prev & mask:
            raise DoubleFree(f"slot {s} of type {t} is not live")
        self._counters.mine()[DEALLOC * self._ntypes + t] += 1

    def is_live(self, handle: ObjectHandle) -> bool:
        t, b, s = handle
        if not (0 <= t < self._ntypes and b == 0 and 0 <= s < self.slots[t]):
            return False
        return bool(self.occupancy[t].words[s >> 6] >> (s & 63) & 1)

    def group_word(self, type_id: int, group: int) -> int:
        words = self.occupancy[type_id].words
        return words[group] if group < len(words) else 0

    def field_ref(self, type_id: int, field_index: int):
        return (
            self.buffers[type_id],
            self.field_offsets[type_id][field_index],
            0,
            self.slot_bytes[type_id],
        )

    def mean_probes(self) -> float:
        return self.probe_total / self.probe_calls if self.probe_calls else 0.0
