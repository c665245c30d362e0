"""Lock-free object allocator over a block heap.

Allocation always prefers a block that already holds objects of the same
type and still has room (an *active* block).  Only when no active block
can be found does a thread claim a free block and initialize it.  The
object-bitmap CAS inside ``Heap.reserve`` is the single point where an
allocation takes effect; the state bitmaps around it may lag and the
retry loop absorbs that.

Deallocation mirrors the allocation transitions: the thread that turns a
full block non-full re-publishes it as active, and the thread that empties
a block tries to return it to the free pool by swapping its header to the
untyped state.  That swap fails if a concurrent allocation got in first,
in which case the block simply stays allocated.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, fields
from itertools import count
from typing import Sequence

from .errors import InvalidHandle, OutOfMemory
from .heap import HEADER_BYTES, Heap, ObjectHandle, TypeDescriptor, compute_layout

# consecutive free-bitmap misses on the slow path before giving up
OOM_RETRIES = 32
MAX_BATCH = 64

_GOLDEN = 0x9E3779B97F4A7C15
_thread_seq = count()
_hints = threading.local()


def thread_hint() -> int:
    """Per-thread search hint, distinct across threads."""
    try:
        return _hints.value
    except AttributeError:
        h = (next(_thread_seq) * _GOLDEN >> 17) & 0xFFFF_FFFF
        _hints.value = h
        return h


@dataclass
class AllocatorStats:
    fast_path: int = 0
    slow_path: int = 0
    reserve_fail: int = 0
    find_fail: int = 0
    oom: int = 0
    allocs: int = 0
    deallocs: int = 0
    blocks_freed: int = 0

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_NCOUNTERS = 8
FAST, SLOW, RFAIL, FFAIL, OOM, ALLOC, DEALLOC, FREED = range(_NCOUNTERS)


class _Counters:
    """Per-thread counters, summed on demand.  Avoids shared increments."""

    def __init__(self, ntypes: int) -> None:
        self._ntypes = ntypes
        self._local = threading.local()
        self._all: list[list[int]] = []
        self._lock = threading.Lock()

    def mine(self) -> list[int]:
        try:
            return self._local.c
        except AttributeError:
            c = [0] * (_NCOUNTERS * self._ntypes)
            with self._lock:
                self._all.append(c)
            self._local.c = c
            return c

    def total(self, idx: int, type_id: int | None = None) -> int:
        with self._lock:
            rows = list(self._all)
        n = self._ntypes
        if type_id is None:
            return sum(r[idx * n + t] for r in rows for t in range(n))
        return sum(r[idx * n + type_id] for r in rows)


class Allocator:
    """The block allocator: ``allocate``, ``allocate_many``, ``deallocate``."""

    name = "dynasoar"

    def __init__(self, heap: Heap) -> None:
        self.heap = heap
        self.descriptors = heap.descriptors
        self._ntypes = len(self.descriptors)
        self._counters = _Counters(self._ntypes)
        self.pause_hook = None  # test hook: called with a step label between bitmap operations

    @classmethod
    def for_types(
        cls,
        declared_types: Sequence[Sequence[int]],
        num_blocks: int | None = None,
        heap_bytes: int | None = None,
    ) -> "Allocator":
        block_bytes, descriptors = compute_layout(declared_types)
        return cls(Heap(descriptors, block_bytes, num_blocks=num_blocks, heap_bytes=heap_bytes))

    def capacity(self, type_id: int) -> int:
        return self.descriptors[type_id].capacity

    def _pause(self, label: str, block: int) -> None:
        if self.pause_hook is not None:
            self.pause_hook(label, block)

    # ------------------------------------------------------------------

    def allocate(self, type_id: int) -> ObjectHandle:
        if not 0 <= type_id < self._ntypes:
            raise InvalidHandle(f"unknown type id {type_id}")
        heap = self.heap
        active = heap.active[type_id]
        hint = thread_hint()
        c = self._counters.mine()
        n = self._ntypes
        misses = 0
        skip: set[int] = set()  # blocks whose reserve failed during this call
        via_slow = False
        while True:
            bid = active.try_find_set(hint)
            if bid is None or bid in skip:
                # summaries may lag a concurrent update, and a block another
                # thread just filled stays in active[T] until that thread clears
                # it; level 0 minus the known-full blocks is authoritative
                bid = active.scan_find_set(hint, skip)
            if bid is None:
                bid = self._claim_block(type_id, hint, c)
                if bid is None:
                    misses += 1
                    if misses >= OOM_RETRIES:
                        c[OOM * n + type_id] += 1
                        raise OutOfMemory(f"no free block for type {type_id}")
                    skip.clear()
                    time.sleep(0)
                    continue
                misses = 0
                via_slow = True
            got = heap.reserve(bid, type_id, hint)
            if got is None:
                # block filled or was recycled since we looked it up
                c[RFAIL * n + type_id] += 1
                skip.add(bid)
                continue
            slot, full = got
            if full:
                self._pause("filled", bid)
                active.clear(bid)
            c[ALLOC * n + type_id] += 1
            if not via_slow:
                c[FAST * n + type_id] += 1
            return ObjectHandle(type_id, bid, slot)

    def _claim_block(self, type_id: int, hint: int, c: list[int]) -> int | None:
        heap = self.heap
        n = self._ntypes
        c[FFAIL * n + type_id] += 1
        bid = heap.free.find_and_clear(hint)
        if bid is None:
            return None
        self._pause("claimed", bid)
        heap.initialize_block(bid, type_id)
        heap.allocated[type_id].set(bid)
        self._pause("initialized", bid)
        heap.active[type_id].set(bid)
        c[SLOW * n + type_id] += 1
        return bid

    def allocate_many(self, type_id: int, k: int) -> list[ObjectHandle]:
        """Allocate ``k`` objects; one CAS claims as many as one block can give."""
        if not 1 <= k <= MAX_BATCH:
            raise ValueError(f"batch size must be in [1, {MAX_BATCH}], got {k}")
        if k == 1:
            return [self.allocate(type_id)]
        heap = self.heap
        active = heap.active[type_id]
        hint = thread_hint()
        c = self._counters.mine()
        n = self._ntypes
        out: list[ObjectHandle] = []
        bid = active.try_find_set(hint)
        if bid is None:
            bid = active.scan_find_set(hint)
        via_slow = bid is None
        if via_slow:
            bid = self._claim_block(type_id, hint, c)
        if bid is not None:
            slots, full = heap.reserve_many(bid, type_id, k, hint)
            if slots:
                if full:
                    active.clear(bid)
                c[ALLOC * n + type_id] += len(slots)
                if not via_slow:
                    c[FAST * n + type_id] += 1
                out = [ObjectHandle(type_id, bid, s) for s in slots]
            else:
                c[RFAIL * n + type_id] += 1
        while len(out) < k:
            out.append(self.allocate(type_id))
        return out

    def deallocate(self, handle: ObjectHandle) -> None:
        type_id, bid, slot = handle
        if not (0 <= type_id < self._ntypes and 0 <= bid < self.heap.num_blocks):
            raise InvalidHandle(f"handle {handle} out of range")
        cap = self.descriptors[type_id].capacity_mask
        if not 0 <= slot < self.descriptors[type_id].capacity:
            raise InvalidHandle(f"slot {slot} beyond capacity of type {type_id}")
        prev = self.heap.release(bid, type_id, slot)
        c = self._counters.mine()
        c[DEALLOC * self._ntypes + type_id] += 1
        if prev == cap:
            self._pause("unfilled", bid)
            self.heap.active[type_id].set(bid)
        if prev.bit_count() == 1:
            self._pause("emptied", bid)
            self.try_free_block(bid, type_id)

    def try_free_block(self, block: int, type_id: int) -> bool:
        """Return an empty block to the free pool; False if someone refilled it first."""
        heap = self.heap
        if not heap.invalidate(block, type_id):
            return False
        self._pause("invalidated", block)
        heap.active[type_id].clear(block)
        heap.allocated[type_id].clear(block)
        heap.free.set(block)
        c = self._counters.mine()
        c[FREED * self._ntypes + type_id] += 1
        return True

    # ------------------------------------------------------------------
    # counters and executor protocol

    def stats(self, type_id: int | None = None) -> AllocatorStats:
        t = self._counters.total
        return AllocatorStats(
            fast_path=t(FAST, type_id),
            slow_path=t(SLOW, type_id),
            reserve_fail=t(RFAIL, type_id),
            find_fail=t(FFAIL, type_id),
            oom=t(OOM, type_id),
            allocs=t(ALLOC, type_id),
            deallocs=t(DEALLOC, type_id),
            blocks_freed=t(FREED, type_id),
        )

    def live_count(self, type_id: int) -> int:
        t = self._counters.total
        return t(ALLOC, type_id) - t(DEALLOC, type_id)

    def num_groups(self) -> int:
        return self.heap.num_blocks

    def group_flags(self, type_id: int) -> list[int]:
        """Level-0 containers of allocated[T] (bit i = block i)."""
        return list(self.heap.allocated[type_id].levels[0].words)

    def group_word(self, type_id: int, block: int) -> int:
        tag, bits = self.heap.header(block)
        return bits if tag == type_id else 0

    def make_handle(self, type_id: int, block: int, slot: int) -> ObjectHandle:
        return ObjectHandle(type_id, block, slot)

    def field_ref(self, type_id: int, field_index: int) -> tuple[bytearray, int, int, int]:
        """``(buffer, base, block_stride, slot_stride)`` addressing one field column."""
        d: TypeDescriptor = self.descriptors[type_id]
        return (
            self.heap.storage,
            HEADER_BYTES + d.column_offsets[field_index],
            self.heap.block_bytes,
            d.field_widths[field_index],
        )

    def is_live(self, handle: ObjectHandle) -> bool:
        return self.heap.is_live(handle)

    def fragmentation(self, type_id: int) -> float:
        blocks = self.heap.allocated[type_id].popcount()
        if not blocks:
            return 0.0
        live = self.heap.live_objects(type_id)
        return 1.0 - live / (blocks * self.descriptors[type_id].capacity)
