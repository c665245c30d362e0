"""Parallel do-all over every live object of a type.

A pass has two parts.  Planning turns the allocated-block bitmap into a
dense array ``R`` of block indices (index generation, then stream
compaction driven by an exclusive prefix sum) and snapshots each listed
block's object bitmap.  Execution hands out ``len(R) * c`` logical thread
ids, ``c`` being the type's block capacity: logical thread ``tid`` looks at
block ``R[tid // c]``, slot ``tid % c``, and runs the method if that slot
was live in the snapshot.  Logical ids are split into contiguous ranges,
one per worker, so the ``c`` threads of a block usually land on the same
worker.

Objects created during a pass are never visited.  Objects deleted during a
pass may still be visited; applications that delete mid-pass must keep the
handle meaningful (mark dead, reap in a later pass).
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

NONE = -1


class EnumerationSource(Protocol):
    """What an allocator must expose so the executor can walk its objects."""

    def capacity(self, type_id: int) -> int: ...
    def num_groups(self) -> int: ...
    def group_flags(self, type_id: int) -> list[int]: ...
    def group_word(self, type_id: int, group: int) -> int: ...
    def make_handle(self, type_id: int, group: int, slot: int): ...


# ----------------------------------------------------------------------
# scan primitives


def _chunks(n: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, n)) if n else 1
    return [(i * n // parts, (i + 1) * n // parts) for i in range(parts)]


def _pool_map(pool: ThreadPoolExecutor | None, fn, items):
    if pool is None or len(items) < 2:
        return [fn(x) for x in items]
    return list(pool.map(fn, items))


def exclusive_prefix_sum(
    flags: Sequence[int] | np.ndarray, workers: int = 1, pool: ThreadPoolExecutor | None = None
) -> np.ndarray:
    """``out[i] = sum(flags[:i])`` via a blocked two-pass scan.

    Pass 1 sums each chunk, the chunk sums are scanned sequentially, and
    pass 2 rescans each chunk starting from its offset.
    """
    a = np.asarray(flags, dtype=np.int64)
    n = a.shape[0]
    out = np.empty(n, dtype=np.int64)
    if n == 0:
        return out
    chunks = _chunks(n, workers)
    sums = _pool_map(pool, lambda c: int(a[c[0] : c[1]].sum()), chunks)
    starts = [0] * len(chunks)
    running = 0
    for i, s in enumerate(sums):
        starts[i] = running
        running += s

    def rescan(i: int) -> None:
        lo, hi = chunks[i]
        if hi > lo:
            seg = a[lo:hi]
            np.cumsum(seg, out=out[lo:hi])
            out[lo:hi] -= seg
            out[lo:hi] += starts[i]

    _pool_map(pool, rescan, list(range(len(chunks))))
    return out


def compact(
    sparse: Sequence[int] | np.ndarray, workers: int = 1, pool: ThreadPoolExecutor | None = None
) -> np.ndarray:
    """Stream compaction: keep non-NONE entries in order."""
    a = np.asarray(sparse, dtype=np.int64)
    flags = (a != NONE).astype(np.int64)
    offsets = exclusive_prefix_sum(flags, workers, pool)
    total = int(offsets[-1] + flags[-1]) if a.shape[0] else 0
    out = np.empty(total, dtype=np.int64)

    def scatter(c: tuple[int, int]) -> None:
        lo, hi = c
        keep = flags[lo:hi].astype(bool)
        out[offsets[lo:hi][keep]] = a[lo:hi][keep]

    _pool_map(pool, scatter, _chunks(a.shape[0], workers))
    return out


def indices_from_words(words: Sequence[int], num_bits: int) -> np.ndarray:
    """Sparse index array: ``i`` where bit ``i`` is set, NONE elsewhere."""
    if not len(words):
        return np.full(num_bits, NONE, dtype=np.int64)
    w = np.array(words, dtype=np.uint64)
    bits = ((w[:, None] >> np.arange(64, dtype=np.uint64)) & np.uint64(1)).astype(bool).ravel()
    bits = bits[:num_bits]
    idx = np.arange(num_bits, dtype=np.int64)
    return np.where(bits, idx, NONE)


# ----------------------------------------------------------------------


@dataclass
class DoAllPlan:
    type_id: int
    blocks: np.ndarray  # R
    capacity: int  # c
    words: list[int] = field(default_factory=list)

    @property
    def num_threads(self) -> int:
        return len(self.blocks) * self.capacity


@dataclass
class ExecutorTimings:
    plan_s: float = 0.0
    exec_s: float = 0.0
    passes: int = 0
    threads_dispatched: int = 0
    invocations: int = 0


class PassAborted(RuntimeError):
    pass


class Executor:
    """Runs methods over all objects of a type with a pool of ``workers`` threads."""

    def __init__(self, source: EnumerationSource, workers: int | None = None) -> None:
        self.source = source
        self.workers = workers or os.cpu_count() or 1
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None
        self.timings = ExecutorTimings()
        self._lock = threading.Lock()

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self) -> "Executor":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def enumerate_indices(self, type_id: int) -> np.ndarray:
        src = self.source
        return indices_from_words(src.group_flags(type_id), src.num_groups())

    def plan(self, type_id: int) -> DoAllPlan:
        sparse = self.enumerate_indices(type_id)
        blocks = compact(sparse, self.workers, self._pool)
        word = self.source.group_word
        words = [word(type_id, int(b)) for b in blocks]
        return DoAllPlan(type_id, blocks, self.source.capacity(type_id), words)

    def parallel_do_all(self, type_id: int, method: Callable) -> int:
        """Run ``method(handle)`` once per object live at planning time.

        Returns the number of invocations.
        """
        t0 = time.perf_counter()
        plan = self.plan(type_id)
        t1 = time.perf_counter()
        if plan.num_threads:
            n = self.run(plan, method)
            t2 = time.perf_counter()
        else:
            n, t2 = 0, t1  # nothing dispatched
        with self._lock:
            tm = self.timings
            tm.plan_s += t1 - t0
            tm.exec_s += t2 - t1
            tm.passes += 1
        return n

    def run(self, plan: DoAllPlan, method: Callable) -> int:
        total = plan.num_threads
        if total == 0:
            return 0
        c = plan.capacity
        blocks = plan.blocks.tolist()
        words = plan.words
        make = self.source.make_handle
        t = plan.type_id
        abort = threading.Event()

        def worker(rng: tuple[int, int]) -> tuple[int, int]:
            lo, hi = rng
            calls = 0
            tid = lo
            while tid < hi:
                if abort.is_set():
                    raise PassAborted("another worker failed")
                i = tid // c
                first = tid - i * c
                last = min(hi - i * c, c)
                bits = words[i] >> first
                slot = first
                b = blocks[i]
                while bits and slot < last:
                    if bits & 1:
                        try:
                            method(make(t, b, slot))
                        except BaseException:
                            abort.set()
                            raise
                        calls += 1
                    bits >>= 1
                    slot += 1
                tid = (i + 1) * c
            return hi - lo, calls

        ranges = [r for r in _chunks(total, self.workers) if r[1] > r[0]]
        if self._pool is None or len(ranges) == 1:
            results = [worker(r) for r in ranges]
        else:
            futures = [self._pool.submit(worker, r) for r in ranges]
            results = []
            error = None
            for f in futures:
                try:
                    results.append(f.result())
                except PassAborted:
                    pass
                except BaseException as e:  # first real failure wins
                    if error is None:
                        error = e
            if error is not None:
                raise error
        dispatched = sum(r[0] for r in results)
        calls = sum(r[1] for r in results)
        with self._lock:
            self.timings.threads_dispatched += dispatched
            self.timings.invocations += calls
        return calls
