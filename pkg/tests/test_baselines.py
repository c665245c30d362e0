import random

import pytest

from helpers import run_threads
from smmo.allocator import Allocator
from smmo.baselines import GROUP, BitmapAllocator, ScatterAllocator
from smmo.errors import DoubleFree, InvalidHandle, OutOfMemory
from smmo.executor import Executor
from smmo.heap import compute_layout

TYPES = [[4, 4], [8, 8, 4]]


def make(kind, heap_bytes=1 << 16, types=TYPES):
    if kind == "dynasoar":
        block_bytes, _ = compute_layout(types)
        return Allocator.for_types(types, num_blocks=heap_bytes // block_bytes)
    return {"bitmap": BitmapAllocator, "scatter": ScatterAllocator}[kind](types, heap_bytes)


ALL = ["dynasoar", "bitmap", "scatter"]


# ---------------------------------------------------------------- bitmap


def test_bitmap_fresh_allocation():
    a = BitmapAllocator([[4]], 4096)
    before = a.free[0].popcount()
    h = a.allocate(0)
    assert h.block == 0 and 0 <= h.slot < a.slots[0]
    assert a.free[0].popcount() == before - 1


def test_bitmap_drain_then_oom():
    a = BitmapAllocator([[4]], 1024)
    n = a.slots[0]
    hs = [a.allocate(0) for _ in range(n)]
    assert len(set(hs)) == n
    with pytest.raises(OutOfMemory):
        a.allocate(0)


def test_bitmap_concurrent_drain():
    a = BitmapAllocator([[4]], 1 << 14)
    n = a.slots[0]
    got = [[] for _ in range(8)]

    def go(i):
        while True:
            try:
                got[i].append(a.allocate(0).slot)
            except OutOfMemory:
                return
    run_threads(8, go)
    flat = [s for g in got for s in g]
    assert sorted(flat) == list(range(n))


def test_bitmap_budget_includes_free_bits():
    a = BitmapAllocator([[4, 4]], 10_000)
    n = a.slots[0]
    assert n * 8 + -(-n // 8) <= 10_000
    assert (n + 64) * 8 > 10_000 - 64  # no gross waste


# ---------------------------------------------------------------- scatter


def test_scatter_single_allocation():
    a = ScatterAllocator([[4]], 4096)
    h = a.allocate(0)
    assert a.is_live(h) and a.live_count(0) == 1


def test_scatter_slot_size_rounded():
    a = ScatterAllocator([[4], [8, 4, 4, 4]], 1 << 14)
    assert a.slot_bytes == [16, 32]


def test_scatter_probes_at_half_occupancy():
    a = ScatterAllocator([[4, 4, 4, 4]], 20_000 * 16 + 20_000)
    n = a.slots[0]
    r = random.Random(2)
    live = [a.allocate(0) for _ in range(n // 2)]
    a.probe_total = a.probe_calls = 0
    for _ in range(10_000):
        live.append(a.allocate(0))
        a.deallocate(live.pop(r.randrange(len(live))))
    alpha = len(live) / n
    model = 1 / (1 - alpha)  # expected probes if occupied slots were independent
    mean = a.mean_probes()
    assert mean > 1
    assert 0.7 * model < mean < 1.3 * model


def test_scatter_successive_allocations_not_adjacent():
    a = ScatterAllocator([[4, 4, 4, 4]], 100_000 * 16)
    slots = [a.allocate(0).slot for _ in range(1000)]
    adjacent = sum(abs(x - y) == 1 for x, y in zip(slots, slots[1:])) / (len(slots) - 1)
    assert adjacent < 0.10


def test_scatter_oom_after_full_cycle():
    a = ScatterAllocator([[4]], 2048)
    n = a.slots[0]
    hs = {a.allocate(0) for _ in range(n)}
    assert len(hs) == n
    with pytest.raises(OutOfMemory):
        a.allocate(0)
    victim = next(iter(hs))
    a.deallocate(victim)
    assert a.allocate(0) == victim


# ---------------------------------------------------------------- shared suite


@pytest.mark.parametrize("kind", ALL)
def test_interface_uniqueness_and_accounting(kind):
    a = make(kind)
    lives = [[] for _ in range(4)]

    def go(i):
        r = random.Random(i)
        mine = lives[i]
        for _ in range(3000):
            if mine and r.random() < 0.5:
                a.deallocate(mine.pop(r.randrange(len(mine))))
            else:
                mine.append(a.allocate(r.randrange(2)))
    run_threads(4, go)
    live = [h for l in lives for h in l]
    assert len(set(live)) == len(live)
    for t in range(2):
        mine = sorted(h for h in live if h.type_id == t)
        assert a.live_count(t) == len(mine)
        walk = a.heap.live_handles(t) if kind == "dynasoar" else a.live_handles(t)
        assert sorted(walk) == mine
        assert all(a.is_live(h) for h in mine)


@pytest.mark.parametrize("kind", ALL)
def test_interface_oom_and_recovery(kind):
    a = make(kind, heap_bytes=4096, types=[[4, 4]])
    hs = []
    with pytest.raises(OutOfMemory):
        while True:
            hs.append(a.allocate(0))
    assert len(set(hs)) == len(hs) > 0
    assert a.stats().oom == 1
    a.deallocate(hs[0])
    a.allocate(0)


@pytest.mark.parametrize("kind", ALL)
def test_interface_double_free(kind):
    a = make(kind)
    h = a.allocate(0)
    a.allocate(0)
    a.deallocate(h)
    with pytest.raises(DoubleFree):
        a.deallocate(h)


@pytest.mark.parametrize("kind", ["bitmap", "scatter"])
def test_flat_rejects_foreign_handles(kind):
    a = make(kind)
    h = a.allocate(0)
    with pytest.raises(InvalidHandle):
        a.deallocate(h._replace(block=3))


@pytest.mark.parametrize("kind", ALL)
def test_do_all_over_any_allocator(kind):
    a = make(kind)
    r = random.Random(0)
    hs = [a.allocate(r.randrange(2)) for _ in range(700)]
    for h in r.sample(hs, 300):
        a.deallocate(h)
    seen = []
    with Executor(a, workers=3) as ex:
        for t in range(2):
            ex.parallel_do_all(t, seen.append)
    assert sorted(seen) == sorted(h for h in hs if a.is_live(h))


def test_group_fragmentation_metric():
    a = ScatterAllocator([[4]], 1 << 14)
    assert a.fragmentation(0) == 0.0
    hs = []
    while len(hs) < 300:
        hs.append(a.allocate(0))
    groups = {h.slot // GROUP for h in hs}
    assert a.occupied_groups(0) == len(groups)
    assert a.fragmentation(0) == pytest.approx(1 - 300 / (len(groups) * GROUP))


def test_locality_contrast_after_churn():
    types = [[4, 4, 4, 4]]
    live_target = 20_000
    heap = 4 * live_target * 16
    block_bytes, _ = compute_layout(types)
    dyn = Allocator.for_types(types, num_blocks=heap // block_bytes)
    sc = ScatterAllocator(types, heap)
    for alloc in (dyn, sc):
        hs = [alloc.allocate(0) for _ in range(2 * live_target)]
        for h in random.Random(8).sample(hs, live_target):
            alloc.deallocate(h)
    dyn_blocks = sum(1 for b in range(dyn.heap.num_blocks) if dyn.heap.header(b)[0] == 0)
    assert dyn.heap.live_objects(0) == sc.live_count(0) == live_target
    assert dyn_blocks <= sc.occupied_groups(0)
    assert dyn.fragmentation(0) <= sc.fragmentation(0)
