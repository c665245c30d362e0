import random
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import run_threads
from smmo.hbitmap import ALL_ONES, ALL_ZEROS, HierarchicalBitmap

FULL = (1 << 64) - 1


def oracle_consistent(bm: HierarchicalBitmap) -> bool:
    """Independent check: rebuild every summary level from level 0."""
    w = bm.word_bits
    level = list(bm.levels[0].words)
    n = bm.num_bits
    for i in range(n, len(level) * w):
        if level[i // w] >> (i % w) & 1:
            return False
    for upper in bm.levels[1:]:
        expect = [0] * len(upper)
        for cid, word in enumerate(level):
            if word:
                expect[cid // w] |= 1 << (cid % w)
        if list(upper.words) != expect:
            return False
        level = expect
    return True


# ---------------------------------------------------------------- create


def test_create_single_level_all_ones():
    bm = HierarchicalBitmap(64, ALL_ONES)
    assert bm.depth == 1
    assert list(bm.levels[0].words) == [FULL]


def test_create_two_levels_zero():
    bm = HierarchicalBitmap(4096, ALL_ZEROS)
    assert bm.container_counts() == [64, 1]
    assert all(w == 0 for lv in bm.levels for w in lv.words)


def test_create_three_levels_all_ones():
    bm = HierarchicalBitmap(262144, ALL_ONES)
    assert bm.container_counts() == [4096, 64, 1]
    assert all(w == FULL for lv in bm.levels for w in lv.words)
    assert bm.is_consistent() and oracle_consistent(bm)


def test_create_padding_is_zero():
    bm = HierarchicalBitmap(100, ALL_ONES)
    assert bm.levels[0].words[1] == (1 << 36) - 1
    assert bm.popcount() == 100
    assert oracle_consistent(bm)


@pytest.mark.parametrize("n", [0, -3, 1 << 41])
def test_create_rejects_bad_sizes(n):
    with pytest.raises((ValueError, OverflowError)):
        HierarchicalBitmap(n)


def test_level_sizing_rule():
    for n in [1, 63, 64, 65, 4095, 4096, 4097, 262145]:
        counts = HierarchicalBitmap(n).container_counts()
        assert counts[0] == -(-n // 64)
        for a, b in zip(counts, counts[1:]):
            assert b == -(-a // 64)
        assert counts[-1] == 1


# ---------------------------------------------------------------- set / clear


def test_try_set_propagates_first_bit():
    bm = HierarchicalBitmap(4096)
    assert bm.try_set(5) is True
    assert bm.levels[1].words[0] == 1
    assert bm.try_set(5) is False
    assert bm.levels[1].words[0] == 1


def test_try_set_race_one_winner():
    for _ in range(10_000 // 100):
        bm = HierarchicalBitmap(128)
        wins = []
        def go(i):
            wins.append(bm.try_set(5))
        run_threads(2, go)
        assert sorted(wins) == [False, True]


def test_try_set_race_many_trials():
    bm = HierarchicalBitmap(128)
    results = [[], []]
    rounds = 10_000
    barrier = threading.Barrier(2)

    def go(i):
        for r in range(rounds):
            barrier.wait()
            results[i].append(bm.try_set(5))
            barrier.wait()
            if i == 0:
                bm.clear(5)
    run_threads(2, go)
    for a, b in zip(*results):
        assert a + b == 1


def test_try_clear_on_zero_and_shared_container():
    bm = HierarchicalBitmap(4096)
    assert bm.try_clear(7) is False
    bm.set(3)
    bm.set(9)
    assert bm.try_clear(3) is True
    assert bm.levels[1].words[0] == 1  # prev popcount was 2
    assert bm.is_consistent()


def test_out_of_range_rejected():
    bm = HierarchicalBitmap(100)
    for op in (bm.try_set, bm.try_clear, bm.set, bm.clear):
        with pytest.raises(IndexError):
            op(100)


def test_set_clear_boundary_and_last_bit():
    bm = HierarchicalBitmap(128)
    bm.set(63)
    bm.set(64)
    assert bm.levels[0].words[0] and bm.levels[0].words[1]
    assert bm.levels[1].words[0] == 0b11
    bm.set(12)
    bm.clear(12)
    assert not bm.get(12) and bm.is_consistent()

    big = HierarchicalBitmap(262144)
    big.set(200_000)
    assert big.depth == 3 and big.is_consistent()
    big.clear(200_000)
    assert all(w == 0 for lv in big.levels for w in lv.words)
    assert big.popcount() == 0


def test_set_clear_ping_pong_terminates():
    bm = HierarchicalBitmap(4096)
    rounds = 10_000
    done = []

    def setter(_):
        for _ in range(rounds):
            bm.set(12)
        done.append("s")

    def clearer(_):
        for _ in range(rounds):
            bm.clear(12)
        done.append("c")

    run_threads(2, lambda i: (setter, clearer)[i](i))
    assert sorted(done) == ["c", "s"]
    assert not bm.get(12) and bm.is_consistent()


def test_clear_cascade_miniature():
    # 32 bits in 4-bit containers: 8 + 2 + 1 containers
    bm = HierarchicalBitmap(32, word_bits=4)
    assert bm.container_counts() == [8, 2, 1]
    for p in (2, 9, 18):
        bm.set(p)
    bm.trace = []
    bm.clear(18)
    assert bm.trace == [("clear", 0, 18), ("clear", 1, 4), ("clear", 2, 1)]
    assert bm.is_consistent() and oracle_consistent(bm)


def test_no_cascade_when_container_keeps_bits():
    bm = HierarchicalBitmap(32, word_bits=4)
    for p in (17, 18):
        bm.set(p)
    bm.trace = []
    bm.clear(18)
    assert bm.trace == [("clear", 0, 18)]


# ---------------------------------------------------------------- find


def test_find_unique_and_empty():
    bm = HierarchicalBitmap(4096)
    assert bm.try_find_set(0) is None
    bm.set(77)
    for hint in range(70):
        assert bm.try_find_set(hint) == 77
    assert bm.get(77)  # find is read-only


def test_find_and_clear_single_and_empty():
    bm = HierarchicalBitmap(100)
    bm.set(5)
    assert bm.find_and_clear(3) == 5
    assert bm.popcount() == 0
    assert bm.find_and_clear(3) is None


def test_find_respects_hint_rotation():
    bm = HierarchicalBitmap(64)
    bm.set(10)
    bm.set(40)
    assert bm.try_find_set(0) == 10
    assert bm.try_find_set(20) == 40
    assert bm.try_find_set(50) == 10  # wraps around


def drain(bm, threads):
    got = [[] for _ in range(threads)]

    def go(i):
        while (p := bm.find_and_clear(i * 7919)) is not None:
            got[i].append(p)
    run_threads(threads, go)
    return [p for g in got for p in g]


def test_concurrent_drain_64():
    bm = HierarchicalBitmap(4096)
    for p in range(0, 4096, 64):
        bm.set(p)
    out = drain(bm, 8)
    assert sorted(out) == list(range(0, 4096, 64))
    assert bm.popcount() == 0 and bm.is_consistent()


def test_concurrent_drain_random_1000():
    rng = random.Random(5)
    bm = HierarchicalBitmap(1 << 16)
    bits = rng.sample(range(1 << 16), 1000)
    for p in bits:
        bm.set(p)
    out = drain(bm, 8)
    assert sorted(out) == sorted(bits)


# ---------------------------------------------------------------- consistency


def test_is_consistent_detects_injected_fault():
    bm = HierarchicalBitmap(4096, ALL_ONES)
    assert bm.is_consistent()
    bm.debug_flip(1, 3)
    assert not bm.is_consistent()
    assert not oracle_consistent(bm)


def test_concurrent_mixed_ops_consistent():
    n = 1 << 14
    bm = HierarchicalBitmap(n)
    sets = [0] * 4
    clears = [0] * 4

    def go(i):
        r = random.Random(i)
        for _ in range(5000):
            p = r.randrange(n)
            op = r.random()
            if op < 0.45:
                sets[i] += bm.try_set(p)
            elif op < 0.9:
                clears[i] += bm.try_clear(p)
            else:
                clears[i] += bm.find_and_clear(r.randrange(1 << 20)) is not None
    run_threads(4, go)
    assert bm.is_consistent() and oracle_consistent(bm)
    assert bm.popcount() == sum(sets) - sum(clears)


def test_dump_one_line_per_level():
    bm = HierarchicalBitmap(4096)
    bm.set(0)
    lines = bm.dump().splitlines()
    assert len(lines) == 2 and lines[1] == "L1: " + f"{1:016x}"


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(1, 5000),
    width=st.sampled_from([4, 8, 64]),
    ops=st.lists(st.tuples(st.sampled_from("sSfcC"), st.integers(0, 1 << 30)), max_size=200),
)
def test_property_sequential_model(n, width, ops):
    bm = HierarchicalBitmap(n, word_bits=width)
    model = set()
    for op, x in ops:
        p = x % n
        if op == "s":
            assert bm.try_set(p) == (p not in model)
            model.add(p)
        elif op == "S":
            if p not in model:
                bm.set(p)
                model.add(p)
        elif op == "c":
            assert bm.try_clear(p) == (p in model)
            model.discard(p)
        elif op == "C":
            if p in model:
                bm.clear(p)
                model.discard(p)
        else:
            before = list(bm.levels[0].words)
            f = bm.try_find_set(x)
            assert list(bm.levels[0].words) == before
            assert (f is None) == (not model)
            if f is not None:
                assert f in model
        assert oracle_consistent(bm)
    assert set(bm.iter_set()) == model
    assert bm.popcount() == len(model)


def test_scan_find_set_ignores_lagging_summary():
    bm = HierarchicalBitmap(4096)
    bm.set(700)
    bm.debug_flip(1, 700 // 64)  # summary now claims the container is empty
    assert bm.try_find_set(0) is None
    assert bm.scan_find_set(0) == 700
    assert bm.scan_find_set(5, exclude={700}) is None
    bm.set(3)
    assert bm.scan_find_set(0, exclude={3}) == 700
