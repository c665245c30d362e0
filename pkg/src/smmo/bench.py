"""Benchmark harness: timing breakdown, fragmentation, and space efficiency.

Each run produces one CSV row with the columns in ``CSV_COLUMNS``.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

from .apps import APPS
from .errors import LayoutError, OutOfMemory

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "app", "allocator", "size", "steps", "workers", "seed",
    "plan_ms", "exec_ms", "total_ms", "frag", "peak_live", "checksum", "status",
)


@dataclass
class BenchConfig:
    app: str
    allocator: str = "dynasoar"
    heap_bytes: int = 1 << 20
    size: int = 32
    steps: int = 10
    workers: int = 1
    seed: int = 42
    output: str | None = None

    def validate(self) -> None:
        from .runtime import ALLOCATORS

        if self.app not in APPS:
            raise ValueError(f"unknown app {self.app!r}; choose from {sorted(APPS)}")
        if self.allocator not in ALLOCATORS:
            raise ValueError(f"unknown allocator {self.allocator!r}; choose from {ALLOCATORS}")
        for name in ("heap_bytes", "workers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("size", "steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class BenchRecord:
    app: str
    allocator: str
    size: int
    steps: int
    workers: int
    seed: int
    plan_ms: float = 0.0
    exec_ms: float = 0.0
    total_ms: float = 0.0
    frag: float = 0.0
    peak_live: int = 0
    checksum: int = 0
    status: str = "ok"
    stats: dict = field(default_factory=dict, repr=False)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in CSV_COLUMNS}


def write_csv(records: list[BenchRecord], out) -> None:
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow(r.row())


def read_csv(text: str) -> list[BenchRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(
            BenchRecord(
                app=row["app"], allocator=row["allocator"], size=int(row["size"]),
                steps=int(row["steps"]), workers=int(row["workers"]), seed=int(row["seed"]),
                plan_ms=float(row["plan_ms"]), exec_ms=float(row["exec_ms"]),
                total_ms=float(row["total_ms"]), frag=float(row["frag"]),
                peak_live=int(row["peak_live"]), checksum=int(row["checksum"]), status=row["status"],
            )
        )
    return out


def fragmentation(allocator, type_id: int) -> float:
    """1 - live / (occupied blocks * capacity); 0 is perfectly dense.

    Flat allocators count 64-slot groups with at least one live object as
    their blocks.
    """
    return allocator.fragmentation(type_id)


def _make_app(cfg: BenchConfig):
    return APPS[cfg.app](allocator=cfg.allocator, heap_bytes=cfg.heap_bytes, workers=cfg.workers)


def run_bench(cfg: BenchConfig) -> BenchRecord:
    """Init the app, run ``steps`` steps, and record timings and heap metrics.

    Running out of memory is a failed run (status ``oom@init`` or
    ``oom@step<k>``), not an exception.
    """
    cfg.validate()
    rec = BenchRecord(cfg.app, cfg.allocator, cfg.size, cfg.steps, cfg.workers, cfg.seed)
    t0 = time.perf_counter()
    try:
        app = _make_app(cfg)
    except (ValueError, LayoutError) as e:
        # heap smaller than one block
        log.debug("heap setup failed: %s", e)
        rec.status = "oom@init"
        return rec
    with app:
        stage = "init"
        try:
            app.init(cfg.size, cfg.seed)
            rec.peak_live = app.live_objects()
            for k in range(cfg.steps):
                stage = f"step{k}"
                app.step()
                rec.peak_live = max(rec.peak_live, app.live_objects())
        except OutOfMemory:
            rec.status = f"oom@{stage}"
        t1 = time.perf_counter()
        tm = app.rt.executor.timings
        rec.plan_ms = tm.plan_s * 1e3
        rec.exec_ms = tm.exec_s * 1e3
        rec.total_ms = (t1 - t0) * 1e3
        types = [t.type_id for t in app.registry.types]
        rec.frag = max((fragmentation(app.rt.allocator, t) for t in types), default=0.0)
        rec.stats = app.rt.allocator.stats().as_dict()
        if rec.ok:
            rec.checksum = app.checksum()
    return rec


def churn_fragmentation(allocator: str, size: int, seed: int, heap_bytes: int | None = None) -> BenchRecord:
    """Allocate ``size`` synthetic objects, free a random half, measure fragmentation.

    The default heap holds four times the objects allocated.
    """
    from .apps.synthetic import Synthetic

    if heap_bytes is None:
        heap_bytes = default_churn_heap(size)
    rec = BenchRecord("synthetic", allocator, size, 0, 1, seed)
    t0 = time.perf_counter()
    with Synthetic(allocator=allocator, heap_bytes=heap_bytes) as app:
        try:
            app.churn(size, seed)
        except OutOfMemory:
            rec.status = "oom@init"
            return rec
        rec.total_ms = (time.perf_counter() - t0) * 1e3
        rec.frag = app.fragmentation()
        rec.peak_live = size
        rec.stats = app.rt.allocator.stats().as_dict()
    return rec


def default_churn_heap(size: int) -> int:
    from .apps.synthetic import ITEM_FIELDS
    from .soa_types import KINDS

    obj = sum(KINDS[k][1] for _, k in ITEM_FIELDS)
    return 4 * size * obj


class NonMonotonic(RuntimeError):
    pass


@dataclass
class SearchResult:
    size: int
    probes: dict[int, bool]
    elapsed_s: float

    def __int__(self) -> int:
        return self.size


def search_max_passing(passes: Callable[[int], bool], start: int = 1, limit: int = 1 << 30) -> SearchResult:
    """Largest ``s`` with ``passes(s)``, by doubling then bisection.

    Sizes are assumed monotone (pass below some threshold, fail above).
    Any probe that contradicts that raises NonMonotonic. Bisection alone
    rarely sees a contradiction, so the boundary is re-run uncached and its
    lower neighbour checked before returning.
    """
    t0 = time.perf_counter()
    probes: dict[int, bool] = {}

    def probe(s: int) -> bool:
        if s not in probes:
            probes[s] = passes(s)
            log.debug("probe size=%d -> %s", s, probes[s])
            bad_pass = [p for p, ok in probes.items() if ok]
            bad_fail = [p for p, ok in probes.items() if not ok]
            if bad_pass and bad_fail and min(bad_fail) <= max(bad_pass):
                raise NonMonotonic(f"size {min(bad_fail)} failed but {max(bad_pass)} passed")
        return probes[s]

    if not probe(start):
        lo, hi = 0, start
    else:
        lo = start
        hi = start * 2
        while hi <= limit and probe(hi):
            lo, hi = hi, hi * 2
        if hi > limit:
            return SearchResult(lo, probes, time.perf_counter() - t0)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe(mid):
            lo = mid
        else:
            hi = mid
    _confirm(passes, probe, lo, hi)
    return SearchResult(lo, probes, time.perf_counter() - t0)


def _confirm(passes, probe, lo: int, hi: int) -> None:
    if lo >= 2 and not probe(lo - 1):
        raise NonMonotonic(f"size {lo - 1} failed but {lo} passed")
    if lo >= 1 and not passes(lo):
        raise NonMonotonic(f"size {lo} passed once and then failed")
    if passes(hi):
        raise NonMonotonic(f"size {hi} failed once and then passed")


def max_problem_size(app: str, allocator: str, heap_bytes: int, steps: int = 0,
                     seed: int = 42, workers: int = 1) -> SearchResult:
    """Largest problem size that runs ``steps`` steps without running out of memory."""

    def passes(size: int) -> bool:
        cfg = BenchConfig(app, allocator, heap_bytes, size, steps, workers, seed)
        return run_bench(cfg).ok

    return search_max_passing(passes)


def save(records: list[BenchRecord], path: str | Path | None) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    text = buf.getvalue()
    if path:
        Path(path).write_text(text)
    return text
