"""Command-line entry point: ``smmo-bench`` / ``python -m smmo``."""

from __future__ import annotations

import argparse
import logging
import sys

from .apps import APPS
from .bench import (
    BenchConfig,
    BenchRecord,
    NonMonotonic,
    churn_fragmentation,
    default_churn_heap,
    max_problem_size,
    run_bench,
    save,
)
from .runtime import ALLOCATORS

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_OOM = 3
EXIT_NONMONOTONIC = 4
DEFAULT_HEAP = 1 << 20


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smmo-bench", description=__doc__)
    p.add_argument("--app", choices=sorted(APPS), required=True)
    p.add_argument("--allocator", choices=ALLOCATORS, default="dynasoar")
    p.add_argument("--heap-bytes", type=int, default=None,
                   help="heap size; default 1 MiB, or 4x the churn workload in frag mode")
    p.add_argument("--size", type=int, default=32, help="bodies, grid side, or object count")
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--csv", dest="output", default=None, help="write the CSV here as well as stdout")
    p.add_argument("--mode", choices=("run", "maxsize", "frag"), default="run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    heap = args.heap_bytes
    if heap is None:
        heap = default_churn_heap(args.size) if args.mode == "frag" else DEFAULT_HEAP
    cfg = BenchConfig(
        app=args.app, allocator=args.allocator, heap_bytes=heap, size=args.size,
        steps=args.steps, workers=args.workers, seed=args.seed, output=args.output,
    )
    try:
        cfg.validate()
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    if args.mode == "run":
        rec = run_bench(cfg)
    elif args.mode == "frag":
        if cfg.app != "synthetic":
            print("config error: --mode frag runs the synthetic churn workload (--app synthetic)", file=sys.stderr)
            return EXIT_CONFIG
        rec = churn_fragmentation(cfg.allocator, cfg.size, cfg.seed, cfg.heap_bytes)
    else:
        try:
            found = max_problem_size(cfg.app, cfg.allocator, cfg.heap_bytes, cfg.steps, cfg.seed, cfg.workers)
        except NonMonotonic as e:
            print(f"non-monotonic OOM behavior: {e}", file=sys.stderr)
            return EXIT_NONMONOTONIC
        rec = BenchRecord(cfg.app, cfg.allocator, found.size, cfg.steps, cfg.workers, cfg.seed,
                          total_ms=found.elapsed_s * 1e3)
    sys.stdout.write(save([rec], cfg.output))
    return EXIT_OK if rec.ok else EXIT_OOM


if __name__ == "__main__":
    sys.exit(main())
