"""Wiring: registry + allocator + object store + executor."""

from __future__ import annotations

from typing import Callable

from .allocator import Allocator
from .baselines import BitmapAllocator, ScatterAllocator
from .executor import Executor
from .heap import Heap, ObjectHandle
from .soa_types import ObjectStore, TypeRegistry

ALLOCATORS = ("dynasoar", "bitmap", "scatter")


def make_allocator(
    name: str,
    registry: TypeRegistry,
    heap_bytes: int | None = None,
    num_blocks: int | None = None,
):
    registry.freeze()
    if name == "dynasoar":
        heap = Heap(registry.descriptors, registry.block_bytes, num_blocks=num_blocks, heap_bytes=heap_bytes)
        return Allocator(heap)
    if heap_bytes is None:
        if num_blocks is None:
            raise ValueError("give heap_bytes or num_blocks")
        heap_bytes = num_blocks * registry.block_bytes
    if name == "bitmap":
        return BitmapAllocator(registry.field_widths(), heap_bytes)
    if name == "scatter":
        return ScatterAllocator(registry.field_widths(), heap_bytes)
    raise ValueError(f"unknown allocator {name!r}; choose from {ALLOCATORS}")


class Runtime:
    def __init__(
        self,
        registry: TypeRegistry,
        allocator: str = "dynasoar",
        heap_bytes: int | None = None,
        num_blocks: int | None = None,
        workers: int = 1,
    ) -> None:
        self.registry = registry.freeze()
        self.allocator = make_allocator(allocator, registry, heap_bytes, num_blocks)
        self.store = ObjectStore(registry, self.allocator)
        self.executor = Executor(self.allocator, workers)

    def do_all(self, type_: int | str, method: Callable[[ObjectHandle], None]) -> int:
        return self.executor.parallel_do_all(self.registry.type_id(type_), method)

    def handles(self, type_: int | str) -> list[ObjectHandle]:
        """Sequential walk over the live objects of a type."""
        type_id = self.registry.type_id(type_)
        plan = self.executor.plan(type_id)
        make = self.allocator.make_handle
        out = []
        for b, bits in zip(plan.blocks.tolist(), plan.words):
            s = 0
            while bits:
                if bits & 1:
                    out.append(make(type_id, b, s))
                bits >>= 1
                s += 1
        return out

    def live_count(self, type_: int | str) -> int:
        return self.allocator.live_count(self.registry.type_id(type_))

    def close(self) -> None:
        self.executor.close()

    def __enter__(self) -> "Runtime":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
