"""Single-type workload used for space-efficiency and fragmentation runs."""

from __future__ import annotations

import numpy as np

from ..soa_types import TypeRegistry
from .base import App

ITEM_FIELDS = (("value", "i32"), ("counter", "i32"), ("a", "f32"), ("b", "f32"))


def _item_ctor(store, h, value):
    store.field(h[0], "value").set(h, value)
    store.field(h[0], "counter").set(h, 0)
    store.field(h[0], "a").set(h, 0.0)
    store.field(h[0], "b").set(h, 0.0)


class Synthetic(App):
    """``init`` allocates ``size`` objects; ``step`` bumps a counter on each."""

    name = "synthetic"

    @classmethod
    def declare(cls, registry: TypeRegistry) -> None:
        registry.register_type("Item", ITEM_FIELDS, constructor=_item_ctor)

    def init(self, size: int, seed: int = 0) -> None:
        self.item = self.registry.type_id("Item")
        self.count = 0
        self.handles = []
        for i in range(size):
            self.handles.append(self.store.new(self.item, i))
            self.count += 1

    def step(self) -> None:
        counter = self.store.field(self.item, "counter")
        get, set_ = counter.get, counter.set
        self.rt.do_all(self.item, lambda h: set_(h, get(h) + 1))

    def churn(self, size: int, seed: int = 0, keep: float = 0.5) -> None:
        """Allocate ``size`` objects, then delete a random ``1 - keep`` fraction."""
        self.init(size, seed)
        rng = np.random.default_rng(seed)
        doomed = rng.random(size) >= keep
        for h, d in zip(self.handles, doomed):
            if d:
                self.store.delete(h)
                self.count -= 1
        self.handles = [h for h, d in zip(self.handles, doomed) if not d]

    def fragmentation(self) -> float:
        return self.rt.allocator.fragmentation(self.item)

    def population(self) -> dict[str, int]:
        return {"Item": self.count}
