"""Conway's game of life (B3/S23) on a torus, one Cell object per grid cell."""

from __future__ import annotations

import numpy as np

from ..soa_types import TypeRegistry
from .base import App

GLIDER = ((1, 0), (2, 1), (0, 2), (1, 2), (2, 2))


def _cell_ctor(store, h, x, y, alive):
    t = h[0]
    store.field(t, "x").set(h, x)
    store.field(t, "y").set(h, y)
    store.field(t, "alive").set(h, alive)
    store.field(t, "next").set(h, 0)


class GameOfLife(App):
    name = "gol"

    @classmethod
    def declare(cls, registry: TypeRegistry) -> None:
        registry.register_type(
            "Cell", [("x", "i32"), ("y", "i32"), ("alive", "i32"), ("next", "i32")], constructor=_cell_ctor
        )

    def init(self, size: int, seed: int = 0, density: float = 0.5, pattern=None) -> None:
        """Random soup of ``density`` unless ``pattern`` (live (x, y) cells) is given."""
        self.cell = self.registry.type_id("Cell")
        self.size = size
        f = self.store.field
        self.fx, self.fy = f(self.cell, "x"), f(self.cell, "y")
        self.alive, self.next = f(self.cell, "alive"), f(self.cell, "next")
        if pattern is None:
            live = np.random.default_rng(seed).random(size * size) < density
        else:
            live = np.zeros(size * size, dtype=bool)
            for x, y in pattern:
                live[(y % size) * size + x % size] = True
        self.grid = []
        for y in range(size):
            for x in range(size):
                self.grid.append(self.store.new(self.cell, x, y, int(live[y * size + x])))

    def step(self) -> None:
        n = self.size
        grid = self.grid
        alive_get = self.alive.get
        gx, gy = self.fx.get, self.fy.get
        set_next = self.next.set

        def decide(h):
            x, y = gx(h), gy(h)
            count = 0
            for dy in (-1, 0, 1):
                row = ((y + dy) % n) * n
                for dx in (-1, 0, 1):
                    if dx or dy:
                        count += alive_get(grid[row + (x + dx) % n])
            if alive_get(h):
                set_next(h, 1 if count in (2, 3) else 0)
            else:
                set_next(h, 1 if count == 3 else 0)

        next_get = self.next.get
        alive_set = self.alive.set

        def commit(h):
            alive_set(h, next_get(h))

        self.rt.do_all(self.cell, decide)
        self.rt.do_all(self.cell, commit)

    def live_cells(self) -> set[tuple[int, int]]:
        return {
            (self.fx.get(h), self.fy.get(h)) for h in self.grid if self.alive.get(h)
        }

    def population(self) -> dict[str, int]:
        return {"Cell": len(self.grid)}
