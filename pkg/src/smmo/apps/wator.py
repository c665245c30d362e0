"""Wa-Tor predator-prey simulation on a torus.

Fish and sharks are one ``Agent`` type distinguished by ``kind``.  Each
step runs phased do-alls:

1. fish pick a random empty neighbor and bid for it (atomic min of uid);
2. fish that won their bid move, age, and maybe spawn a child behind them;
3. sharks pick a neighboring fish if any, else an empty cell, and bid;
4. winning sharks move (eating the fish there), lose energy, maybe starve
   or spawn;
5. agents marked dead in this step are deallocated.

Decisions read only the grid as it stood at the start of the phase plus
the agent's own state, and bids resolve by minimum uid, so the outcome
does not depend on how objects are spread over workers.  Eaten fish are
only marked dead during the shark phase and reclaimed in the reap phase,
which keeps every handle in the pass snapshot meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..atomic import AtomicCounter, AtomicWords
from ..soa_types import TypeRegistry
from .base import App

EMPTY_CLAIM = (1 << 64) - 1
FISH, SHARK, DEAD = 1, 2, 0
_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + _GOLDEN) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


@dataclass(frozen=True)
class WaTorParams:
    fish_density: float = 0.4
    shark_density: float = 0.02
    fish_breed: int = 3
    shark_breed: int = 12
    shark_starve: int = 3
    energy_per_fish: int = 2


def _agent_ctor(store, h, kind, pos, age, energy, rng, uid):
    t = h[0]
    f = store.field
    f(t, "kind").set(h, kind)
    f(t, "pos").set(h, pos)
    f(t, "age").set(h, age)
    f(t, "energy").set(h, energy)
    f(t, "target").set(h, -1)
    f(t, "rng").set(h, rng)
    f(t, "uid").set(h, uid)


class WaTor(App):
    name = "wator"

    @classmethod
    def declare(cls, registry: TypeRegistry) -> None:
        registry.register_type(
            "Agent",
            [
                ("kind", "i32"),
                ("pos", "i32"),
                ("age", "i32"),
                ("energy", "i32"),
                ("target", "i32"),
                ("rng", "u64"),
                ("uid", "u64"),
            ],
            constructor=_agent_ctor,
        )

    def init(self, size: int, seed: int = 0, params: WaTorParams | None = None,
             agents: list[tuple[int, int]] | None = None) -> None:
        """Seed a ``size`` x ``size`` torus.

        ``agents`` optionally lists ``(kind, cell)`` pairs to place instead
        of a random population.
        """
        self.params = params or WaTorParams()
        self.size = size
        self.ncells = size * size
        self.seed = seed
        self.steps = 0
        self.agent = self.registry.type_id("Agent")
        f = self.store.field
        t = self.agent
        self.kind, self.pos, self.age = f(t, "kind"), f(t, "pos"), f(t, "age")
        self.energy, self.target = f(t, "energy"), f(t, "target")
        self.rng, self.uid = f(t, "rng"), f(t, "uid")

        self.cells: list = [None] * self.ncells
        self.claims = AtomicWords([EMPTY_CLAIM] * self.ncells)
        self.fish = AtomicCounter()
        self.sharks = AtomicCounter()

        if agents is None:
            r = np.random.default_rng(seed)
            u = r.random(self.ncells)
            ages = r.integers(0, max(self.params.fish_breed, self.params.shark_breed), self.ncells)
            agents = []
            for cell in range(self.ncells):
                if u[cell] < self.params.fish_density:
                    agents.append((FISH, cell, int(ages[cell] % self.params.fish_breed)))
                elif u[cell] < self.params.fish_density + self.params.shark_density:
                    agents.append((SHARK, cell, int(ages[cell] % self.params.shark_breed)))
        for entry in agents:
            kind, cell = entry[0], entry[1]
            age = entry[2] if len(entry) > 2 else 0
            self._spawn(kind, cell, uid=cell, rng=splitmix64(seed * self.ncells + cell)[1], age=age)

    def _spawn(self, kind: int, cell: int, uid: int, rng: int, age: int = 0):
        energy = self.params.shark_starve if kind == SHARK else 0
        h = self.store.new(self.agent, kind, cell, age, energy, rng, uid)
        self.cells[cell] = h
        (self.fish if kind == FISH else self.sharks).add(1)
        return h

    def _neighbors(self, cell: int) -> tuple[int, int, int, int]:
        n = self.size
        y, x = divmod(cell, n)
        return (
            ((y - 1) % n) * n + x,
            y * n + (x + 1) % n,
            ((y + 1) % n) * n + x,
            y * n + (x - 1) % n,
        )

    def _child_uid(self, phase: int, cell: int) -> int:
        return (2 * self.steps + phase + 1) * self.ncells + cell

    def _pick(self, h, choices: list[int]) -> int:
        state, out = splitmix64(self.rng.get(h))
        self.rng.set(h, state)
        return choices[out % len(choices)]

    # ------------------------------------------------------------------

    def step(self) -> None:
        p = self.params
        cells = self.cells
        claims = self.claims
        kind_get, kind_set = self.kind.get, self.kind.set
        pos_get, pos_set = self.pos.get, self.pos.set
        age_get, age_set = self.age.get, self.age.set
        en_get, en_set = self.energy.get, self.energy.set
        tgt_get, tgt_set = self.target.get, self.target.set
        uid_get = self.uid.get

        def plan(h, mover: int) -> None:
            if kind_get(h) != mover:
                return
            here = pos_get(h)
            nbrs = self._neighbors(here)
            choices = []
            if mover == SHARK:
                choices = [c for c in nbrs if cells[c] is not None and kind_get(cells[c]) == FISH]
            if not choices:
                choices = [c for c in nbrs if cells[c] is None]
            if choices:
                target = self._pick(h, choices)
                tgt_set(h, target)
                claims.fetch_min(target, uid_get(h))
            else:
                tgt_set(h, -1)

        def move_fish(h) -> None:
            if kind_get(h) != FISH:
                return
            here = pos_get(h)
            target = tgt_get(h)
            moved = target >= 0 and claims.words[target] == uid_get(h)
            if moved:
                cells[here] = None
                cells[target] = h
                pos_set(h, target)
            age = age_get(h) + 1
            if moved and age >= p.fish_breed:
                age = 0
                state, out = splitmix64(self.rng.get(h) ^ 0xD1B54A32D192ED03)
                self._spawn(FISH, here, self._child_uid(0, here), out)
            age_set(h, age)

        def move_shark(h) -> None:
            if kind_get(h) != SHARK:
                return
            here = pos_get(h)
            target = tgt_get(h)
            energy = en_get(h)
            moved = target >= 0 and claims.words[target] == uid_get(h)
            if moved:
                prey = cells[target]
                if prey is not None:
                    kind_set(prey, DEAD)
                    self.fish.add(-1)
                    energy += p.energy_per_fish
                cells[here] = None
                cells[target] = h
                pos_set(h, target)
            energy -= 1
            age = age_get(h) + 1
            if energy <= 0:
                kind_set(h, DEAD)
                cells[pos_get(h)] = None
                self.sharks.add(-1)
                return
            if moved and age >= p.shark_breed:
                age = 0
                state, out = splitmix64(self.rng.get(h) ^ 0xD1B54A32D192ED03)
                self._spawn(SHARK, here, self._child_uid(1, here), out)
            age_set(h, age)
            en_set(h, energy)

        delete = self.store.delete

        def reap(h) -> None:
            if kind_get(h) == DEAD:
                delete(h)

        t = self.agent
        self.rt.do_all(t, lambda h: plan(h, FISH))
        self.rt.do_all(t, move_fish)
        claims.words[:] = [EMPTY_CLAIM] * self.ncells
        self.rt.do_all(t, lambda h: plan(h, SHARK))
        self.rt.do_all(t, move_shark)
        claims.words[:] = [EMPTY_CLAIM] * self.ncells
        self.rt.do_all(t, reap)
        self.steps += 1

    def population(self) -> dict[str, int]:
        return {"fish": self.fish.value, "shark": self.sharks.value}

    def grid_kinds(self) -> list[int]:
        return [0 if h is None else self.kind.get(h) for h in self.cells]
