"""Gravitational n-body with an Euler step, one Body object per particle."""

from __future__ import annotations

import math

import numpy as np

from ..soa_types import TypeRegistry
from .base import App

BODY_FIELDS = ("pos_x", "pos_y", "vel_x", "vel_y", "force_x", "force_y", "mass")

GRAVITY = 4e-3
SOFTENING2 = 1e-2
DT = 5e-3


def _body_ctor(store, h, pos_x, pos_y, vel_x, vel_y, mass):
    f = store.field
    f(h[0], "pos_x").set(h, pos_x)
    f(h[0], "pos_y").set(h, pos_y)
    f(h[0], "vel_x").set(h, vel_x)
    f(h[0], "vel_y").set(h, vel_y)
    f(h[0], "force_x").set(h, 0.0)
    f(h[0], "force_y").set(h, 0.0)
    f(h[0], "mass").set(h, mass)


def pairwise_force(px, py, m, ox, oy, om):
    """Force on a body at (px, py) from one at (ox, oy)."""
    dx = ox - px
    dy = oy - py
    d2 = dx * dx + dy * dy + SOFTENING2
    f = GRAVITY * m * om / (d2 * math.sqrt(d2))
    return f * dx, f * dy


class NBody(App):
    name = "nbody"

    @classmethod
    def declare(cls, registry: TypeRegistry) -> None:
        registry.register_type("Body", [(n, "f32") for n in BODY_FIELDS], constructor=_body_ctor)

    def init(self, size: int, seed: int = 0) -> None:
        self.body = self.registry.type_id("Body")
        self.n = size
        self._bind()
        rng = np.random.default_rng(seed)
        for _ in range(size):
            px, py = rng.uniform(-1.0, 1.0, 2)
            vx, vy = rng.uniform(-0.1, 0.1, 2)
            m = rng.uniform(0.5, 1.5)
            self.store.new(self.body, float(px), float(py), float(vx), float(vy), float(m))

    def add_body(self, pos_x, pos_y, vel_x=0.0, vel_y=0.0, mass=1.0):
        if not hasattr(self, "body"):
            self.body = self.registry.type_id("Body")
            self.n = 0
            self._bind()
        self.n += 1
        return self.store.new(self.body, pos_x, pos_y, vel_x, vel_y, mass)

    def _bind(self) -> None:
        f = self.store.field
        t = self.registry.type_id("Body")
        self.px, self.py = f(t, "pos_x"), f(t, "pos_y")
        self.vx, self.vy = f(t, "vel_x"), f(t, "vel_y")
        self.fx, self.fy = f(t, "force_x"), f(t, "force_y")
        self.mass = f(t, "mass")

    def step(self, dt: float = DT) -> None:
        bodies = self.rt.handles(self.body)
        gx, gy, gm = self.px.get, self.py.get, self.mass.get
        others = bodies

        def compute_force(h):
            px, py, m = gx(h), gy(h), gm(h)
            fx = fy = 0.0
            for o in others:
                if o == h:
                    continue
                ax, ay = pairwise_force(px, py, m, gx(o), gy(o), gm(o))
                fx += ax
                fy += ay
            self.fx.set(h, fx)
            self.fy.set(h, fy)

        def update(h):
            m = gm(h)
            vx = self.vx.get(h) + self.fx.get(h) / m * dt
            vy = self.vy.get(h) + self.fy.get(h) / m * dt
            self.vx.set(h, vx)
            self.vy.set(h, vy)
            # position uses the stored (rounded) velocity
            self.px.set(h, gx(h) + self.vx.get(h) * dt)
            self.py.set(h, gy(h) + self.vy.get(h) * dt)

        self.rt.do_all(self.body, compute_force)
        self.rt.do_all(self.body, update)

    def population(self) -> dict[str, int]:
        return {"Body": self.n}

    def momentum(self) -> tuple[float, float]:
        mx = my = 0.0
        for h in self.rt.handles(self.body):
            m = self.mass.get(h)
            mx += m * self.vx.get(h)
            my += m * self.vy.get(h)
        return mx, my
