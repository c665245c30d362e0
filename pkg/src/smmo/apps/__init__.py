from .base import App
from .gol import GameOfLife
from .nbody import NBody
from .synthetic import Synthetic
from .wator import WaTor

APPS = {"nbody": NBody, "gol": GameOfLife, "wator": WaTor, "synthetic": Synthetic}

__all__ = ["APPS", "App", "GameOfLife", "NBody", "Synthetic", "WaTor"]
