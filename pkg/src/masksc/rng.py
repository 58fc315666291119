"""Deterministic, splittable random streams.

Every source of randomness in the library is an :class:`RngStream`: a numpy
Philox (counter-based) generator keyed by a 64-bit seed plus a derivation
path. Identical (seed, path) pairs produce identical draw sequences on every
platform, and child streams are statistically independent, so parallel sweep
cells can each own a derived stream without any draw-order coupling.
"""

from __future__ import annotations

import zlib

import numpy as np


def _path_element(x) -> int:
    if isinstance(x, str):
        return zlib.crc32(x.encode("utf-8"))
    return int(x) & 0xFFFFFFFFFFFFFFFF


class RngStream:
    """A named random stream: seed plus derivation path.

    Parameters
    ----------
    seed : int
        64-bit master seed.
    path : tuple of int/str, optional
        Derivation path; strings are hashed (crc32) to integers.
    """

    def __init__(self, seed: int, path: tuple = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.path = tuple(_path_element(x) for x in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.path)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *ids) -> "RngStream":
        """Derive an independent stream; ids may be ints or short names."""
        return RngStream(self.seed, self.path + tuple(ids))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self.path})"
