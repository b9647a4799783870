"""Replayable event streams for uniformized site clocks.

Every site of the simulated range carries a clock of rate ``G_max``; the
superposition is a single Poisson process of rate ``n_sites * G_max`` whose
events pick a site uniformly. Sites that cannot change state (empty sites,
reservoir interiors) are left out of the range: their rings would be
rejected anyway, so dropping them leaves the law of the dynamics unchanged
while saving the random draws.

Each event consumes exactly four uniforms, in this order: the waiting time,
the site, the direction mark and the acceptance mark. The numba kernels draw
the same four numbers from the same generator, so a Python replay and a
compiled run are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PRNG_NAME = "numpy.random.PCG64"


def prng_id() -> str:
    return (f"{PRNG_NAME} (numpy {np.__version__}); dynamics SeedSequence(seed, spawn_key=(replica,)), "
            f"initial draw spawn_key=(replica, 1); 4 uniforms/event")


def make_rng(seed: int, replica: int) -> np.random.Generator:
    """Independent generator for one replica of one experiment."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica,))))


def init_rng(seed: int, replica: int) -> np.random.Generator:
    """Generator for the initial configuration of a replica, independent of its dynamics."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replica, 1))))


@dataclass(frozen=True)
class Event:
    time: float
    site: int
    dir_mark: float
    accept_mark: float


class EventStream:
    """Lazily generated events for sites ``lo..hi`` (inclusive), clock rate ``gmax`` per site."""

    def __init__(self, seed: int, replica: int, gmax: float, rng: np.random.Generator | None = None):
        self.seed = seed
        self.replica = replica
        self.gmax = float(gmax)
        self.rng = rng if rng is not None else make_rng(seed, replica)
        self.time = 0.0
        self.count = 0

    def next(self, lo: int, hi: int) -> Event:
        n = hi - lo + 1
        r = self.rng
        u = r.random()
        self.time += -math.log1p(-u) / (n * self.gmax)
        site = lo + int(r.random() * n)
        d = r.random()
        a = r.random()
        self.count += 1
        return Event(self.time, site, d, a)
