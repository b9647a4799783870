"""Lattice state, jump-rate tables and class-priority jump mechanics.

A :class:`Configuration` is a finite window of sites of the integer lattice.
Each site holds a :class:`SiteStack`: an occupancy (finite count or
:data:`INFINITE`) plus the explicit particle records living there. Particles
are ``(cls, label)`` pairs; first-class particles have ``cls == 1``.

Within a site, records are kept in arrival order (bottom first). The next
particle to leave is the earliest-arrived particle of the lowest class
present. With purely rightward jumps this coincides with ascending label
order, since particles never overtake each other inside a class.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path


class ZRError(Exception):
    """Base class for all errors raised by this package."""


class NotPositive(ZRError):
    pass


class NotMonotone(ZRError):
    pass


class OutOfWindow(ZRError):
    pass


class EmptySite(ZRError):
    pass


class _Infinite:
    """Occupancy of a reservoir site holding infinitely many first-class particles."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __sub__(self, other):
        return self

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("INFINITE")

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def is_infinite(value) -> bool:
    return value is INFINITE


@dataclass(frozen=True)
class AsymmetryParams:
    """Nearest-neighbour jump law: right with probability ``p``, left with ``q = 1 - p``."""

    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.p <= 0.5:
            raise ValueError(f"rightward drift required (p > 1/2), got p={self.p}")

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def drift(self) -> float:
        return self.p - self.q

    @property
    def totally_asymmetric(self) -> bool:
        return self.p == 1.0


@dataclass(frozen=True)
class RateFunction:
    """Jump rate g(k) given by a finite table ``[g(1), ..., g(K)]`` with constant tail.

    Build instances through :func:`validate_rate`.
    """

    values: tuple[float, ...]

    @property
    def gmax(self) -> float:
        return self.values[-1]

    @property
    def tail_index(self) -> int:
        """K: the index from which g is constant."""
        return len(self.values)

    @property
    def is_constant(self) -> bool:
        return all(v == self.values[0] for v in self.values)

    def __call__(self, k) -> float:
        if k is INFINITE:
            return self.gmax
        if k <= 0:
            return 0.0
        return self.values[min(k, len(self.values)) - 1]

    def factorial(self, k: int) -> float:
        """g(k)! = g(1) g(2) ... g(k), with g(0)! = 1."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        head = self.values
        out = 1.0
        for j in range(1, min(k, len(head)) + 1):
            out *= head[j - 1]
        if k > len(head):
            out *= self.gmax ** (k - len(head))
        return out

    def acceptance_table(self):
        """Thresholds g(k)/G_max for k = 0..K (index K stands for every k >= K)."""
        import numpy as np

        return np.array([0.0] + [v / self.gmax for v in self.values], dtype=np.float64)


def validate_rate(table: Iterable[float]) -> RateFunction:
    values = tuple(float(v) for v in table)
    if not values:
        raise ValueError("rate table must be nonempty")
    for k, v in enumerate(values, start=1):
        if not math.isfinite(v):
            raise ValueError(f"g({k}) is not finite")
        if v <= 0.0:
            raise NotPositive(f"g({k}) = {v} must be positive")
    for k in range(1, len(values)):
        if values[k] < values[k - 1]:
            raise NotMonotone(f"g({k + 1}) = {values[k]} < g({k}) = {values[k - 1]}")
    return RateFunction(values)


CONSTANT_RATE = validate_rate([1.0])


def read_rate_file(path: str | Path) -> RateFunction:
    """Parse a rate table: one rate per line for k = 1, 2, ...; ``#`` starts a comment."""
    rates = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rates.append(float(line))
    return validate_rate(rates)


@dataclass
class SiteStack:
    """Occupancy of one site plus its explicit particle records.

    For a finite occupancy every particle is stored. For an infinite site only
    the non-first-class passengers are stored; they never leave.
    """

    occupancy: int | _Infinite = 0
    particles: list[tuple[int, int]] = field(default_factory=list)

    @property
    def infinite(self) -> bool:
        return self.occupancy is INFINITE

    def count(self, cls: int) -> int | _Infinite:
        if self.infinite and cls == 1:
            return INFINITE
        return sum(1 for c, _ in self.particles if c == cls)

    def count_upto(self, cls: int) -> int | _Infinite:
        """Number of particles of class <= cls (infinite sites report INFINITE)."""
        if self.infinite:
            return INFINITE
        return sum(1 for c, _ in self.particles if c <= cls)

    def front(self, cls: int | None = None) -> tuple[int, int]:
        """Next particle to depart, optionally restricted to one class."""
        if self.infinite and cls in (None, 1):
            return (1, None)
        candidates = self.particles if cls is None else [r for r in self.particles if r[0] == cls]
        if not candidates:
            raise EmptySite("no particle of the requested class")
        low = min(c for c, _ in candidates)
        for rec in candidates:
            if rec[0] == low:
                return rec
        raise AssertionError("unreachable")

    def copy(self) -> "SiteStack":
        return SiteStack(self.occupancy, list(self.particles))

    def classes(self) -> list[int]:
        return sorted({c for c, _ in self.particles})


@dataclass
class BoundaryFlux:
    inflow: int = 0
    outflow: int = 0


@dataclass
class Configuration:
    """Sites ``left..right`` plus the description of what lies outside.

    ``left_reservoir`` / ``right_reservoir`` give the law outside the window:
    :data:`INFINITE` for infinite-occupancy sites, or the fugacity (mean
    stationary exit rate) of the product measure there; ``0.0`` means empty.
    ``flux`` counts particles entering/leaving the finite part of the window,
    including exchanges with infinite sites inside it.
    """

    left: int
    stacks: list[SiteStack]
    left_reservoir: float | _Infinite = 0.0
    right_reservoir: float | _Infinite = 0.0
    flux: BoundaryFlux = field(default_factory=BoundaryFlux)
    next_fresh_label: int = -1

    @classmethod
    def empty(cls, left: int, right: int, **kw) -> "Configuration":
        return cls(left, [SiteStack() for _ in range(right - left + 1)], **kw)

    @property
    def right(self) -> int:
        return self.left + len(self.stacks) - 1

    @property
    def window(self) -> tuple[int, int]:
        return (self.left, self.right)

    def __contains__(self, site: int) -> bool:
        return self.left <= site <= self.right

    def stack(self, site: int) -> SiteStack:
        if site not in self:
            raise OutOfWindow(f"site {site} outside window {self.window}")
        return self.stacks[site - self.left]

    def occupancy(self, site: int):
        return self.stack(site).occupancy

    def sites(self) -> range:
        return range(self.left, self.right + 1)

    def finite_mass(self) -> int:
        return sum(s.occupancy for s in self.stacks if not s.infinite)

    def occupancies(self) -> list:
        return [s.occupancy for s in self.stacks]

    def positions(self, cls: int) -> dict[int, int]:
        """label -> site for every explicit particle of the given class."""
        out = {}
        for x, s in zip(self.sites(), self.stacks):
            for c, lab in s.particles:
                if c == cls:
                    out[lab] = x
        return out

    def copy(self) -> "Configuration":
        return Configuration(
            self.left,
            [s.copy() for s in self.stacks],
            self.left_reservoir,
            self.right_reservoir,
            BoundaryFlux(self.flux.inflow, self.flux.outflow),
            self.next_fresh_label,
        )

    def project(self) -> "Configuration":
        """Forget classes: every explicit particle becomes first class."""
        out = self.copy()
        for s in out.stacks:
            if s.infinite:
                s.particles = []
            else:
                s.particles = [(1, lab) for _, lab in s.particles]
        return out

    def same_state(self, other: "Configuration") -> bool:
        return (
            self.left == other.left
            and len(self.stacks) == len(other.stacks)
            and all(
                a.occupancy == b.occupancy and a.particles == b.particles
                for a, b in zip(self.stacks, other.stacks)
            )
        )


def from_occupancies(left: int, occ: Sequence, *, first_label: int = 0, **kw) -> Configuration:
    """Single-class configuration; first-class labels run bottom-to-top, site by site."""
    stacks = []
    label = first_label
    for n in occ:
        if n is INFINITE:
            stacks.append(SiteStack(INFINITE, []))
            continue
        n = int(n)
        stacks.append(SiteStack(n, [(1, label + i) for i in range(n)]))
        label += n
    return Configuration(left, stacks, **kw)


def add_particle(config: Configuration, site: int, cls: int, label: int) -> None:
    """Place a particle on top of ``site``."""
    s = config.stack(site)
    if s.infinite:
        if cls != 1:
            s.particles.append((cls, label))
        return
    s.particles.append((cls, label))
    s.occupancy += 1


def total_jump_rate(config: Configuration, site: int, g: RateFunction) -> float:
    return g(config.stack(site).occupancy)


def apply_jump(config: Configuration, site: int, direction: int, cls: int | None = None):
    """Move the front particle (of class ``cls`` if given) from ``site`` to ``site + direction``.

    Mutates ``config`` and returns ``(config, (cls, label))``. A particle
    leaving the window is dropped and counted as outflow. Infinite sites emit
    an implicit first-class particle which receives a fresh negative label.
    """
    if direction not in (-1, 1):
        raise ValueError("direction must be -1 or +1")
    src = config.stack(site)
    if not src.infinite and src.occupancy == 0:
        raise EmptySite(f"site {site} is empty")
    mover = src.front(cls)
    if src.infinite:
        if mover[0] != 1:
            raise EmptySite("stored passengers of an infinite site never depart")
        mover = (1, config.next_fresh_label)
        config.next_fresh_label -= 1
    else:
        src.particles.remove(mover)
        src.occupancy -= 1

    dest_site = site + direction
    if dest_site in config:
        dest = config.stack(dest_site)
        if dest.infinite:
            if mover[0] != 1:
                dest.particles.append(mover)
            if not src.infinite:
                config.flux.outflow += 1
        else:
            dest.particles.append(mover)
            dest.occupancy += 1
            if src.infinite:
                config.flux.inflow += 1
    elif not src.infinite:
        config.flux.outflow += 1
    return config, mover


def translate(config: Configuration, x: int) -> Configuration:
    """Shift every site by ``x``; labels are untouched."""
    out = config.copy()
    out.left = config.left + x
    return out
