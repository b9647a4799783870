"""Pure-Python transitions on labelled configurations.

This is the readable twin of the compiled kernels: fed the same event stream
it makes the same decisions, and it additionally keeps every particle label,
which tagged-particle currents and the particle-to-particle coupling need.

Sites ``left - 1`` and ``right + 1`` act as boundary cells. A boundary with
an infinite or positive-fugacity reservoir emits first-class particles (with
fresh negative labels) and absorbs arrivals; an empty one only absorbs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import (
    INFINITE,
    AsymmetryParams,
    Configuration,
    RateFunction,
    ZRError,
    add_particle,
)
from ._kernels import ACTIVE, EXITED, TRAPPED

NONE = 3  # status of an X1 that does not exist (empty finite site -1)


class WindowBreach(ZRError):
    """A jump started too close to a window edge; the replica is invalid."""


@dataclass
class Observables:
    """Running observables of one replica.

    ``specials`` maps ``(cls, label)`` of every non-first-class particle to
    ``[site, status]``. ``tagged`` (optional) maps first-class labels to their
    current site and ``origin`` to their site at time 0 (or emission site).
    """

    specials: dict = field(default_factory=dict)
    primary: tuple | None = None
    j2: int = 0
    j2_infinite: bool = False
    x1_label: int | None = None
    x1_site: int | None = None
    x1_status: int = NONE
    tagged: dict | None = None
    origin: dict | None = None
    breach: bool = False
    events: int = 0
    jumps: int = 0
    lo: int = 0
    hi: int = -1
    trajectory: list | None = None
    record_all: bool = False

    def position(self, key):
        site, status = self.specials[key]
        return site, status


def boundary_acceptance(res, gmax: float):
    """Emission acceptance of a boundary reservoir, or None for a pure sink."""
    if res is INFINITE:
        return 1.0
    if res > 0:
        return min(1.0, res / gmax)
    return None


def _source(config: Configuration, site: int, gmax: float):
    """(is_source, acceptance) for a site in ``left - 1 .. right + 1``."""
    if site == config.left - 1:
        acc = boundary_acceptance(config.left_reservoir, gmax)
        return acc is not None, acc
    if site == config.right + 1:
        acc = boundary_acceptance(config.right_reservoir, gmax)
        return acc is not None, acc
    if config.stack(site).infinite:
        return True, 1.0
    return False, None


def initial_range(config: Configuration, gmax: float, mode: str = "zr") -> tuple[int, int]:
    """Smallest site interval outside which no clock ring can change the state."""
    lo_site, hi_site = config.left - 1, config.right + 1
    active = []
    for x in range(lo_site, hi_site + 1):
        src, _ = _source(config, x, gmax)
        if mode == "ex":
            if src or (config.left <= x <= config.right and config.stack(x).occupancy):
                active.append(x)
            continue
        if src:
            nbrs = [y for y in (x - 1, x + 1) if lo_site <= y <= hi_site]
            if any(not _source(config, y, gmax)[0] for y in nbrs):
                active.append(x)
        elif config.left <= x <= config.right and config.stack(x).occupancy:
            active.append(x)
    if not active:
        return (0, -1)
    return (min(active), max(active))


def start_observables(config: Configuration, g: RateFunction, mode: str = "zr",
                      tagging: bool = False, trajectory: bool = False, record_all: bool = False) -> Observables:
    obs = Observables()
    for x in config.sites():
        s = config.stack(x)
        for c, lab in s.particles:
            if c != 1:
                obs.specials[(c, lab)] = [x, TRAPPED if s.infinite else ACTIVE]
    twos = sorted(k for k in obs.specials if k[0] == 2)
    obs.primary = twos[0] if twos else None
    if obs.primary is not None and obs.specials[obs.primary][1] == TRAPPED:
        obs.j2_infinite = True
    if mode == "zr" and -1 in config:
        s = config.stack(-1)
        obs.x1_site = -1
        if s.infinite:
            obs.x1_status = ACTIVE
        else:
            firsts = [lab for c, lab in s.particles if c == 1]
            if firsts:
                obs.x1_label = firsts[0]
                obs.x1_status = ACTIVE
    if tagging:
        obs.tagged = {}
        obs.origin = {}
        for x in config.sites():
            for c, lab in config.stack(x).particles:
                if c == 1:
                    obs.tagged[lab] = x
                    obs.origin[lab] = x
    obs.lo, obs.hi = initial_range(config, g.gmax, mode)
    if trajectory:
        obs.trajectory = []
        obs.record_all = record_all
    return obs


def _near_edge(config: Configuration, site: int) -> tuple[bool, bool]:
    return site <= config.left + 2, site >= config.right - 2


def _exact_edges(config: Configuration, asym: AsymmetryParams, mode: str) -> tuple[bool, bool]:
    """Edges whose outside is simulated exactly by the boundary cell.

    An infinite left reservoir, or any left reservoir when jumps are totally
    asymmetric (the stationary outflow of a product measure is Poisson), is
    exact; so is the right edge when nothing can return from the right.
    Ordinary jumps near an exact edge are harmless; a followed particle
    leaving the window still invalidates the replica.
    """
    if mode == "ex":
        return False, False
    left = config.left_reservoir is INFINITE or asym.totally_asymmetric
    return left, asym.totally_asymmetric


def _track_move(obs: Observables, mover, src: int, dst: int, dst_status: int):
    cls, lab = mover
    if cls != 1:
        obs.specials[mover] = [dst, dst_status]
    elif obs.tagged is not None:
        if lab not in obs.origin:
            obs.origin[lab] = src
        obs.tagged[lab] = dst


def zr_transition(config: Configuration, obs: Observables, site: int, dir_mark: float, accept_mark: float,
                  asym: AsymmetryParams, g: RateFunction, gacc, time: float = 0.0):
    """Apply one uniformized clock ring at ``site``; returns the mover or None.

    Mirrors :func:`zrsim.engine._kernels.run_single` decision by decision.
    """
    gmax = g.gmax
    kt = len(gacc) - 1
    left, right = config.left, config.right
    j = site + 1 if dir_mark <= asym.p else site - 1
    if j < left - 1 or j > right + 1:
        return None
    src_is, src_acc = _source(config, site, gmax)
    dst_is, _ = _source(config, j, gmax)
    dst_ghost = j == left - 1 or j == right + 1
    if not src_is and (site == left - 1 or site == right + 1):
        return None
    if src_is:
        if accept_mark > src_acc or dst_is:
            return None
        cls = 1
    else:
        s = config.stack(site)
        k = s.occupancy
        if k == 0 or accept_mark > gacc[min(k, kt)]:
            return None
        n1 = s.count(1)
        if n1 > 0 and accept_mark <= gacc[min(n1, kt)]:
            cls = 1
        else:
            c = n1
            cls = None
            for m in s.classes():
                if m == 1:
                    continue
                c += s.count(m)
                if accept_mark <= gacc[min(c, kt)]:
                    cls = m
                    break
    obs.jumps += 1

    # pick the mover (FIFO within class) and detach it from the source
    if src_is:
        mover = (1, config.next_fresh_label)
        config.next_fresh_label -= 1
        config.flux.inflow += 1
    else:
        s = config.stack(site)
        mover = s.front(cls)
        s.particles.remove(mover)
        s.occupancy -= 1

    moves_x1 = False
    if mover[0] == 1 and obs.x1_status == ACTIVE:
        if obs.x1_label is None:
            moves_x1 = site == obs.x1_site
            if moves_x1:
                obs.x1_label = mover[1]
        else:
            moves_x1 = mover[1] == obs.x1_label
    tracked = mover[0] != 1 or moves_x1
    exact_l, exact_r = _exact_edges(config, asym, "zr")
    near_l, near_r = _near_edge(config, site)
    if (near_l and not exact_l) or (near_r and not exact_r):
        obs.breach = True
    if tracked and dst_ghost and _source(config, j, gmax)[1] != 1.0:
        # a followed particle left the window
        obs.breach = True

    if obs.primary is not None and obs.specials[obs.primary][1] == ACTIVE:
        x2 = obs.specials[obs.primary][0]
        if mover[0] == 1:
            if j == x2 and site == x2 - 1:
                obs.j2 += 1
            elif site == x2 and j == x2 - 1:
                obs.j2 -= 1
        elif mover == obs.primary:
            if j == site - 1:
                if dst_is:
                    obs.j2_infinite = True
                elif not dst_ghost:
                    obs.j2 += config.stack(j).count(1)
            else:
                obs.j2 -= config.stack(site).count(1)

    if dst_is:
        if not src_is:
            config.flux.outflow += 1
        if not dst_ghost:
            add_particle(config, j, mover[0], mover[1])
        status = TRAPPED
    elif dst_ghost:
        config.flux.outflow += 1
        status = EXITED
    else:
        add_particle(config, j, mover[0], mover[1])
        status = ACTIVE
        obs.lo = min(obs.lo, j)
        obs.hi = max(obs.hi, j)
    _track_move(obs, mover, site, j, status)
    if moves_x1:
        obs.x1_site = j
        obs.x1_status = status

    if obs.trajectory is not None and (obs.record_all or mover[0] != 1):
        obs.trajectory.append((time, site, j - site, mover[0], mover[1]))
    return mover


def ex_transition(config: Configuration, obs: Observables, site: int, dir_mark: float, accept_mark: float,
                  asym: AsymmetryParams, time: float = 0.0):
    """Exclusion ring at ``site`` (rate-1 clocks). A particle swaps with a
    higher-class occupant of the target and is blocked by an equal or lower one.
    Boundary cells are occupied with probability ``alpha`` / ``beta``.
    """
    left, right = config.left, config.right
    j = site + 1 if dir_mark <= asym.p else site - 1
    if j < left - 1 or j > right + 1:
        return None
    ghost_src = site == left - 1 or site == right + 1
    dst_ghost = j == left - 1 or j == right + 1
    if ghost_src:
        res = config.left_reservoir if site == left - 1 else config.right_reservoir
        if accept_mark > res:
            return None
        mover = (1, config.next_fresh_label)
    else:
        s = config.stack(site)
        if s.occupancy == 0:
            return None
        mover = s.particles[0]
    if dst_ghost:
        if ghost_src:
            return None
        displaced = None
    else:
        d = config.stack(j)
        displaced = d.particles[0] if d.occupancy else None
        if displaced is not None and displaced[0] <= mover[0]:
            return None
    obs.jumps += 1
    if ghost_src:
        config.next_fresh_label -= 1
        config.flux.inflow += 1
    else:
        s.particles.pop(0)
        s.occupancy -= 1
    near_l, near_r = _near_edge(config, site)
    if near_l or near_r:
        obs.breach = True

    if dst_ghost:
        config.flux.outflow += 1
        _track_move(obs, mover, site, j, EXITED)
    else:
        d = config.stack(j)
        if displaced is not None:
            d.particles.pop(0)
            d.occupancy -= 1
        add_particle(config, j, mover[0], mover[1])
        _track_move(obs, mover, site, j, ACTIVE)
        obs.lo = min(obs.lo, j)
        obs.hi = max(obs.hi, j)
    if displaced is not None:
        if ghost_src:
            config.flux.outflow += 1
            _track_move(obs, displaced, j, site, EXITED)
        else:
            add_particle(config, site, displaced[0], displaced[1])
            _track_move(obs, displaced, j, site, ACTIVE)
    if obs.trajectory is not None and (obs.record_all or mover[0] != 1):
        obs.trajectory.append((time, site, j - site, mover[0], mover[1]))
    return mover
