"""Event-driven simulation of one (possibly multiclass) process.

Two backends share one event stream and one set of rules:

* ``compiled``: numba kernel over occupancy arrays; fast, follows special
  (non-first-class) particles and the first emitted first-class particle.
* ``reference``: pure Python on labelled configurations; slow, follows
  every label (needed for tagged currents) and also runs exclusion dynamics.

``backend="auto"`` picks the compiled kernel when nothing needs labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    CONSTANT_RATE,
    AsymmetryParams,
    Configuration,
    OutOfWindow,
    RateFunction,
    ZRError,
)
from . import _kernels
from ._kernels import ACTIVE, EXITED, TRAPPED
from .packed import pack, run_packed, unpack
from .reference import (
    NONE,
    Observables,
    WindowBreach,
    ex_transition,
    start_observables,
    zr_transition,
)
from .stream import Event, EventStream, init_rng, make_rng, prng_id

__all__ = [
    "ACTIVE", "TRAPPED", "EXITED", "NONE", "Event", "EventStream", "Observables", "RunResult",
    "Timeline", "TaggingDisabled", "RangeOutsideWindow", "WindowBreach", "run", "step",
    "line_current", "density_profile", "init_rng", "make_rng", "prng_id", "write_timeline_csv",
    "write_trajectory", "TIMELINE_HEADER",
]

TIMELINE_HEADER = ["replica", "t", "x2", "x2_trapped", "j2", "x1", "x3"]


class TaggingDisabled(ZRError):
    pass


class RangeOutsideWindow(ZRError):
    pass


@dataclass
class Timeline:
    """Observables at each sample time.

    ``spos`` / ``sstat`` hold the site and status of every special particle
    (column order ``keys``). ``j2`` is meaningful only where ``j2_infinite``
    is false.
    """

    times: np.ndarray
    keys: list
    spos: np.ndarray
    sstat: np.ndarray
    j2: np.ndarray
    j2_infinite: np.ndarray
    x1: np.ndarray
    x1_status: np.ndarray

    def column(self, key):
        k = self.keys.index(key)
        return self.spos[:, k], self.sstat[:, k]

    def _first(self, cls):
        keys = [k for k in self.keys if k[0] == cls]
        if not keys:
            return None, None
        return self.column(min(keys))

    @property
    def x2(self):
        return self._first(2)[0]

    @property
    def x2_trapped(self):
        s = self._first(2)[1]
        return None if s is None else s == TRAPPED

    @property
    def x3(self):
        return self._first(3)[0]

    def rows(self, replica: int):
        x2, st2 = self._first(2)
        x3, _ = self._first(3)
        for i, t in enumerate(self.times):
            j2 = "" if x2 is None else ("inf" if self.j2_infinite[i] else int(self.j2[i]))
            x1 = "" if self.x1_status[i] == NONE else int(self.x1[i])
            yield [replica, repr(float(t)),
                   "" if x2 is None else int(x2[i]),
                   "" if x2 is None else int(st2[i] == TRAPPED),
                   j2, x1, "" if x3 is None else int(x3[i])]


@dataclass
class RunResult:
    config: Configuration
    timeline: Timeline
    events: int
    jumps: int
    breach: bool
    trajectory: list | None = None
    observables: Observables | None = None
    meta: dict = field(default_factory=dict)


def _times(t_end, sample_times):
    if sample_times is None:
        sample_times = [t_end]
    st = np.asarray(sample_times, dtype=np.float64).reshape(-1)
    if st.size and (np.any(np.diff(st) < 0) or st[-1] > t_end or st[0] < 0):
        raise ValueError("sample times must be sorted within [0, t_end]")
    return st


def step(config: Configuration, event: Event, asym: AsymmetryParams, g: RateFunction = CONSTANT_RATE,
         obs: Observables | None = None, mode: str = "zr"):
    """Apply one clock ring to ``config`` in place; returns ``(config, obs)``.

    The ring fires iff ``accept_mark <= g(n)/G_max`` (zero-range) or the site
    is occupied (exclusion); the jump is to the right iff ``dir_mark <= p``.
    """
    if event.site not in config:
        raise OutOfWindow(f"event site {event.site} outside window {config.window}")
    if obs is None:
        obs = start_observables(config, g, mode)
    obs.events += 1
    if mode == "zr":
        zr_transition(config, obs, event.site, event.dir_mark, event.accept_mark, asym, g,
                      g.acceptance_table(), event.time)
    elif mode == "ex":
        ex_transition(config, obs, event.site, event.dir_mark, event.accept_mark, asym, event.time)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return config, obs


def _snapshot(obs: Observables, keys):
    pos = [obs.specials[k][0] for k in keys]
    stat = [obs.specials[k][1] for k in keys]
    return pos, stat, obs.j2, obs.j2_infinite, (obs.x1_site if obs.x1_site is not None else 0), obs.x1_status


def run_reference(init: Configuration, asym: AsymmetryParams, g: RateFunction, t_end: float, sample_times=None,
                  mode: str = "zr", stream: EventStream | None = None, seed: int = 0, replica: int = 0,
                  tagging: bool = False, trajectory: bool = False, record_all: bool = False,
                  callback=None) -> RunResult:
    """Python event loop. ``callback(config, obs, event, mover)`` runs after every state change."""
    st = _times(t_end, sample_times)
    config = init.copy()
    gmax = g.gmax if mode == "zr" else 1.0
    stream = stream or EventStream(seed, replica, gmax)
    obs = start_observables(config, g, mode, tagging, trajectory, record_all)
    keys = sorted(obs.specials)
    gacc = g.acceptance_table()
    snaps = []
    si = 0
    while obs.hi >= obs.lo:
        ev = stream.next(obs.lo, obs.hi)
        while si < len(st) and st[si] < ev.time:
            snaps.append(_snapshot(obs, keys))
            si += 1
        if ev.time > t_end:
            break
        obs.events += 1
        if mode == "zr":
            mover = zr_transition(config, obs, ev.site, ev.dir_mark, ev.accept_mark, asym, g, gacc, ev.time)
        else:
            mover = ex_transition(config, obs, ev.site, ev.dir_mark, ev.accept_mark, asym, ev.time)
        if mover is not None and callback is not None:
            callback(config, obs, ev, mover)
    while si < len(st):
        snaps.append(_snapshot(obs, keys))
        si += 1
    m = len(keys)
    tl = Timeline(
        st, keys,
        np.array([s[0] for s in snaps], dtype=np.int64).reshape(len(st), m),
        np.array([s[1] for s in snaps], dtype=np.int64).reshape(len(st), m),
        np.array([s[2] for s in snaps], dtype=np.int64),
        np.array([s[3] for s in snaps], dtype=bool),
        np.array([s[4] for s in snaps], dtype=np.int64),
        np.array([s[5] for s in snaps], dtype=np.int64),
    )
    return RunResult(config, tl, obs.events, obs.jumps, obs.breach, obs.trajectory, obs)


def run_compiled(init: Configuration, asym: AsymmetryParams, g: RateFunction, t_end: float, sample_times=None,
                 seed: int = 0, replica: int = 0, rng: np.random.Generator | None = None,
                 trajectory: bool = False, record_all: bool = False, traj_capacity: int = 1 << 16) -> RunResult:
    st = _times(t_end, sample_times)
    pk = pack(init, asym, g)
    rng = rng if rng is not None else make_rng(seed, replica)
    out = run_packed(pk, asym, g, t_end, st, rng, traj_capacity if trajectory else 0, record_all)
    traj = None
    if trajectory:
        if pk.state[_kernels.TRAJ_OVF]:
            raise OverflowError("trajectory buffer too small; raise traj_capacity")
        shift = pk.left - 1
        traj = [(float(t), int(e[1]) + shift, int(e[2] - e[1]), int(e[3]), int(e[4]))
                for t, e in zip(out.traj_t, out.traj_ev)]
    tl = Timeline(st, pk.keys, out.spos, out.sstat, out.j2, out.j2inf.astype(bool), out.x1, out.x1stat)
    return RunResult(unpack(pk, init), tl, int(pk.state[_kernels.EVENTS]), int(pk.state[_kernels.JUMPS]),
                     bool(pk.state[_kernels.BREACH]), traj)


def run(init: Configuration, asym: AsymmetryParams, g: RateFunction = CONSTANT_RATE, t_end: float = 0.0,
        sample_times=None, mode: str = "zr", seed: int = 0, replica: int = 0, backend: str = "auto",
        tagging: bool = False, trajectory: bool = False, record_all: bool = False,
        on_breach: str = "raise") -> RunResult:
    """Simulate up to ``t_end`` and sample observables at ``sample_times`` (default ``[t_end]``).

    ``on_breach="raise"`` turns a window breach into :class:`WindowBreach`;
    ``"flag"`` only sets ``result.breach``.
    """
    if mode not in ("zr", "ex"):
        raise ValueError(f"unknown mode {mode!r}")
    if backend == "auto":
        backend = "reference" if (mode == "ex" or tagging) else "compiled"
    if backend == "compiled":
        if mode != "zr" or tagging:
            raise ValueError("the compiled backend runs zero-range dynamics without tagging")
        res = run_compiled(init, asym, g, t_end, sample_times, seed, replica,
                           trajectory=trajectory, record_all=record_all)
    elif backend == "reference":
        res = run_reference(init, asym, g, t_end, sample_times, mode, seed=seed, replica=replica,
                            tagging=tagging, trajectory=trajectory, record_all=record_all)
    else:
        raise ValueError(f"unknown backend {backend!r}")
    res.meta.update(prng=prng_id(), seed=seed, replica=replica, backend=backend)
    if res.breach and on_breach == "raise":
        raise WindowBreach(f"replica {replica}: a jump reached the window edge")
    return res


def line_current(obs, u: float, t: float) -> int:
    """Net number of tagged particles crossing the line ``x = u t`` rightwards by time ``t``.

    Counts particles starting at ``x <= 0`` now strictly right of ``u t``
    minus those starting at ``x > 0`` now at or left of ``u t``. ``ut`` stays
    real. Particles still inside infinite sites never moved and contribute
    nothing as long as those sites lie at or left of ``u t``.
    """
    if isinstance(obs, RunResult):
        obs = obs.observables
    if obs is None or obs.tagged is None:
        raise TaggingDisabled("line currents need a run with tagging=True")
    ut = u * t
    j = 0
    for lab, x in obs.tagged.items():
        x0 = obs.origin[lab]
        if x0 <= 0 and x > ut:
            j += 1
        elif x0 > 0 and x <= ut:
            j -= 1
    return j


def density_profile(config: Configuration, bins: int, range: tuple[float, float], t: float) -> np.ndarray:
    """Particle counts over sites ``[floor(a_i t), floor(b_i t))`` divided by ``(b_i - a_i) t``.

    Infinite sites are skipped.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    a, b = range
    edges = np.linspace(a, b, bins + 1)
    lo_site, hi_site = math.floor(edges[0] * t), math.floor(edges[-1] * t) - 1
    if lo_site < config.left or hi_site > config.right:
        raise RangeOutsideWindow(f"sites {lo_site}..{hi_site} not inside window {config.window}")
    out = np.zeros(bins)
    for i in np.arange(bins):
        s0, s1 = math.floor(edges[i] * t), math.floor(edges[i + 1] * t)
        total = 0
        for x in np.arange(s0, s1):
            s = config.stacks[x - config.left]
            if not s.infinite:
                total += s.occupancy
        out[i] = total / ((edges[i + 1] - edges[i]) * t)
    return out


def write_timeline_csv(path, timelines) -> None:
    """``timelines``: iterable of ``(replica, Timeline)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMELINE_HEADER)
        for rep, tl in timelines:
            w.writerows(tl.rows(rep))


def write_trajectory(path, trajectory) -> None:
    """One event per line: time, site, direction, class, label (tab separated)."""
    with open(path, "w") as fh:
        for t, site, d, c, lab in trajectory:
            fh.write(f"{t!r}\t{site}\t{d:+d}\t{c}\t{lab}\n")
