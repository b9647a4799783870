"""Two-copy couplings: the basic coupling (shared clocks and marks) and the
particle-to-particle coupling (label-locked moves).

In the basic coupling of ``upper >= lower`` the excess particles of the upper
copy are the discrepancies. They are labelled 1, 2, ... at time 0 (site by
site from the left, bottom to top within a site) and follow the same FIFO
rule as second-class particles, so discrepancy ``j`` can be compared with
class-2 label ``j`` of a multiclass run on the same stream.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import (
    CONSTANT_RATE,
    INFINITE,
    AsymmetryParams,
    Configuration,
    RateFunction,
    ZRError,
    add_particle,
    from_occupancies,
)
from .engine import _kernels as K
from .engine import make_rng, run_reference
from .engine.reference import Observables, _exact_edges, _source, boundary_acceptance, initial_range
from .engine.stream import EventStream


class WindowMismatch(ZRError):
    pass


class NotOrdered(ZRError):
    pass


class LabelMismatch(ZRError):
    pass


class MultipleDiscrepancies(ZRError):
    pass


@dataclass(frozen=True)
class Trapped:
    site: int


MERGED = "Merged"
STAMP0 = -(1 << 40)


@dataclass
class CoupledPair:
    """Two copies on a common window plus labelled discrepancies ``label -> [site, status]``."""

    upper: Configuration
    lower: Configuration
    mode: str = "basic"
    discrepancies: dict = field(default_factory=dict)
    initial_discrepancies: int = 0


def _counts(config: Configuration) -> np.ndarray:
    return np.array([0 if s.infinite else s.occupancy for s in config.stacks], dtype=np.int64)


def make_pair(upper: Configuration, lower: Configuration) -> CoupledPair:
    if upper.window != lower.window:
        raise WindowMismatch(f"{upper.window} != {lower.window}")
    if [s.infinite for s in upper.stacks] != [s.infinite for s in lower.stacks]:
        raise WindowMismatch("infinite sites differ")
    if boundary_acceptance(upper.left_reservoir, 1.0) != boundary_acceptance(lower.left_reservoir, 1.0) or \
            boundary_acceptance(upper.right_reservoir, 1.0) != boundary_acceptance(lower.right_reservoir, 1.0):
        raise WindowMismatch("boundary reservoirs differ")
    diff = _counts(upper) - _counts(lower)
    if np.any(diff < 0):
        raise NotOrdered("upper copy must dominate the lower copy sitewise")
    disc = {}
    label = 1
    for x, d in zip(upper.sites(), diff):
        for _ in range(int(d)):
            disc[label] = [x, K.ACTIVE]
            label += 1
    return CoupledPair(upper.copy(), lower.copy(), "basic", disc, len(disc))


def check_ordering(pair: CoupledPair) -> bool:
    """True iff the upper copy dominates the lower one at every site now."""
    for a, b in zip(pair.upper.stacks, pair.lower.stacks):
        if a.infinite:
            continue
        if b.infinite or a.occupancy < b.occupancy:
            return False
    return True


def discrepancy_position(pair: CoupledPair):
    """Site of the single discrepancy, ``Trapped(site)``, or :data:`MERGED`."""
    if pair.initial_discrepancies != 1:
        raise MultipleDiscrepancies(f"{pair.initial_discrepancies} discrepancies")
    ((site, status),) = pair.discrepancies.values()
    if status == K.ACTIVE:
        return site
    if status == K.TRAPPED:
        return Trapped(site)
    return MERGED


@dataclass
class CoupledTimeline:
    times: np.ndarray
    n_discrepancies: np.ndarray
    dpos: np.ndarray  # (n_samples, J) site coordinates, label j in column j - 1
    dstat: np.ndarray
    thinning_violations: int = 0
    order_violations: int = 0
    breach: bool = False
    events: int = 0
    jumps: int = 0
    trajectory: list | None = None

    def rows(self, replica: int):
        for i, t in enumerate(self.times):
            yield [replica, repr(float(t)), int(self.n_discrepancies[i])] + [
                int(x) if s == K.ACTIVE else "" for x, s in zip(self.dpos[i], self.dstat[i])]


def write_coupled_csv(path, timelines, n_labels: int) -> None:
    """``timelines``: iterable of ``(replica, CoupledTimeline)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "t", "n_discrepancies"] + [f"x2_{j}" for j in range(1, n_labels + 1)])
        for rep, tl in timelines:
            for row in tl.rows(rep):
                w.writerow(row[: 3 + n_labels] + [""] * max(0, 3 + n_labels - len(row)))


def run_basic(init0: Configuration, init1: Configuration, asym: AsymmetryParams, g: RateFunction = CONSTANT_RATE,
              t_end: float = 0.0, sample_times=None, seed: int = 0, replica: int = 0,
              rng: np.random.Generator | None = None, trajectory: bool = False, check_every: int = 0,
              traj_capacity: int = 1 << 16):
    """Basic coupling of ``init0 >= init1``; returns ``(final pair, CoupledTimeline)``.

    Every ring is applied to both copies with the same site, direction mark
    and acceptance mark. Ordering is checked at the two touched sites after
    every event (and on the whole window every ``check_every`` events).
    """
    pair = make_pair(init0, init1)
    st = np.asarray([t_end] if sample_times is None else sample_times, dtype=np.float64).reshape(-1)
    n = len(init0.stacks)
    up = np.zeros(n + 2, dtype=np.int64)
    lw = np.zeros(n + 2, dtype=np.int64)
    up[1:-1] = _counts(init0)
    lw[1:-1] = _counts(init1)
    inf = np.zeros(n + 2, dtype=np.bool_)
    rinf = np.zeros(n + 2, dtype=np.float64)
    for idx, res in ((0, init0.left_reservoir), (n + 1, init0.right_reservoir)):
        acc = boundary_acceptance(res, g.gmax)
        if acc is not None:
            inf[idx], rinf[idx] = True, acc
    for idx, s in enumerate(init0.stacks, start=1):
        if s.infinite:
            inf[idx], rinf[idx] = True, 1.0
    labels = sorted(pair.discrepancies)
    nd = len(labels)
    dpos = np.array([pair.discrepancies[lab][0] - init0.left + 1 for lab in labels], dtype=np.int64).reshape(nd)
    dlab = np.array(labels, dtype=np.int64).reshape(nd)
    dstamp = STAMP0 + np.arange(nd, dtype=np.int64)
    dstat = np.zeros(nd, dtype=np.int64)
    state = np.zeros(K.STATE_SIZE, dtype=np.int64)
    lo, hi = initial_range(init0, g.gmax, "zr")
    state[K.LO], state[K.HI] = lo - init0.left + 1, hi - init0.left + 1
    el, er = _exact_edges(init0, asym, "zr")
    ns = st.shape[0]
    out_dpos = np.zeros((ns, nd), dtype=np.int64)
    out_dstat = np.zeros((ns, nd), dtype=np.int64)
    out_nd = np.zeros(ns, dtype=np.int64)
    cap = traj_capacity if trajectory else 0
    traj_ev = np.zeros((cap, 5), dtype=np.int64)
    traj_t = np.zeros(cap, dtype=np.float64)
    rng = rng if rng is not None else make_rng(seed, replica)
    K.run_coupled(rng, float(g.gmax), float(asym.p), g.acceptance_table(), up, lw, inf, rinf,
                  dpos, dlab, dstamp, dstat, int(el), int(er), float(t_end), st, state,
                  out_dpos, out_dstat, out_nd, traj_ev, traj_t, int(check_every))
    shift = init0.left - 1
    traj = None
    if trajectory:
        if state[K.TRAJ_OVF]:
            raise OverflowError("trajectory buffer too small")
        m = state[K.TRAJ_LEN]
        traj = [(float(t), int(e[1]) + shift, int(e[2] - e[1]), 2, int(e[4])) for t, e in zip(traj_t[:m], traj_ev[:m])]
    for k, lab in enumerate(labels):
        pair.discrepancies[lab] = [int(dpos[k]) + shift, int(dstat[k])]
    for cfg, arr in ((pair.upper, up), (pair.lower, lw)):
        rebuilt = from_occupancies(cfg.left, [INFINITE if s.infinite else int(c)
                                              for s, c in zip(cfg.stacks, arr[1:-1])],
                                   left_reservoir=cfg.left_reservoir, right_reservoir=cfg.right_reservoir)
        cfg.stacks = rebuilt.stacks
        cfg.flux.inflow += int(state[K.INFLOW])
        cfg.flux.outflow += int(state[K.OUTFLOW])
    tl = CoupledTimeline(st, out_nd, out_dpos + shift, out_dstat, int(state[K.VIOL_THIN]),
                         int(state[K.VIOL_ORDER]), bool(state[K.BREACH]), int(state[K.EVENTS]),
                         int(state[K.JUMPS]), traj)
    return pair, tl


def run_basic_reference(init0: Configuration, init1: Configuration, asym: AsymmetryParams,
                        g: RateFunction = CONSTANT_RATE, t_end: float = 0.0, seed: int = 0, replica: int = 0,
                        on_event=None):
    """Independent Python version of the basic coupling on occupancy counts.

    Each copy is advanced as a plain single-class process from the shared
    marks; nothing about discrepancies is assumed. ``on_event(t, up, lw)``
    sees the counts (window sites only) after every state-changing event.
    Returns the final ``(up, lw)`` count arrays.
    """
    make_pair(init0, init1)
    n = len(init0.stacks)
    left = init0.left
    gacc = g.acceptance_table()
    kt = len(gacc) - 1
    src = {}
    for x in range(left - 1, left + n + 1):
        s, acc = _source(init0, x, g.gmax)
        if s:
            src[x] = acc
    up = {x: c for x, c in zip(init0.sites(), _counts(init0).tolist())}
    lw = {x: c for x, c in zip(init1.sites(), _counts(init1).tolist())}
    lo, hi = initial_range(init0, g.gmax, "zr")
    stream = EventStream(seed, replica, g.gmax)
    while hi >= lo:
        ev = stream.next(lo, hi)
        if ev.time > t_end:
            break
        i = ev.site
        j = i + 1 if ev.dir_mark <= asym.p else i - 1
        if j < left - 1 or j > left + n:
            continue
        changed = False
        for copy in (up, lw):
            if i in src:
                fire = ev.accept_mark <= src[i] and j not in src
            else:
                k = copy.get(i, 0)
                fire = k > 0 and ev.accept_mark <= gacc[min(k, kt)]
            if not fire:
                continue
            changed = True
            if i not in src:
                copy[i] -= 1
            if j not in src and j in copy:
                copy[j] += 1
        if changed and j not in src and left <= j < left + n:
            lo, hi = min(lo, j), max(hi, j)
        if changed and on_event is not None:
            on_event(ev.time, up, lw)
    return up, lw


# ---------------------------------------------------------------------------
# particle-to-particle coupling


@dataclass
class P2PResult:
    a: Configuration
    b: Configuration
    obs_a: Observables
    obs_b: Observables
    breach: bool


def run_p2p(init_a: Configuration, init_b: Configuration, asym: AsymmetryParams, g: RateFunction = CONSTANT_RATE,
            t_end: float = 0.0, seed: int = 0, replica: int = 0) -> P2PResult:
    """Only copy A consumes clocks; whenever A's particle with label ``i`` jumps,
    B's particle with label ``i`` makes the same displacement.

    A particle freshly emitted by a reservoir of A at site ``x`` is matched by
    a fresh particle (same label) emitted by B at ``x + (B.left - A.left)``,
    which must also be a reservoir.
    """
    offset = init_b.left - init_a.left
    b = init_b.copy()
    where: dict[int, int] = {}
    obs_b = Observables(tagged={}, origin={})
    for x in b.sites():
        for c, lab in b.stack(x).particles:
            if c == 1:
                where[lab] = x
                obs_b.tagged[lab] = x
                obs_b.origin[lab] = x
    for x in init_a.sites():
        for c, lab in init_a.stack(x).particles:
            if c == 1 and lab not in where:
                raise LabelMismatch(f"B has no particle labelled {lab}")

    def follow(config, obs, ev, mover):
        cls, lab = mover
        d = 1 if ev.dir_mark <= asym.p else -1
        if lab not in where:
            y = ev.site + offset
            if not (b.left - 1 <= y <= b.right + 1 and _source(b, y, g.gmax)[0]):
                raise LabelMismatch(f"fresh label {lab}: B site {y} is not a reservoir")
            obs_b.origin[lab] = y
            b.next_fresh_label = min(b.next_fresh_label, lab - 1)
            b.flux.inflow += 1
        else:
            y = where[lab]
            if b.left <= y <= b.right:
                s = b.stack(y)
                if s.infinite:
                    raise LabelMismatch(f"label {lab} is absorbed in B")
                s.particles.remove((cls, lab))
                s.occupancy -= 1
        z = y + d
        where[lab] = z
        obs_b.tagged[lab] = z
        if b.left <= z <= b.right:
            add_particle(b, z, cls, lab)
            if b.stack(z).infinite:
                b.flux.outflow += 1
        else:
            b.flux.outflow += 1

    res = run_reference(init_a, asym, g, t_end, mode="zr", seed=seed, replica=replica, tagging=True,
                        callback=follow)
    return P2PResult(res.config, b, res.observables, obs_b, res.breach)
