"""Correspondence between the constant-rate totally asymmetric zero-range
process and the totally asymmetric exclusion process.

Encoding, scanning zero-range sites ``y`` from left to right: write the
first-class particles of ``y`` (top of the stack leftmost, so the next
particle to leave is rightmost), then a terminator cell. The terminator is
the special particle sitting at ``y + 1`` if there is one, otherwise a hole.
Consecutive terminators are thus separated by ``xi(y)`` first-class cells.
A run of infinite sites on the left becomes a solid block of first-class
cells extending to minus infinity.

The exclusion picture is positioned by an anchor: the class-2 particle is
put at cell ``y2``. Only the occupied cells are stored.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .core import (
    INFINITE,
    AsymmetryParams,
    Configuration,
    RateFunction,
    SiteStack,
    ZRError,
)
from .engine import run_reference
from .engine.stream import EventStream


class NoSecondClass(ZRError):
    pass


class NotTotallyAsymmetric(ZRError):
    pass


class NotConstantRate(ZRError):
    pass


class Inconsistent(ZRError):
    pass


@dataclass
class ExclusionConfiguration:
    """Occupied cells (cell -> (cls, label)); every other cell right of
    ``block_end`` is a hole, and every cell at or left of ``block_end`` holds
    an unlabelled first-class particle (``block_end is None``: no block).

    ``start`` is the cell of the first encoded item and ``sites`` the
    zero-range sites it encodes; they make :func:`ex_to_zr` possible.
    """

    cells: dict = field(default_factory=dict)
    block_end: int | None = None
    start: int = 0
    sites: tuple = (0, -1)
    infinite_upto: int | None = None
    reservoirs: tuple = (0.0, 0.0)

    def occupant(self, cell: int):
        if self.block_end is not None and cell <= self.block_end:
            return (1, None)
        return self.cells.get(cell)

    def position(self, cls: int) -> int:
        for c, rec in self.cells.items():
            if rec[0] == cls:
                return c
        raise NoSecondClass(f"no class-{cls} particle")

    def hole_label(self, cell: int) -> int:
        """Holes right of the class-2 particle are labelled 1, 2, ... from the
        left; holes left of it -1, -2, ... from the right."""
        if self.occupant(cell) is not None:
            raise ValueError(f"cell {cell} is occupied")
        y2 = self.position(2)
        if cell > y2:
            return sum(1 for c in range(y2 + 1, cell + 1) if self.occupant(c) is None)
        return -sum(1 for c in range(cell, y2) if self.occupant(c) is None)

    def same(self, other: "ExclusionConfiguration") -> bool:
        return self.block_end == other.block_end and self.cells == other.cells

    def render(self, lo: int, hi: int) -> str:
        sym = {1: "●", 2: "⊛", 3: "③"}
        out = []
        for c in range(lo, hi + 1):
            rec = self.occupant(c)
            out.append("∘" if rec is None else sym.get(rec[0], str(rec[0])))
        return " ".join(out)


def _check_single_second(config: Configuration):
    twos = [(x, lab) for x, st in zip(config.sites(), config.stacks) for c, lab in st.particles if c == 2]
    if len(twos) != 1:
        raise NoSecondClass(f"expected exactly one class-2 particle, found {len(twos)}")
    return twos[0][0]


def zr_to_ex(zr: Configuration, y2: int = 0, upto: int | None = None) -> ExclusionConfiguration:
    """Encode ``zr``; the class-2 particle lands on cell ``y2``.

    ``upto`` may cap the scan at a site beyond which ``zr`` is known to be
    empty (everything further right is holes anyway).
    """
    _check_single_second(zr)
    stacks = zr.stacks
    n = len(stacks)
    last = n - 1 if upto is None else min(upto - zr.left, n - 1)
    first = 0
    while first < n and stacks[first].infinite:
        first += 1
    inf_upto = first - 1 if first else None

    def special_at(i):
        if i < n:
            recs = [r for r in stacks[i].particles if r[0] != 1]
            if len(recs) > 1:
                raise ValueError(f"more than one special particle at site {zr.left + i}")
            return recs[0] if recs else None
        return None

    # leading cell: the special particle of the first finite site, or a hole
    seq = [special_at(first)]  # relative cells; None = hole
    for i in range(first, last + 1):
        if stacks[i].infinite:
            raise ValueError("infinite sites must form a left block")
        parts = stacks[i].particles
        seq.extend(r for r in reversed(parts) if r[0] == 1)
        seq.append(special_at(i + 1) if i + 1 < n and len(stacks[i + 1].particles) else None)
    k2 = next(i for i, r in enumerate(seq) if r is not None and r[0] == 2)
    start = y2 - k2
    cells = {start + i: r for i, r in enumerate(seq) if r is not None}
    return ExclusionConfiguration(cells, None if inf_upto is None else start - 1, start,
                                  (zr.left, zr.right), None if inf_upto is None else zr.left + inf_upto,
                                  (zr.left_reservoir, zr.right_reservoir))


def ex_to_zr(ex: ExclusionConfiguration) -> Configuration:
    """Left inverse of :func:`zr_to_ex`.

    Within a site, first-class particles come back bottom-to-top and a
    special particle is put on top; arrival order between different classes
    carries no information for the dynamics and is not encoded.
    """
    left, right = ex.sites
    if not any(r[0] == 2 for r in ex.cells.values()):
        raise NoSecondClass("no class-2 particle")
    stacks = {x: SiteStack(INFINITE, []) for x in range(left, (ex.infinite_upto or left - 1) + 1)}
    c = ex.start
    pending = ex.cells.get(c)
    c += 1
    first = left if ex.infinite_upto is None else ex.infinite_upto + 1
    for y in range(first, right + 1):
        cluster = []
        while True:
            rec = ex.cells.get(c)
            c += 1
            if rec is not None and rec[0] == 1:
                cluster.append(rec)
                continue
            break
        parts = list(reversed(cluster))
        if pending is not None:
            parts.append(pending)
        stacks[y] = SiteStack(len(parts), parts)
        pending = rec
    if pending is not None:
        raise ValueError("special particle beyond the window")
    for k in ex.cells:
        if k >= c:
            raise ValueError("occupied cells beyond the encoded sites")
    return Configuration(left, [stacks[x] for x in range(left, right + 1)], ex.reservoirs[0], ex.reservoirs[1])


def canonical(zr: Configuration) -> Configuration:
    """Same state with special particles moved to the top of their stacks."""
    out = zr.copy()
    for s in out.stacks:
        s.particles = [r for r in s.particles if r[0] == 1] + [r for r in s.particles if r[0] != 1]
    return out


# ---------------------------------------------------------------------------
# synchronized simulation


@dataclass
class DualState:
    zr: Configuration
    ex: ExclusionConfiguration
    h2se: int = 0
    j2se: int = 0


@dataclass
class DualRecord:
    t: float
    x2_zr: int
    h2_se: int
    j2_zr: int
    j2_se: int
    consistent: bool


@dataclass
class DualResult:
    state: DualState
    records: list
    checks: int
    failures: int
    overtaken_at: float | None
    events: int
    breach: bool

    @property
    def ok(self) -> bool:
        return self.failures == 0


def _transport(ex: ExclusionConfiguration, mover, from_reservoir: bool, state: DualState):
    """Move the exclusion particle attached to ``mover`` one cell to the right."""
    if from_reservoir:
        c = ex.block_end
        ex.block_end -= 1
    else:
        c = next((k for k, r in ex.cells.items() if r == mover), None)
        if c is None:
            raise Inconsistent(f"particle {mover} missing from the exclusion copy")
        del ex.cells[c]
    target = ex.cells.get(c + 1)
    if target is not None and target[0] <= mover[0]:
        raise Inconsistent(f"{mover} blocked by {target}")
    if target is None:
        if mover[0] == 2:
            state.h2se += 1
    else:
        if target[0] == 2 and mover[0] == 1:
            state.j2se += 1
        ex.cells[c] = target
    ex.cells[c + 1] = mover


def run_dual(init_zr: Configuration, asym: AsymmetryParams, g: RateFunction, t_end: float,
             seed: int = 0, replica: int = 0, stream: EventStream | None = None) -> DualResult:
    """Run the zero-range copy and transport each jump to the exclusion copy.

    After every state change the encoding of the zero-range state (anchored
    at the current class-2 cell) is compared with the transported exclusion
    state, and X2 = H2, J2(zr) = J2(se) are checked. Transport stops once the
    class-2 particle reaches the class-3 particle, if there is one.
    """
    if not asym.totally_asymmetric:
        raise NotTotallyAsymmetric("the correspondence needs p = 1")
    if not g.is_constant:
        raise NotConstantRate("the correspondence needs a constant rate")
    x2_0 = _check_single_second(init_zr)
    if init_zr.left_reservoir not in (INFINITE, 0.0) or init_zr.right_reservoir != 0.0:
        raise ValueError("boundary reservoirs must be infinite on the left or empty")
    state = DualState(init_zr, zr_to_ex(init_zr, 0))
    key2 = next(r for x in init_zr.sites() for r in init_zr.stack(x).particles if r[0] == 2)
    threes = [r for x in init_zr.sites() for r in init_zr.stack(x).particles if r[0] == 3]
    key3 = threes[0] if threes else None
    records = [DualRecord(0.0, x2_0, 0, 0, 0, True)]
    counters = {"checks": 0, "failures": 0, "overtaken": None}

    def on_jump(config, obs, ev, mover):
        if counters["overtaken"] is not None:
            return
        if key3 is not None and obs.specials[key2][0] >= obs.specials[key3][0]:
            # the correspondence holds up to this event only
            counters["overtaken"] = ev.time
            return
        src_res = ev.site < config.left or config.stack(ev.site).infinite
        ok = True
        try:
            _transport(state.ex, mover, src_res, state)
        except Inconsistent:
            ok = False
        x2 = obs.specials[key2][0]
        y2 = state.ex.position(2) if ok else 0
        if ok:
            enc = zr_to_ex(config, y2, upto=obs.hi)
            ok = enc.same(state.ex) and x2 - x2_0 == state.h2se and obs.j2 == state.j2se
        counters["checks"] += 1
        counters["failures"] += not ok
        records.append(DualRecord(ev.time, x2, state.h2se, obs.j2, state.j2se, ok))

    res = run_reference(init_zr, asym, g, t_end, mode="zr", seed=seed, replica=replica, stream=stream,
                        callback=on_jump)
    state.zr = res.config
    return DualResult(state, records, counters["checks"], counters["failures"], counters["overtaken"],
                      res.events, res.breach)


def write_dual_csv(path, results) -> None:
    """``results``: iterable of ``(replica, DualResult)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replica", "t", "x2_zr", "h2_se", "j2_zr", "j2_se", "consistent"])
        for rep, res in results:
            for r in res.records:
                w.writerow([rep, repr(float(r.t)), r.x2_zr, r.h2_se, r.j2_zr, r.j2_se, int(r.consistent)])
