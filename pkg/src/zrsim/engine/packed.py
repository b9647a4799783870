"""Array form of a configuration for the compiled kernels, and back."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import INFINITE, AsymmetryParams, Configuration, RateFunction, SiteStack
from . import _kernels as K
from .reference import NONE, _exact_edges, boundary_acceptance, initial_range

STAMP0 = -(1 << 40)


@dataclass
class Packed:
    left: int
    n1: np.ndarray
    inf: np.ndarray
    rinf: np.ndarray
    nsp: np.ndarray
    keys: list  # (cls, label) of each special, sorted
    spos: np.ndarray
    scls: np.ndarray
    slab: np.ndarray
    sstamp: np.ndarray
    sstat: np.ndarray
    state: np.ndarray
    exact_left: int
    exact_right: int

    def site(self, idx):
        return self.left - 1 + np.asarray(idx)


def pack(config: Configuration, asym: AsymmetryParams, g: RateFunction) -> Packed:
    n = len(config.stacks)
    n1 = np.zeros(n + 2, dtype=np.int64)
    nsp = np.zeros(n + 2, dtype=np.int64)
    inf = np.zeros(n + 2, dtype=np.bool_)
    rinf = np.zeros(n + 2, dtype=np.float64)
    for idx, res in ((0, config.left_reservoir), (n + 1, config.right_reservoir)):
        acc = boundary_acceptance(res, g.gmax)
        if acc is not None:
            inf[idx] = True
            rinf[idx] = acc
    recs = []
    order = 0
    for idx, s in enumerate(config.stacks, start=1):
        if s.infinite:
            inf[idx] = True
            rinf[idx] = 1.0
        for c, lab in s.particles:
            if c == 1:
                n1[idx] += 1
            else:
                if not s.infinite:
                    nsp[idx] += 1
                recs.append((c, lab, idx, STAMP0 + order, K.TRAPPED if s.infinite else K.ACTIVE))
            order += 1
    recs.sort(key=lambda r: (r[0], r[1]))
    m = len(recs)
    spos = np.array([r[2] for r in recs], dtype=np.int64).reshape(m)
    scls = np.array([r[0] for r in recs], dtype=np.int64).reshape(m)
    slab = np.array([r[1] for r in recs], dtype=np.int64).reshape(m)
    sstamp = np.array([r[3] for r in recs], dtype=np.int64).reshape(m)
    sstat = np.array([r[4] for r in recs], dtype=np.int64).reshape(m)

    state = np.zeros(K.STATE_SIZE, dtype=np.int64)
    lo, hi = initial_range(config, g.gmax, "zr")
    state[K.LO] = lo - config.left + 1
    state[K.HI] = hi - config.left + 1
    if m and scls[0] == 2 and sstat[0] == K.TRAPPED:
        state[K.J2INF] = 1
    state[K.X1STAT] = NONE
    if -1 in config:
        s = config.stack(-1)
        state[K.X1POS] = -1 - config.left + 1
        if s.infinite or s.count(1) > 0:
            state[K.X1STAT] = K.ACTIVE
    el, er = _exact_edges(config, asym, "zr")
    return Packed(config.left, n1, inf, rinf, nsp, [(r[0], r[1]) for r in recs],
                  spos, scls, slab, sstamp, sstat, state, int(el), int(er))


def unpack(pk: Packed, template: Configuration) -> Configuration:
    """Rebuild a configuration from kernel arrays.

    The kernels do not follow first-class identities: first-class particles
    are relabelled 0, 1, ... bottom-to-top from the left. Special particles
    keep their labels.
    """
    n = pk.n1.shape[0] - 2
    stacks = []
    label = 0
    extra: dict[int, list] = {}
    for k, key in enumerate(pk.keys):
        if pk.sstat[k] in (K.ACTIVE, K.TRAPPED):
            extra.setdefault(int(pk.spos[k]), []).append((int(pk.sstamp[k]), key))
    for idx in range(1, n + 1):
        specials = [key for _, key in sorted(extra.get(idx, []))]
        if template.stacks[idx - 1].infinite:
            stacks.append(SiteStack(INFINITE, specials))
            continue
        c = int(pk.n1[idx])
        stacks.append(SiteStack(c + len(specials), [(1, label + i) for i in range(c)] + specials))
        label += c
    out = Configuration(template.left, stacks, template.left_reservoir, template.right_reservoir)
    out.flux.inflow = template.flux.inflow + int(pk.state[K.INFLOW])
    out.flux.outflow = template.flux.outflow + int(pk.state[K.OUTFLOW])
    return out


@dataclass
class KernelOutput:
    spos: np.ndarray  # (n_samples, n_specials) site coordinates
    sstat: np.ndarray
    j2: np.ndarray
    j2inf: np.ndarray
    x1: np.ndarray
    x1stat: np.ndarray
    traj_ev: np.ndarray
    traj_t: np.ndarray


def run_packed(pk: Packed, asym: AsymmetryParams, g: RateFunction, t_end: float, sample_times,
               rng: np.random.Generator, traj_capacity: int = 0, record_all: bool = False) -> KernelOutput:
    st = np.ascontiguousarray(sample_times, dtype=np.float64)
    ns, m = st.shape[0], len(pk.keys)
    out_spos = np.zeros((ns, m), dtype=np.int64)
    out_sstat = np.zeros((ns, m), dtype=np.int64)
    out_j2 = np.zeros(ns, dtype=np.int64)
    out_j2inf = np.zeros(ns, dtype=np.int64)
    out_x1 = np.zeros(ns, dtype=np.int64)
    out_x1stat = np.zeros(ns, dtype=np.int64)
    traj_ev = np.zeros((traj_capacity, 5), dtype=np.int64)
    traj_t = np.zeros(traj_capacity, dtype=np.float64)
    K.run_single(rng, float(g.gmax), float(asym.p), g.acceptance_table(), pk.n1, pk.inf, pk.rinf, pk.nsp,
                 pk.spos, pk.scls, pk.slab, pk.sstamp, pk.sstat, pk.exact_left, pk.exact_right,
                 float(t_end), st, pk.state, out_spos, out_sstat, out_j2, out_j2inf, out_x1, out_x1stat,
                 traj_ev, traj_t, bool(record_all))
    shift = pk.left - 1
    return KernelOutput(out_spos + shift, out_sstat, out_j2, out_j2inf, out_x1 + shift, out_x1stat,
                        traj_ev[: pk.state[K.TRAJ_LEN]], traj_t[: pk.state[K.TRAJ_LEN]])
