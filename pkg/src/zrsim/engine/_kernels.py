"""Compiled event loops.

Lattice indices: window sites are ``1..n``; index ``0`` and ``n + 1`` are the
boundary cells standing for everything outside the window. A boundary cell
is either a reservoir (``inf`` set, emitting at acceptance ``rinf``) or a
sink that swallows arrivals.

The class of the jumping particle is decided by nested thresholds on the
acceptance mark ``a``: class 1 moves if ``a <= g(n_1)/G``, otherwise the
lowest class ``m`` with ``a <= g(n_1 + ... + n_m)/G``. For the constant
rate this is strict priority; for general ``g`` it makes class-``m``
particles follow exactly the discrepancies of the basic coupling.
"""

import numpy as np
from numba import njit

ACTIVE = 0
TRAPPED = 1
EXITED = 2

# scalar slots in the int64 ``state`` vector
LO, HI, EVENTS, JUMPS, INFLOW, OUTFLOW, BREACH, J2, J2INF, TRAJ_LEN, TRAJ_OVF, X1POS, X1AHEAD, X1STAT = range(14)
VIOL_THIN, VIOL_ORDER = 14, 15
STATE_SIZE = 16


@njit(cache=True, nogil=True)
def _record(si, spos, sstat, state, out_spos, out_sstat, out_j2, out_j2inf, out_x1, out_x1stat):
    for k in range(spos.shape[0]):
        out_spos[si, k] = spos[k]
        out_sstat[si, k] = sstat[k]
    out_j2[si] = state[J2]
    out_j2inf[si] = state[J2INF]
    out_x1[si] = state[X1POS]
    out_x1stat[si] = state[X1STAT]


@njit(cache=True, nogil=True)
def _earliest(i, cls, spos, scls, sstamp, sstat):
    best = -1
    stamp = np.iinfo(np.int64).max
    for k in range(spos.shape[0]):
        if sstat[k] == ACTIVE and spos[k] == i and scls[k] == cls and sstamp[k] < stamp:
            stamp = sstamp[k]
            best = k
    return best


@njit(cache=True, nogil=True)
def run_single(rng, gmax, p, gacc, n1, inf, rinf, nsp, spos, scls, slab, sstamp, sstat,
               exact_left, exact_right, t_end, sample_times, state,
               out_spos, out_sstat, out_j2, out_j2inf, out_x1, out_x1stat,
               traj_ev, traj_t, record_all):
    n = n1.shape[0] - 2
    kt = gacc.shape[0] - 1
    nspec = spos.shape[0]
    maxcls = 1
    for k in range(nspec):
        if scls[k] > maxcls:
            maxcls = scls[k]
    has_primary = nspec > 0 and scls[0] == 2
    cap = traj_ev.shape[0]
    lo = state[LO]
    hi = state[HI]
    ns = sample_times.shape[0]
    si = 0
    t = 0.0
    while True:
        width = hi - lo + 1
        if width <= 0:
            break
        t += -np.log1p(-rng.random()) / (width * gmax)
        while si < ns and sample_times[si] < t:
            _record(si, spos, sstat, state, out_spos, out_sstat, out_j2, out_j2inf, out_x1, out_x1stat)
            si += 1
        if t > t_end:
            break
        i = lo + np.int64(rng.random() * width)
        d = rng.random()
        a = rng.random()
        state[EVENTS] += 1
        if d <= p:
            j = i + 1
        else:
            j = i - 1
        if j < 0 or j > n + 1:
            continue

        mover = -1  # special index, -1 for a first-class particle
        if inf[i]:
            if a > rinf[i] or inf[j]:
                continue
        else:
            k = n1[i] + nsp[i]
            if k == 0 or a > gacc[min(k, kt)]:
                continue
            if not (n1[i] > 0 and a <= gacc[min(n1[i], kt)]):
                c = n1[i]
                for m in range(2, maxcls + 1):
                    cnt = 0
                    for s in range(nspec):
                        if sstat[s] == ACTIVE and spos[s] == i and scls[s] == m:
                            cnt += 1
                    if cnt > 0:
                        c += cnt
                        if a <= gacc[min(c, kt)]:
                            mover = _earliest(i, m, spos, scls, sstamp, sstat)
                            break
        ev = state[EVENTS]
        state[JUMPS] += 1

        moves_x1 = False
        if mover < 0 and state[X1STAT] == ACTIVE and state[X1POS] == i:
            if state[X1AHEAD] == 0:
                moves_x1 = True
            else:
                state[X1AHEAD] -= 1
        tracked = mover >= 0 or moves_x1
        if (i <= 3 and exact_left == 0) or (i >= n - 2 and exact_right == 0):
            state[BREACH] = 1
        if tracked and (j == 0 or j == n + 1) and rinf[j] < 1.0:
            state[BREACH] = 1

        # current of first-class particles across the primary second-class particle
        if has_primary and sstat[0] == ACTIVE:
            x2 = spos[0]
            if mover < 0:
                if j == x2 and i == x2 - 1:
                    state[J2] += 1
                elif i == x2 and j == x2 - 1:
                    state[J2] -= 1
            elif mover == 0:
                if j == i - 1:
                    if inf[j]:
                        state[J2INF] = 1
                    else:
                        state[J2] += n1[j]
                else:
                    state[J2] -= n1[i]

        # leave the source
        if inf[i]:
            state[INFLOW] += 1
        elif mover < 0:
            n1[i] -= 1
        else:
            nsp[i] -= 1

        # reach the destination
        if inf[j]:
            if not inf[i]:
                state[OUTFLOW] += 1
            if mover >= 0:
                sstat[mover] = TRAPPED
                spos[mover] = j
            if moves_x1:
                state[X1STAT] = TRAPPED
                state[X1POS] = j
        elif j == 0 or j == n + 1:
            state[OUTFLOW] += 1
            if mover >= 0:
                sstat[mover] = EXITED
                spos[mover] = j
            if moves_x1:
                state[X1STAT] = EXITED
                state[X1POS] = j
        else:
            if mover < 0:
                if moves_x1:
                    state[X1POS] = j
                    state[X1AHEAD] = n1[j]
                n1[j] += 1
            else:
                nsp[j] += 1
                spos[mover] = j
                sstamp[mover] = ev
            if j < lo:
                lo = j
            if j > hi:
                hi = j

        if record_all or mover >= 0:
            r = state[TRAJ_LEN]
            if r < cap:
                traj_ev[r, 0] = ev
                traj_ev[r, 1] = i
                traj_ev[r, 2] = j
                if mover >= 0:
                    traj_ev[r, 3] = scls[mover]
                    traj_ev[r, 4] = slab[mover]
                else:
                    traj_ev[r, 3] = 1
                    traj_ev[r, 4] = -1
                traj_t[r] = t
                state[TRAJ_LEN] = r + 1
            else:
                state[TRAJ_OVF] = 1

    while si < ns:
        _record(si, spos, sstat, state, out_spos, out_sstat, out_j2, out_j2inf, out_x1, out_x1stat)
        si += 1
    state[LO] = lo
    state[HI] = hi


@njit(cache=True, nogil=True)
def run_coupled(rng, gmax, p, gacc, up, lw, inf, rinf, dpos, dlab, dstamp, dstat,
                exact_left, exact_right, t_end, sample_times, state,
                out_dpos, out_dstat, out_ndisc, traj_ev, traj_t, check_every):
    """Basic coupling of two single-class copies ``up >= lw`` sharing every mark.

    Discrepancies are labelled units of ``up - lw``; the earliest-arrived one
    at a site moves when only the upper copy fires.
    """
    n = up.shape[0] - 2
    kt = gacc.shape[0] - 1
    nd = dpos.shape[0]
    cap = traj_ev.shape[0]
    lo = state[LO]
    hi = state[HI]
    ns = sample_times.shape[0]
    si = 0
    t = 0.0
    while True:
        width = hi - lo + 1
        if width <= 0:
            break
        t += -np.log1p(-rng.random()) / (width * gmax)
        while si < ns and sample_times[si] < t:
            cnt = 0
            for k in range(nd):
                out_dpos[si, k] = dpos[k]
                out_dstat[si, k] = dstat[k]
                if dstat[k] == ACTIVE:
                    cnt += 1
            out_ndisc[si] = cnt
            si += 1
        if t > t_end:
            break
        i = lo + np.int64(rng.random() * width)
        d = rng.random()
        a = rng.random()
        state[EVENTS] += 1
        if d <= p:
            j = i + 1
        else:
            j = i - 1
        if j < 0 or j > n + 1:
            continue

        disc = -1
        if inf[i]:
            if a > rinf[i] or inf[j]:
                continue
            f1 = True
        else:
            k0 = up[i]
            k1 = lw[i]
            f0 = k0 > 0 and a <= gacc[min(k0, kt)]
            f1 = k1 > 0 and a <= gacc[min(k1, kt)]
            if f1 and not f0:
                state[VIOL_THIN] += 1
            if not f0:
                continue
            if not f1:
                best = np.iinfo(np.int64).max
                for s in range(nd):
                    if dstat[s] == ACTIVE and dpos[s] == i and dstamp[s] < best:
                        best = dstamp[s]
                        disc = s
        ev = state[EVENTS]
        state[JUMPS] += 1
        if (i <= 3 and exact_left == 0) or (i >= n - 2 and exact_right == 0):
            state[BREACH] = 1
        if disc >= 0 and (j == 0 or j == n + 1) and rinf[j] < 1.0:
            state[BREACH] = 1

        if inf[i]:
            state[INFLOW] += 1
        else:
            up[i] -= 1
            if f1:
                lw[i] -= 1
        if inf[j]:
            if not inf[i]:
                state[OUTFLOW] += 1
            if disc >= 0:
                dstat[disc] = TRAPPED
                dpos[disc] = j
        elif j == 0 or j == n + 1:
            state[OUTFLOW] += 1
            if disc >= 0:
                dstat[disc] = EXITED
                dpos[disc] = j
        else:
            up[j] += 1
            if f1:
                lw[j] += 1
            if disc >= 0:
                dpos[disc] = j
                dstamp[disc] = ev
            if j < lo:
                lo = j
            if j > hi:
                hi = j

        if up[i] < lw[i] or up[j] < lw[j]:
            state[VIOL_ORDER] += 1
        if check_every > 0 and ev % check_every == 0:
            for x in range(n + 2):
                if up[x] < lw[x]:
                    state[VIOL_ORDER] += 1
        if disc >= 0:
            r = state[TRAJ_LEN]
            if r < cap:
                traj_ev[r, 0] = ev
                traj_ev[r, 1] = i
                traj_ev[r, 2] = j
                traj_ev[r, 3] = 2
                traj_ev[r, 4] = dlab[disc]
                traj_t[r] = t
                state[TRAJ_LEN] = r + 1
            else:
                state[TRAJ_OVF] = 1

    while si < ns:
        cnt = 0
        for k in range(nd):
            out_dpos[si, k] = dpos[k]
            out_dstat[si, k] = dstat[k]
            if dstat[k] == ACTIVE:
                cnt += 1
        out_ndisc[si] = cnt
        si += 1
    state[LO] = lo
    state[HI] = hi
