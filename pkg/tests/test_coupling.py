import csv
import math

import numpy as np
import pytest

from zrsim.core import CONSTANT_RATE, AsymmetryParams, from_occupancies, translate, validate_rate
from zrsim.coupling import (
    MERGED,
    LabelMismatch,
    MultipleDiscrepancies,
    NotOrdered,
    Trapped,
    WindowMismatch,
    check_ordering,
    discrepancy_position,
    make_pair,
    run_basic,
    run_basic_reference,
    run_p2p,
    write_coupled_csv,
)
from zrsim.engine import init_rng, line_current, run
from zrsim.measures import origin_second_burst, product_zr, sample_initial, window_for, xi_star

P1 = AsymmetryParams(1.0)
P7 = AsymmetryParams(0.7)
G2 = validate_rate([0.5, 1.0])


def split(init):
    """Upper copy = every particle first class; lower copy = first-class particles only."""
    upper = init.project()
    lower = init.copy()
    for s in lower.stacks:
        s.particles = [r for r in s.particles if r[0] == 1]
        if not s.infinite:
            s.occupancy = len(s.particles)
    return upper, lower


def test_identical_copies_stay_identical():
    init = sample_initial(product_zr(1.0, 0.5), window_for(20, 1), init_rng(0, 0))
    pair, tl = run_basic(init, init.copy(), P7, CONSTANT_RATE, 20.0, [5, 10, 20], seed=1)
    assert pair.upper.occupancies() == pair.lower.occupancies()
    assert tl.n_discrepancies.tolist() == [0, 0, 0]


@pytest.mark.parametrize("p", [1.0, 0.7])
@pytest.mark.parametrize("g", [CONSTANT_RATE, G2], ids=["const", "g2"])
@pytest.mark.parametrize("spec", [xi_star(), product_zr(1.0, 0.0, second_class=True), origin_second_burst(1.0, 4)],
                         ids=["xi_star", "product", "burst"])
def test_discrepancies_are_second_class_particles(p, g, spec):
    t = 30.0
    for rep in range(4):
        init = sample_initial(spec, window_for(t, 1), init_rng(3, rep), g)
        upper, lower = split(init)
        pair, tl = run_basic(upper, lower, AsymmetryParams(p), g, t, [t / 2, t], seed=4, replica=rep,
                             trajectory=True, check_every=1)
        r = run(init, AsymmetryParams(p), g, t, [t / 2, t], seed=4, replica=rep, on_breach="flag", trajectory=True)
        assert np.array_equal(tl.dpos, r.timeline.spos)
        assert np.array_equal(tl.dstat, r.timeline.sstat)
        assert [e[:3] + (e[4],) for e in tl.trajectory] == [e[:3] + (e[4],) for e in r.trajectory]
        assert tl.order_violations == 0 and tl.thinning_violations == 0
        assert np.all(np.diff(tl.n_discrepancies) <= 0)
        # an independent occupancy-only replay of the two copies agrees
        up, _ = run_basic_reference(upper, lower, AsymmetryParams(p), g, t, seed=4, replica=rep)
        assert [up[x] for x in pair.upper.sites()] == [0 if s.infinite else s.occupancy for s in pair.upper.stacks]


def test_attractiveness_every_event_reference():
    # ordering checked after every state change by the plain two-copy replay
    bad = events = 0
    for rep in range(5):
        lower = sample_initial(product_zr(1.0, 0.5), window_for(30, 1), init_rng(5, rep), G2)
        upper = lower.copy()
        extra = np.random.default_rng(rep).random(len(upper.stacks)) < 0.5
        for s, e in zip(upper.stacks, extra):
            if e and not s.infinite:
                s.occupancy += 1
                s.particles.append((1, 10**6 + len(s.particles)))

        def on_event(t, up, lw):
            nonlocal bad, events
            events += 1
            bad += any(up[x] < lw[x] for x in up)

        run_basic_reference(upper, lower, P7, G2, 30.0, seed=6, replica=rep, on_event=on_event)
    assert events > 1000
    assert bad == 0


def test_check_ordering_detector():
    a = from_occupancies(0, [1, 2, 0])
    b = from_occupancies(0, [1, 1, 0])
    pair = make_pair(a, b)
    assert check_ordering(pair)
    assert check_ordering(make_pair(a, a.copy()))
    pair.lower.stack(2).occupancy = 3
    assert not check_ordering(pair)


def test_pair_errors():
    with pytest.raises(WindowMismatch):
        make_pair(from_occupancies(0, [1, 1]), from_occupancies(0, [1, 1, 1]))
    with pytest.raises(NotOrdered):
        make_pair(from_occupancies(0, [0, 1]), from_occupancies(0, [1, 0]))
    pair = make_pair(from_occupancies(0, [2, 1]), from_occupancies(0, [0, 1]))
    with pytest.raises(MultipleDiscrepancies):
        discrepancy_position(pair)


def test_discrepancy_at_time_zero():
    init = sample_initial(xi_star(), window_for(10, 1), init_rng(0, 0))
    upper, lower = split(init)
    assert discrepancy_position(make_pair(upper, lower)) == 0


def test_discrepancy_trapped_at_minus_one():
    seen = 0
    for rep in range(20):
        init = sample_initial(xi_star(), window_for(20, 1), init_rng(1, rep))
        upper, lower = split(init)
        pair, _ = run_basic(upper, lower, P7, CONSTANT_RATE, 20.0, seed=2, replica=rep)
        pos = discrepancy_position(pair)
        assert pos == Trapped(-1) or isinstance(pos, int)
        seen += pos == Trapped(-1)
    assert seen > 0


def test_discrepancy_merged_when_it_leaves():
    upper = from_occupancies(-3, [0, 0, 0, 1, 1, 0, 0])
    lower = from_occupancies(-3, [0, 0, 0, 0, 1, 0, 0])
    pair, _ = run_basic(upper, lower, P1, CONSTANT_RATE, 100.0, seed=0)
    assert discrepancy_position(pair) == MERGED
    assert pair.upper.occupancies() == pair.lower.occupancies()


# --- particle-to-particle coupling -------------------------------------------

@pytest.mark.parametrize("p", [1.0, 0.7])
def test_p2p_translated_copy_follows(p):
    a = sample_initial(product_zr(1.0, 0.0), window_for(15, 1), init_rng(5, 0))
    b = translate(a, 1)
    res = run_p2p(a, b, AsymmetryParams(p), CONSTANT_RATE, 15.0, seed=6)
    assert all(res.obs_b.tagged[lab] == x + 1 for lab, x in res.obs_a.tagged.items())


def test_p2p_single_particle():
    a = from_occupancies(-5, [0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    b = from_occupancies(-5, [0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0])
    res = run_p2p(a, b, P7, CONSTANT_RATE, 3.0, seed=1)
    assert res.a.occupancies() == res.b.occupancies()


@pytest.mark.parametrize("p", [1.0, 0.7])
def test_p2p_current_identity(p):
    t = 20.0
    for rep in range(8):
        a = sample_initial(product_zr(1.0, 0.0), window_for(t, 1), init_rng(5, rep))
        b = translate(a, -1)
        res = run_p2p(a, b, AsymmetryParams(p), CONSTANT_RATE, t, seed=6, replica=rep)
        for u in (0.0, 0.1, 0.37, 0.5, 0.75):
            lhs = line_current(res.obs_a, u, t) - line_current(res.obs_b, u, t)
            rhs = res.a.occupancy(math.floor(u * t) + 1) - a.occupancy(1)
            assert lhs == rhs


def test_p2p_label_mismatch():
    a = from_occupancies(0, [1, 1, 0])
    b = from_occupancies(0, [1, 0, 0])
    with pytest.raises(LabelMismatch):
        run_p2p(a, b, P1, CONSTANT_RATE, 1.0)


def test_coupled_csv(tmp_path):
    init = sample_initial(origin_second_burst(1.0, 3), window_for(5, 1), init_rng(0, 0))
    upper, lower = split(init)
    _, tl = run_basic(upper, lower, P1, CONSTANT_RATE, 5.0, [1.0, 5.0])
    path = tmp_path / "c.csv"
    write_coupled_csv(path, [(0, tl)], 3)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["replica", "t", "n_discrepancies", "x2_1", "x2_2", "x2_3"]
    assert len(rows) == 3 and all(len(r) == 6 for r in rows)
