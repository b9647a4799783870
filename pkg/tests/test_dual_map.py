import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zrsim.core import CONSTANT_RATE, INFINITE, AsymmetryParams, add_particle, from_occupancies, validate_rate
from zrsim.dual_map import (
    NoSecondClass,
    NotConstantRate,
    NotTotallyAsymmetric,
    canonical,
    ex_to_zr,
    run_dual,
    write_dual_csv,
    zr_to_ex,
)
from zrsim.engine import init_rng
from zrsim.measures import product_zr, sample_initial, window_for, xi_star, xi_star_third

P1 = AsymmetryParams(1.0)


def test_hand_encoding():
    # site -1 holds 3, the class-2 particle is alone at 0, site 2 holds 1
    c = from_occupancies(-2, [0, 3, 0, 0, 1, 0, 0])
    add_particle(c, 0, 2, 1)
    ex = zr_to_ex(c, 0)
    assert ex.render(-4, 4) == "∘ ● ● ● ⊛ ∘ ∘ ● ∘"
    assert ex.position(2) == 0


def test_figure_encoding():
    # sites -2, -1 hold 3 and 2; the origin holds the class-2 particle under one first-class particle
    c = from_occupancies(-3, [0, 3, 2, 1, 1, 0, 0, 1, 0, 0])
    c.stack(0).particles.insert(0, (2, 1))
    c.stack(0).occupancy += 1
    ex = zr_to_ex(c, 0)
    assert ex.render(-7, 9) == "∘ ● ● ● ∘ ● ● ⊛ ● ∘ ● ∘ ∘ ∘ ● ∘ ∘"
    assert canonical(c).same_state(ex_to_zr(ex))


def test_lone_second_class():
    c = from_occupancies(-3, [0] * 7)
    add_particle(c, 0, 2, 1)
    ex = zr_to_ex(c, 0)
    assert ex.render(-5, 5) == " ".join(["∘"] * 5 + ["⊛"] + ["∘"] * 5)
    back = ex_to_zr(ex)
    assert back.same_state(c)
    assert back.positions(2) == {1: 0}


def test_hole_labels():
    c = from_occupancies(-2, [0, 3, 0, 0, 1, 0, 0])
    add_particle(c, 0, 2, 1)
    ex = zr_to_ex(c, 0)
    assert ex.hole_label(1) == 1 and ex.hole_label(2) == 2 and ex.hole_label(4) == 3
    assert ex.hole_label(-4) == -1


def test_no_second_class():
    with pytest.raises(NoSecondClass):
        zr_to_ex(from_occupancies(0, [1, 2]))
    c = from_occupancies(0, [1, 2])
    add_particle(c, 0, 2, 1)
    add_particle(c, 1, 2, 2)
    with pytest.raises(NoSecondClass):
        zr_to_ex(c)


def test_infinite_block_encoding():
    c = sample_initial(xi_star(), (-4, 4), init_rng(0, 0))
    ex = zr_to_ex(c, 0)
    assert ex.occupant(-1) == (1, None) and ex.occupant(-100) == (1, None)
    assert ex.occupant(0) == (2, 1)
    assert canonical(c).same_state(ex_to_zr(ex))


@given(
    st.lists(st.integers(0, 4), min_size=3, max_size=12),
    st.integers(0, 11),
    st.booleans(),
    st.integers(-3, 3),
)
def test_round_trip_property(occ, at, infinite_left, y2):
    at %= len(occ)
    if infinite_left and at > 0:
        occ = [INFINITE] * at + occ[at:]
    c = from_occupancies(-at, occ, left_reservoir=INFINITE if infinite_left and at > 0 else 0.0)
    add_particle(c, 0, 2, 1)
    ex = zr_to_ex(c, y2)
    assert ex.position(2) == y2
    assert ex_to_zr(ex).same_state(canonical(c))


def test_round_trip_sampled_states():
    rng = np.random.default_rng(0)
    for k in range(2000):
        rho, lam = rng.uniform(0, 3), rng.uniform(0, 1)
        c = sample_initial(product_zr(rho, lam, second_class=True), (-6, 6), init_rng(k, 0))
        assert ex_to_zr(zr_to_ex(c, 0)).same_state(canonical(c))


@pytest.mark.parametrize("spec", [xi_star(), xi_star_third()], ids=["xi_star", "xi_star_third"])
def test_commuting_square(spec):
    t = 40.0
    checks = 0
    for rep in range(8):
        init = sample_initial(spec, window_for(t, 1), init_rng(7, rep))
        r = run_dual(init, P1, CONSTANT_RATE, t, seed=8, replica=rep)
        assert r.failures == 0
        assert all(rec.consistent and rec.x2_zr == rec.h2_se and rec.j2_zr == rec.j2_se for rec in r.records)
        checks += r.checks
    assert checks > 500


def test_overtaking_stops_transport():
    stopped = 0
    for rep in range(10):
        init = sample_initial(xi_star_third(), window_for(60, 1), init_rng(9, rep))
        r = run_dual(init, P1, CONSTANT_RATE, 60.0, seed=9, replica=rep)
        if r.overtaken_at is not None:
            stopped += 1
            assert all(rec.t < r.overtaken_at for rec in r.records)
    assert stopped > 0


def test_dual_zero_time():
    init = sample_initial(xi_star(), window_for(5, 1), init_rng(0, 0))
    r = run_dual(init, P1, CONSTANT_RATE, 0.0)
    assert r.records[-1].h2_se == 0 and r.records[-1].j2_se == 0
    assert r.checks == 0


def test_dual_rejections():
    init = sample_initial(xi_star(), window_for(5, 1), init_rng(0, 0))
    with pytest.raises(NotTotallyAsymmetric):
        run_dual(init, AsymmetryParams(0.7), CONSTANT_RATE, 1.0)
    with pytest.raises(NotConstantRate):
        run_dual(init, P1, validate_rate([0.5, 1.0]), 1.0)


def test_dual_csv(tmp_path):
    init = sample_initial(xi_star(), window_for(5, 1), init_rng(0, 0))
    r = run_dual(init, P1, CONSTANT_RATE, 5.0)
    path = tmp_path / "d.csv"
    write_dual_csv(path, [(0, r)])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["replica", "t", "x2_zr", "h2_se", "j2_zr", "j2_se", "consistent"]
    assert len(rows) == len(r.records) + 1
