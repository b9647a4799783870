import math
import pickle

import pytest
from hypothesis import given
from hypothesis import strategies as st

from zrsim.core import (
    CONSTANT_RATE,
    INFINITE,
    AsymmetryParams,
    Configuration,
    EmptySite,
    NotMonotone,
    NotPositive,
    OutOfWindow,
    SiteStack,
    apply_jump,
    from_occupancies,
    read_rate_file,
    total_jump_rate,
    translate,
    validate_rate,
)

rate_tables = st.lists(st.floats(0.05, 5.0), min_size=1, max_size=6).map(sorted)


# --- rates -----------------------------------------------------------------

def test_constant_rate_table():
    g = validate_rate([1])
    assert g.gmax == 1.0
    assert g.is_constant
    assert [g(k) for k in range(4)] == [0.0, 1.0, 1.0, 1.0]


def test_table_rate_factorial():
    g = validate_rate([0.5, 1.0, 1.0])
    assert g.gmax == 1.0
    assert g.factorial(2) == 0.5
    assert g.factorial(0) == 1.0


def test_rate_rejections():
    with pytest.raises(NotMonotone):
        validate_rate([1.0, 0.5])
    with pytest.raises(NotPositive):
        validate_rate([0.0, 1.0])
    with pytest.raises(ValueError):
        validate_rate([])
    with pytest.raises(ValueError):
        validate_rate([1.0, math.inf])


@given(rate_tables, st.integers(0, 5))
def test_factorial_matches_direct_product(table, extra):
    g = validate_rate(table)
    for k in range(g.tail_index + extra + 1):
        direct = 1.0
        for j in range(1, k + 1):
            direct *= g(j)
        assert g.factorial(k) == pytest.approx(direct, rel=1e-12)


def test_constant_rate_factorial_exact():
    assert all(CONSTANT_RATE.factorial(k) == 1.0 for k in range(10))


def test_rate_infinite_occupancy_is_gmax():
    assert validate_rate([0.5, 1.0])(INFINITE) == 1.0


def test_read_rate_file(tmp_path):
    f = tmp_path / "g.txt"
    f.write_text("# rates\n0.5\n\n1.0  # tail\n")
    assert read_rate_file(f).values == (0.5, 1.0)


# --- asymmetry and occupancy -------------------------------------------------

def test_asymmetry_params():
    a = AsymmetryParams(0.7)
    assert a.p + a.q == 1.0
    assert a.drift == pytest.approx(0.4)
    assert AsymmetryParams(1.0).totally_asymmetric
    for bad in (0.5, 0.3, 1.2, -0.1):
        with pytest.raises(ValueError):
            AsymmetryParams(bad)


def test_infinite_arithmetic():
    assert INFINITE - 1 is INFINITE
    assert INFINITE + 1 is INFINITE
    assert 1 + INFINITE is INFINITE
    assert pickle.loads(pickle.dumps(INFINITE)) is INFINITE
    assert INFINITE != 5


# --- jump rates and jumps --------------------------------------------------

def test_total_jump_rate_examples():
    c = from_occupancies(0, [3, 0])
    assert total_jump_rate(c, 0, CONSTANT_RATE) == 1.0
    assert total_jump_rate(c, 1, validate_rate([0.5, 1.0])) == 0.0
    c.stacks[1] = SiteStack(INFINITE, [])
    assert total_jump_rate(c, 1, validate_rate([0.5, 1.0])) == 1.0
    with pytest.raises(OutOfWindow):
        total_jump_rate(c, 5, CONSTANT_RATE)


def test_first_class_has_priority():
    c = Configuration(0, [SiteStack(3, [(1, 10), (1, 11), (2, 1)]), SiteStack()])
    _, moved = apply_jump(c, 0, 1)
    assert moved == (1, 10)
    assert c.stack(0).particles == [(1, 11), (2, 1)]
    assert c.stack(1).particles == [(1, 10)]


def test_infinite_site_emits_and_keeps_passenger():
    c = Configuration(-1, [SiteStack(INFINITE, [(2, 1)]), SiteStack()])
    _, moved = apply_jump(c, -1, 1)
    assert moved[0] == 1 and moved[1] < 0
    assert c.stack(-1).particles == [(2, 1)]
    assert c.stack(0).occupancy == 1
    assert c.flux.inflow == 1


def test_lone_second_class_moves():
    c = Configuration(0, [SiteStack(1, [(2, 1)]), SiteStack()])
    _, moved = apply_jump(c, 0, 1)
    assert moved == (2, 1)
    assert c.positions(2) == {1: 1}


def test_empty_site_jump_fails():
    with pytest.raises(EmptySite):
        apply_jump(from_occupancies(0, [0, 1]), 0, 1)


def test_translate_examples():
    c = from_occupancies(-1, [0, 5, 2])
    assert translate(c, 0).same_state(c)
    assert translate(translate(c, 1), -1).same_state(c)
    assert translate(c, 1).occupancy(1) == 5
    assert translate(c, 1).stack(1).particles == c.stack(0).particles


# --- properties ------------------------------------------------------------

stacks = st.lists(st.tuples(st.integers(1, 4), st.integers(0, 50)), max_size=6)


@given(stacks)
def test_priority_order(records):
    c = Configuration(0, [SiteStack(len(records), list(records)), SiteStack()])
    if not records:
        return
    lowest = min(cls for cls, _ in records)
    _, moved = apply_jump(c, 0, 1)
    assert moved[0] == lowest
    # earliest arrival within the lowest class
    assert moved == next(r for r in records if r[0] == lowest)


@given(
    st.lists(st.integers(0, 4), min_size=3, max_size=8),
    st.booleans(),
    st.lists(st.tuples(st.integers(0, 7), st.sampled_from([-1, 1])), max_size=60),
)
def test_conservation_accounting(occ, reservoir, moves):
    occ = list(occ)
    if reservoir:
        occ[0] = INFINITE
    c = from_occupancies(0, occ)
    m0 = c.finite_mass()
    for site, d in moves:
        site = site % len(occ)
        s = c.stack(site)
        if not s.infinite and s.occupancy == 0:
            continue
        apply_jump(c, site, d)
        assert c.finite_mass() == m0 + c.flux.inflow - c.flux.outflow
        for st_ in c.stacks:
            if not st_.infinite:
                assert st_.occupancy == len(st_.particles)


@given(
    st.lists(st.lists(st.integers(1, 3), max_size=4), min_size=3, max_size=6),
    st.lists(st.tuples(st.integers(0, 5), st.sampled_from([-1, 1])), max_size=40),
)
def test_class_projection(classes, moves):
    # erasing classes commutes with jumping on occupancies
    stacks_ = []
    lab = 0
    for cl in classes:
        stacks_.append(SiteStack(len(cl), [(c, lab + i) for i, c in enumerate(cl)]))
        lab += len(cl)
    multi = Configuration(0, stacks_)
    single = multi.project()
    for site, d in moves:
        site = site % len(classes)
        if multi.stack(site).occupancy == 0:
            continue
        apply_jump(multi, site, d)
        apply_jump(single, site, d)
        assert multi.occupancies() == single.occupancies()
