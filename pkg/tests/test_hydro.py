import csv
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zrsim.core import CONSTANT_RATE, INFINITE, AsymmetryParams, validate_rate
from zrsim.hydro import (
    ConcavityWarning,
    EntropySolution,
    Flux,
    LimitLaw,
    OutOfRange,
    OutOfSupport,
    PartialAsymmetry,
    bin_average,
    crossing_probability,
    current_limit,
    entropy_solution,
    limit_cdf,
    tail_prob_target,
    weighted_sum_target,
    write_profile_csv,
)

P1 = AsymmetryParams(1.0)
P7 = AsymmetryParams(0.7)
G2 = validate_rate([0.5, 1.0])
FLUX1 = Flux(CONSTANT_RATE, P1)


# --- flux --------------------------------------------------------------------

def test_flux_examples():
    assert FLUX1(1.0) == pytest.approx(0.5, abs=1e-14)
    assert FLUX1.prime(1.0) == pytest.approx(0.25, abs=1e-14)
    assert FLUX1.prime_inv(0.25) == pytest.approx(1.0, abs=1e-12)
    assert FLUX1(0.0) == 0.0
    assert FLUX1(INFINITE) == 1.0
    assert FLUX1.prime(INFINITE) == 0.0


def test_flux_closed_form_constant_rate():
    # F = (p - q) rho / (1 + rho), F' = (p - q) / (1 + rho)^2
    f = Flux(CONSTANT_RATE, P7)
    for rho in np.geomspace(0.01, 100, 30):
        assert f(rho) == pytest.approx(0.4 * rho / (1 + rho), rel=1e-13)
        assert f.prime(rho) == pytest.approx(0.4 / (1 + rho) ** 2, rel=1e-12)


def test_flux_closed_form_table_rate():
    # g = [1/2, 1, ...]: g~(rho) = (sqrt(1 + rho^2) - 1) / rho, derivative by hand
    f = Flux(G2, P1)
    for rho in (0.1, 1.0, 3.0, 20.0):
        s = math.sqrt(1 + rho * rho)
        assert f(rho) == pytest.approx((s - 1) / rho, rel=1e-12)
        assert f.prime(rho) == pytest.approx((1 / s - (s - 1) / rho ** 2), rel=1e-9)
    assert f.prime(0.0) == 0.5


@pytest.mark.parametrize("g", [CONSTANT_RATE, G2, validate_rate([0.4, 0.7, 0.9, 1.0])], ids=["const", "g2", "g4"])
def test_prime_agrees_with_central_difference(g):
    f = Flux(g, P7)
    for rho in np.geomspace(0.01, 100, 25):
        assert f.prime(rho) == pytest.approx(f.prime_numeric(rho), rel=1e-6)


def test_central_difference_h_sweep():
    # the numeric derivative converges to the closed form as h shrinks (until rounding dominates)
    errs = [abs(FLUX1.prime_numeric(1.0, h) - 0.25) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]
    assert abs(FLUX1.prime_numeric(1.0) - 0.25) < 1e-9


@pytest.mark.parametrize("g", [CONSTANT_RATE, G2], ids=["const", "g2"])
def test_round_trips(g):
    f = Flux(g, P1)
    rhos = np.concatenate([np.linspace(0.01, 1, 40), np.geomspace(1, 100, 40)])
    assert max(abs(f.prime_inv(f.prime(r)) - r) for r in rhos) <= 1e-8
    vs = np.linspace(0.001, 1.0, 200) * f.prime(0.0)
    assert max(abs(f.prime(f.prime_inv(v)) - v) for v in vs) <= 1e-8


def test_prime_inv_out_of_range():
    with pytest.raises(OutOfRange):
        FLUX1.prime_inv(0.0)
    with pytest.raises(OutOfRange):
        FLUX1.prime_inv(1.5)
    with pytest.raises(OutOfRange):
        FLUX1(-1.0)


@pytest.mark.parametrize("g", [CONSTANT_RATE, G2], ids=["const", "g2"])
def test_flux_nondecreasing_concave(g):
    f = Flux(g, P7)
    grid = np.linspace(0, 30, 301)
    vals = np.array([f(r) for r in grid])
    assert np.all(np.diff(vals) >= 0)
    assert np.all(np.diff(vals, 2) <= 1e-12)
    assert f.check_concavity()


def test_concavity_warning():
    # a sharply increasing table makes g~ convex near 0
    f = Flux(validate_rate([0.05, 1.0]), P1)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert not f.check_concavity()
    assert any(issubclass(x.category, ConcavityWarning) for x in w)


# --- entropy solution ----------------------------------------------------------

def test_entropy_solution_examples():
    sol = EntropySolution(INFINITE, 0.0, FLUX1)
    assert entropy_solution(sol, 1.0, 0.25) == pytest.approx(1.0, abs=1e-12)
    assert entropy_solution(sol, 1.0, 1.5) == 0.0
    assert entropy_solution(sol, 1.0, -0.3) is INFINITE
    finite = EntropySolution(2.0, 0.5, FLUX1)
    assert finite(3.0, -1.0) == 2.0
    assert finite(3.0, 3.0 * 0.99) == 0.5


def test_entropy_solution_fan_closed_form():
    sol = EntropySolution(INFINITE, 0.0, Flux(CONSTANT_RATE, P7))
    t = 2.0
    for u in np.linspace(0.01, 0.79, 30):
        closed = (math.sqrt(0.4 * t) - math.sqrt(u)) / math.sqrt(u)
        assert sol(t, u) == pytest.approx(closed, rel=1e-10)


@pytest.mark.parametrize("g", [CONSTANT_RATE, G2], ids=["const", "g2"])
def test_entropy_solution_monotone_and_continuous(g):
    f = Flux(g, P7)
    sol = EntropySolution(3.0, 0.2, f)
    t = 5.0
    us = np.linspace(-1, 3, 500)
    vals = [sol(t, u) for u in us]
    assert np.all(np.diff(vals) <= 1e-12)
    a, b = sol.speeds()
    assert sol(t, a * t * (1 + 1e-12)) == pytest.approx(3.0, abs=1e-6)
    assert sol(t, b * t * (1 - 1e-12)) == pytest.approx(0.2, abs=1e-6)


def test_entropy_solution_increasing_step_rejected():
    with pytest.raises(OutOfRange):
        EntropySolution(0.2, 1.0, FLUX1)


def test_characteristic():
    sol = EntropySolution(INFINITE, 0.0, FLUX1)
    assert sol.characteristic(1.0, 2.0, 0.5) == pytest.approx(0.5 + 0.25 * 2.0)


def test_bin_average():
    sol = EntropySolution(INFINITE, 0.0, FLUX1)
    # integral of (1 - sqrt u)/sqrt u = 2 sqrt u - u
    a, b = 0.25, 0.3
    exact = ((2 * math.sqrt(b) - b) - (2 * math.sqrt(a) - a)) / (b - a)
    assert bin_average(sol, a, b) == pytest.approx(exact, rel=1e-9)
    with pytest.raises(OutOfRange):
        bin_average(sol, -0.1, 0.1)


# --- limit laws ------------------------------------------------------------------

@pytest.mark.parametrize("p", [1.0, 0.7, 0.9])
def test_thm22_closed_form(p):
    a = AsymmetryParams(p)
    law = LimitLaw("thm22", CONSTANT_RATE, a)
    us = np.linspace(0, a.drift, 1000)
    err = max(abs(limit_cdf(law, u) - (a.q + math.sqrt(a.drift * u)) / p) for u in us)
    assert err <= 1e-8


def test_thm22_examples():
    law = LimitLaw("thm22", CONSTANT_RATE, P1)
    assert limit_cdf(law, 0.25) == pytest.approx(0.5, abs=1e-12)
    for g in (CONSTANT_RATE, G2):
        assert limit_cdf(LimitLaw("thm22", g, P7), 0.0) == pytest.approx(0.3 / 0.7, abs=1e-12)
    assert limit_cdf(law, -0.1) == 0.0


def test_thm24_examples():
    law = LimitLaw("thm24_x2", CONSTANT_RATE, P1, 1.0, 0.0)
    assert limit_cdf(law, 9 / 16) == pytest.approx(0.5, abs=1e-14)
    u = np.linspace(0.25, 1, 50)
    assert np.allclose([limit_cdf(law, x) for x in u], np.maximum(0, 2 * np.sqrt(u) - 1), atol=1e-14)
    lj = LimitLaw("thm24_j2", CONSTANT_RATE, P1, 1.0, 0.0)
    v = np.linspace(0, 0.25, 50)
    assert np.allclose([limit_cdf(lj, x) for x in v], np.minimum(1, 2 * np.sqrt(v)), atol=1e-14)
    with pytest.raises(ValueError):
        LimitLaw("thm24_x2", G2, P1, 1.0, 0.0)


def test_thm22_matches_thm24_infinite_step():
    a = LimitLaw("thm22", CONSTANT_RATE, P1)
    b = LimitLaw("thm24_x2", CONSTANT_RATE, P1, INFINITE, 0.0)
    for u in np.linspace(0, 1, 1000):
        assert abs(limit_cdf(a, u) - limit_cdf(b, u)) <= 1e-8
        assert abs(limit_cdf(a, u) - math.sqrt(u)) <= 1e-8


def test_thm24_monte_carlo_oracle():
    # the CDF of ((1+U)/2)^2, U uniform on [a, b], against an empirical law of the transform
    rho, lam = 2.0, 0.5
    law = LimitLaw("thm24_x2", CONSTANT_RATE, P1, rho, lam)
    a, b = law.uniform_bounds()
    x = ((1 + np.random.default_rng(0).uniform(a, b, 200_000)) / 2) ** 2
    for u in np.quantile(x, [0.1, 0.3, 0.5, 0.7, 0.9]):
        assert limit_cdf(law, u) == pytest.approx(np.mean(x <= u), abs=0.005)


@pytest.mark.parametrize("kind,rho,lam", [("thm22", INFINITE, 0.0), ("thm24_x2", 1.0, 0.0), ("thm24_j2", 3.0, 0.5),
                                          ("current22", INFINITE, 0.0)])
@pytest.mark.parametrize("g", [CONSTANT_RATE, G2], ids=["const", "g2"])
def test_limit_cdfs_are_cdfs(kind, rho, lam, g):
    if kind.startswith("thm24") and g is not CONSTANT_RATE:
        return
    asym = P1 if kind != "thm22" else P7
    law = LimitLaw(kind, g, asym, rho, lam)
    lo, hi = law.support()
    us = np.linspace(lo, hi, 1000)
    vals = np.array([limit_cdf(law, u) for u in us])
    assert np.all(np.diff(vals) >= -1e-12)
    assert abs(vals[-1] - 1.0) <= 1e-8
    assert limit_cdf(law, lo - 1e-3) == 0.0 or kind == "thm22"
    if kind == "thm22":
        assert abs(limit_cdf(law, 0.0) - asym.q / asym.p) <= 1e-8


def test_current_limit_examples():
    law = LimitLaw("current22", CONSTANT_RATE, P1)
    assert current_limit(law, 0.25) == pytest.approx(0.25, abs=1e-12)
    assert current_limit(law, 1.0) == 0.0
    assert current_limit(law, 0.0) == 1.0
    for x in np.linspace(0.01, 0.99, 50):
        assert current_limit(law, x) == pytest.approx((1 - math.sqrt(x)) ** 2, abs=1e-10)
    with pytest.raises(PartialAsymmetry):
        current_limit(LimitLaw("current22", CONSTANT_RATE, P7), 0.3)


def test_current_cdf_constant_rate():
    # J = (1 - sqrt X)^2 with X having CDF sqrt(u): P(J <= y) = P(X >= (1 - sqrt y)^2) = sqrt(y)
    law = LimitLaw("current22", CONSTANT_RATE, P1)
    for y in np.linspace(0, 1, 200):
        assert abs(limit_cdf(law, y) - math.sqrt(y)) <= 1e-8


def test_current_cdf_table_rate_monte_carlo_oracle():
    # push X ~ thm22 law through the transform and compare with the current CDF
    law_x = LimitLaw("thm22", G2, P1)
    law_j = LimitLaw("current22", G2, P1)
    lo, hi = law_x.support()
    grid = np.linspace(lo, hi, 801)
    cdf = np.array([limit_cdf(law_x, u) for u in grid])
    cur = np.array([current_limit(law_j, x) for x in grid])
    xs = np.interp(np.random.default_rng(1).random(100_000), cdf, grid)
    js = np.interp(xs, grid, cur)
    for y in np.quantile(js, [0.2, 0.5, 0.8]):
        assert limit_cdf(law_j, y) == pytest.approx(np.mean(js <= y), abs=0.01)


def test_weighted_and_tail_targets():
    assert weighted_sum_target(1.0, 0.5, P1) == pytest.approx(math.sqrt(2) - 1, abs=1e-10)
    assert weighted_sum_target(INFINITE, 0.25, P1) == pytest.approx(1.0, abs=1e-10)
    assert weighted_sum_target(1.0, 1.0, P1) == pytest.approx(0.0, abs=1e-12)
    assert tail_prob_target(1.0, 0.5) == pytest.approx(2 * (1 - math.sqrt(0.5)))
    with pytest.raises(OutOfSupport):
        weighted_sum_target(1.0, 0.1, P1)
    with pytest.raises(OutOfSupport):
        weighted_sum_target(1.0, 0.5, P7)
    with pytest.raises(OutOfSupport):
        tail_prob_target(1.0, 0.1)


def test_crossing_probability():
    assert crossing_probability(CONSTANT_RATE, P1) == pytest.approx(2 / 3)
    with pytest.raises(OutOfSupport):
        crossing_probability(G2, P1)


@given(st.floats(0.0, 50.0), st.floats(0.0, 1.0))
def test_entropy_solution_in_step_range(rho, frac):
    lam = rho * frac
    sol = EntropySolution(rho, lam, Flux(G2, P7))
    for u in (-1.0, 0.0, 0.1, 0.3, 1.0):
        v = sol(1.0, u)
        assert lam - 1e-9 <= v <= rho + 1e-9


def test_profile_csv(tmp_path):
    sol = EntropySolution(INFINITE, 0.0, FLUX1)
    path = tmp_path / "p.csv"
    write_profile_csv(path, sol, [-0.5, 0.25, 2.0])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["u", "rho_t_u", "F", "Fprime"]
    assert rows[1][1] == "inf"
    assert float(rows[2][1]) == pytest.approx(1.0)
    assert float(rows[3][1]) == 0.0
