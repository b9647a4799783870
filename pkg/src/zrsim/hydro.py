"""Macroscopic flux, rarefaction-fan entropy solution and the limit laws of
second-class particle positions and currents.

Everything is built from the rate table through the density map:
F(rho) = (p - q) * g~(rho), with g~ the inverse of R. Infinite density is the
symbol :data:`INFINITE`, with F(inf) = (p - q) * G_max and F'(inf) = 0.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import INFINITE, AsymmetryParams, RateFunction, ZRError
from .measures import density_slope, fugacity_of_density


class OutOfRange(ZRError):
    pass


class OutOfSupport(ZRError):
    pass


class PartialAsymmetry(ZRError):
    """The second-class current grows faster than linearly when p < 1."""


class ConcavityWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Flux:
    g: RateFunction
    asym: AsymmetryParams

    @property
    def ell(self) -> float:
        return self.g.gmax

    def __call__(self, rho) -> float:
        if rho is INFINITE:
            return self.asym.drift * self.ell
        if rho < 0:
            raise OutOfRange(f"negative density {rho}")
        return self.asym.drift * fugacity_of_density(self.g, rho)

    def prime(self, rho) -> float:
        """F'(rho) = (p - q) / R'(g~(rho)), with R'(phi) = Var_phi(xi(0)) / phi from the series."""
        if rho is INFINITE:
            return 0.0
        if rho < 0:
            raise OutOfRange(f"negative density {rho}")
        return self.asym.drift / density_slope(self.g, fugacity_of_density(self.g, rho))

    def prime_numeric(self, rho, h: float | None = None) -> float:
        """F'(rho) by central differences, step 1e-6 * max(1, rho); one-sided near 0."""
        if rho is INFINITE:
            return 0.0
        if rho < 0:
            raise OutOfRange(f"negative density {rho}")
        h = 1e-6 * max(1.0, rho) if h is None else h
        if rho < h:
            return (self(rho + h) - self(rho)) / h
        return (self(rho + h) - self(rho - h)) / (2 * h)

    def prime_inv(self, v: float) -> float:
        """The density whose characteristic speed is ``v``; v in (0, F'(0)]."""
        top = self.prime(0.0)
        if not 0.0 < v <= top:
            raise OutOfRange(f"speed {v} outside (0, {top}]")
        if v == top:
            return 0.0
        lo, hi = 0.0, 1.0
        while self.prime(hi) > v:
            lo, hi = hi, 2.0 * hi
            if hi > 1e12:
                raise OutOfRange(f"speed {v} too close to F'(inf) = 0")
        return brentq(lambda r: self.prime(r) - v, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)

    def check_concavity(self, grid=None, tol: float = 1e-9) -> bool:
        """Second differences of g~ on a grid; warns when positive beyond ``tol``."""
        grid = np.linspace(0.0, 20.0, 401) if grid is None else np.asarray(grid)
        vals = np.array([fugacity_of_density(self.g, r) for r in grid])
        ok = bool(np.all(np.diff(vals, 2) <= tol))
        if not ok:
            warnings.warn("g~ is not concave on the grid; fan formulas are unreliable", ConcavityWarning)
        return ok


def flux(g: RateFunction, asym: AsymmetryParams) -> Flux:
    return Flux(g, asym)


@dataclass(frozen=True)
class EntropySolution:
    rho_left: float
    rho_right: float
    flux: Flux

    def __post_init__(self):
        if self.rho_left is not INFINITE and self.rho_left < self.rho_right:
            raise OutOfRange("only decreasing steps (rarefaction fans) are supported")

    def speeds(self) -> tuple[float, float]:
        """Edges (F'(rho_left), F'(rho_right)) of the fan at t = 1."""
        return self.flux.prime(self.rho_left), self.flux.prime(self.rho_right)

    def __call__(self, t: float, u: float):
        return entropy_solution(self, t, u)

    def characteristic(self, rho0, t: float, u: float) -> float:
        """Position at time t of the characteristic leaving u with density rho0."""
        return u + self.flux.prime(rho0) * t


def entropy_solution(sol: EntropySolution, t: float, u: float):
    """rho(t, u): left state, fan value (F')^{-1}(u/t), or right state."""
    if t <= 0:
        raise ValueError("t must be positive")
    a, b = sol.speeds()
    v = u / t
    if v <= a:
        return sol.rho_left
    if v >= b:
        return sol.rho_right
    return sol.flux.prime_inv(v)


# ---------------------------------------------------------------------------
# limit laws


@dataclass(frozen=True)
class LimitLaw:
    """kind: ``thm22`` (X2/t from the infinite step), ``thm24_x2`` / ``thm24_j2``
    (constant rate, p = 1, step rho > lam) or ``current22`` (J2/t from the infinite step)."""

    kind: str
    g: RateFunction
    asym: AsymmetryParams
    rho: object = INFINITE
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("thm22", "thm24_x2", "thm24_j2", "current22"):
            raise ValueError(f"unknown law {self.kind!r}")
        if self.kind.startswith("thm24") and not (self.g.is_constant and self.asym.totally_asymmetric):
            raise ValueError("the uniform law holds for the constant-rate totally asymmetric process")

    @property
    def solution(self) -> EntropySolution:
        return EntropySolution(self.rho, self.lam, Flux(self.g, self.asym))

    def uniform_bounds(self) -> tuple[float, float]:
        a = -1.0 if self.rho is INFINITE else (1 - self.rho) / (1 + self.rho)
        return a, (1 - self.lam) / (1 + self.lam)

    def support(self) -> tuple[float, float]:
        if self.kind == "thm22":
            return 0.0, self.asym.drift
        if self.kind == "current22":
            return 0.0, current_limit(self, 0.0)
        a, b = self.uniform_bounds()
        if self.kind == "thm24_x2":
            return ((1 + a) / 2) ** 2, ((1 + b) / 2) ** 2
        return ((1 - b) / 2) ** 2, ((1 - a) / 2) ** 2


def _thm22(law: LimitLaw, u: float) -> float:
    lo, hi = law.support()
    if u < lo:
        return 0.0
    if u >= hi:
        return 1.0
    fl = law.solution.flux
    return 1.0 - fl(entropy_solution(law.solution, 1.0, u)) / (law.asym.p * fl.ell)


def current_limit(law: LimitLaw, x: float) -> float:
    """c(x) = F((F')^{-1}(x)) - (F')^{-1}(x) x, the limit of J2/t given X2/t -> x."""
    if not law.asym.totally_asymmetric:
        raise PartialAsymmetry("J2/t diverges when p < 1")
    fl = Flux(law.g, law.asym)
    top = fl.prime(0.0)
    if x <= 0.0:
        return fl(INFINITE)
    if x >= top:
        return 0.0
    r = fl.prime_inv(x)
    return fl(r) - r * x


def _density_of_current(law: LimitLaw, y: float) -> float:
    """The density r with F(r) - r F'(r) = y; that map increases from 0 to F(inf)."""
    fl = Flux(law.g, law.asym)

    def c(r):
        return fl(r) - r * fl.prime(r)

    lo, hi = 0.0, 1.0
    while c(hi) < y:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise OutOfRange(f"current {y} too close to F(inf)")
    return brentq(lambda r: c(r) - y, lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500)


def limit_cdf(law: LimitLaw, u: float) -> float:
    """CDF of the limit law at ``u`` (right-continuous)."""
    if law.kind == "thm22":
        return _thm22(law, u)
    if law.kind == "current22":
        lo, hi = law.support()
        if u < lo:
            return 0.0
        if u >= hi:
            return 1.0
        # J2/t <= y  iff  X >= x_y with c(x_y) = y, and rho(1, x_y) is the root below
        r = _density_of_current(law, u)
        return Flux(law.g, law.asym)(r) / (law.asym.p * law.g.gmax)
    a, b = law.uniform_bounds()
    if law.kind == "thm24_x2":
        w = 2.0 * math.sqrt(max(u, 0.0)) - 1.0
        return float(np.clip((w - a) / (b - a), 0.0, 1.0))
    w = 1.0 - 2.0 * math.sqrt(max(u, 0.0))
    return float(np.clip(1.0 - (w - a) / (b - a), 0.0, 1.0))


def weighted_sum_target(rho, u: float, asym: AsymmetryParams) -> float:
    """Limit of sum_j P(X2^j(t) >= ut) (rho/(1+rho))^j for the constant-rate TAZRP: rho(1, u)."""
    if not asym.totally_asymmetric:
        raise OutOfSupport("the weighted-sum limit is established for p = 1 only")
    lo = 0.0 if rho is INFINITE else 1.0 / (1.0 + rho) ** 2
    if not lo <= u <= 1.0:
        raise OutOfSupport(f"u = {u} outside [{lo}, 1]")
    from .core import CONSTANT_RATE

    sol = EntropySolution(rho, 0.0, Flux(CONSTANT_RATE, asym))
    if u == 0.0:
        return INFINITE
    return entropy_solution(sol, 1.0, u)


def tail_prob_target(rho, u: float) -> float:
    """Limit of P(X2^1(t) >= ut): ((1 + rho)/rho)(1 - sqrt(u)), u in [1/(1+rho)^2, 1]."""
    lo = 1.0 / (1.0 + rho) ** 2
    if not lo <= u <= 1.0:
        raise OutOfSupport(f"u = {u} outside [{lo}, 1]")
    return (1.0 + rho) / rho * (1.0 - math.sqrt(u))


def write_profile_csv(path, sol: EntropySolution, us, t: float = 1.0) -> None:
    """Columns u, rho_t_u, F, Fprime (infinite density written as ``inf``)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "rho_t_u", "F", "Fprime"])
        for u in us:
            r = entropy_solution(sol, t, u)
            cell = "inf" if r is INFINITE else repr(float(r))
            w.writerow([repr(float(u)), cell, repr(float(sol.flux(r))), repr(float(sol.flux.prime(r)))])


def crossing_probability(g: RateFunction, asym: AsymmetryParams) -> float:
    """Limit of P(X2(t) >= X3(t)) from the infinite step with the class-3 particle one site ahead.

    Known only for the constant-rate totally asymmetric process, through its
    correspondence with exclusion.
    """
    if not (g.is_constant and asym.totally_asymmetric):
        raise OutOfSupport("the crossing limit is known for the constant-rate process with p = 1 only")
    return 2.0 / 3.0


def bin_average(sol: EntropySolution, a: float, b: float) -> float:
    """Mean of rho(1, u) over u in [a, b]; by self-similarity also the mean of rho(t, .) over [a t, b t]."""
    from scipy.integrate import quad

    def f(v):
        r = entropy_solution(sol, 1.0, v)
        if r is INFINITE:
            raise OutOfRange("infinite density inside the averaging bin")
        return r

    val, _ = quad(f, a, b, limit=200, epsabs=1e-11, epsrel=1e-10)
    return val / (b - a)
