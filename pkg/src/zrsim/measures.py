"""Invariant product measures of the zero-range process and step initial data.

The stationary one-site law at fugacity ``phi`` puts weight
``phi**k / g(k)!`` on ``k`` particles. Because rate tables have a constant
tail ``g(k) = G`` for ``k >= K``, the weights beyond ``K`` form a geometric
series of ratio ``phi / G`` and are summed in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .core import (
    INFINITE,
    Configuration,
    RateFunction,
    SiteStack,
    ZRError,
    _Infinite,
)

EPS_TAIL = 1e-12


class Divergent(ZRError):
    """Fugacity at or beyond the radius of convergence G_max."""


class WindowTooSmall(ZRError):
    pass


class NotAStep(ZRError):
    pass


@dataclass(frozen=True)
class PartitionData:
    z: float
    r: float
    truncation_k: int
    variance: float = 0.0


def _head_weights(g: RateFunction, phi: float) -> list[float]:
    """phi**k / g(k)! for k = 0..K-1."""
    w = [1.0]
    for k in range(1, g.tail_index):
        w.append(w[-1] * phi / g.values[k - 1])
    return w


def partition_function(g: RateFunction, phi: float, eps_tail: float = EPS_TAIL) -> PartitionData:
    if not phi < g.gmax:
        raise Divergent(f"fugacity {phi} >= G_max = {g.gmax}")
    if phi < 0:
        raise ValueError("fugacity must be nonnegative")
    K = g.tail_index
    head = _head_weights(g, phi)
    # weight at k = K, then ratio r per step
    wK = head[-1] * phi / g.values[K - 1]
    r = phi / g.gmax
    tail_z = wK / (1.0 - r)
    tail_kz = wK * (K / (1.0 - r) + r / (1.0 - r) ** 2)
    tail_k2z = wK * (K * K / (1.0 - r) + 2 * K * r / (1.0 - r) ** 2 + r * (1.0 + r) / (1.0 - r) ** 3)
    z = math.fsum(head) + tail_z
    mean = math.fsum(k * w for k, w in enumerate(head)) + tail_kz
    second = math.fsum(k * k * w for k, w in enumerate(head)) + tail_k2z
    # first index whose remaining mass bound falls under eps_tail (reporting only)
    if wK == 0.0 or r == 0.0:
        trunc = K
    else:
        rel = eps_tail * (1.0 - r) * z / wK
        trunc = K if rel >= 1.0 else K + int(math.ceil(math.log(rel) / math.log(r)))
    m = mean / z
    return PartitionData(z=float(z), r=float(m), truncation_k=trunc, variance=float(max(second / z - m * m, 0.0)))


def mean_density(g: RateFunction, phi: float) -> float:
    """R(phi) = E[xi(0)] under the fugacity-phi product measure."""
    if phi == 0.0:
        return 0.0
    return partition_function(g, phi).r


def density_slope(g: RateFunction, phi: float) -> float:
    """R'(phi) = Var(xi(0)) / phi; at phi = 0 the limit 1 / g(1)."""
    if phi == 0.0:
        return 1.0 / g(1)
    return partition_function(g, phi).variance / phi


def fugacity_of_density(g: RateFunction, rho: float) -> float:
    """Inverse of R: the fugacity whose stationary mean occupancy is ``rho``."""
    if rho is INFINITE:
        return g.gmax
    if rho < 0 or not math.isfinite(rho):
        raise ValueError(f"density must be finite and nonnegative, got {rho}")
    if rho == 0.0:
        return 0.0
    hi = g.gmax
    # R(phi) ~ 1/(1 - phi/G) near G: step towards G until R exceeds rho
    lo, up = 0.0, hi * 0.5
    while mean_density(g, up) < rho:
        lo = up
        up = 0.5 * (up + hi)
        if up >= hi or up == lo:
            return up
    return brentq(lambda f: mean_density(g, f) - rho, lo, up, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


def site_law(g: RateFunction, phi: float, kmax: int | None = None) -> np.ndarray:
    """Probabilities of occupancies 0..kmax; ``kmax`` defaults to the truncation index."""
    pd = partition_function(g, phi)
    if kmax is None:
        kmax = max(pd.truncation_k, g.tail_index)
    w = np.empty(kmax + 1)
    w[0] = 1.0
    for k in range(1, kmax + 1):
        w[k] = w[k - 1] * phi / g(k)
    return w / pd.z


def sample_site(g: RateFunction, phi: float, rng: np.random.Generator, size=None):
    """Draw occupancies from the stationary one-site law by inverse CDF.

    The head k < K is inverted on its cumulative weights; beyond K the law is
    geometric with ratio phi/G and is inverted in closed form.
    """
    if phi == 0.0:
        return 0 if size is None else np.zeros(size, dtype=np.int64)
    if not phi < g.gmax:
        raise Divergent(f"fugacity {phi} >= G_max = {g.gmax}")
    K = g.tail_index
    head = site_law(g, phi, K - 1)
    cdf = np.cumsum(head)
    r = phi / g.gmax
    u = np.atleast_1d(rng.random(size))
    k = np.searchsorted(cdf, u, side="right").astype(np.int64)
    beyond = k >= K
    if beyond.any():
        tail_mass = max(1.0 - cdf[-1], np.finfo(float).tiny)
        v = np.clip((u[beyond] - cdf[-1]) / tail_mass, 0.0, 1.0 - 1e-16)
        k[beyond] = K + np.floor(np.log1p(-v) / math.log(r)).astype(np.int64)
    if size is None:
        return int(k[0])
    return k


# ---------------------------------------------------------------------------
# initial conditions


@dataclass(frozen=True)
class InitialCondition:
    """Step initial data.

    kind is one of ``product_zr``, ``bernoulli_ex``, ``xi_star``,
    ``xi_star_third`` or ``origin_second_burst``. ``rho`` may be
    :data:`INFINITE` for ``product_zr`` and ``origin_second_burst``.
    ``second_class`` adds a single class-2 particle at the origin to a
    ``product_zr`` draw.
    """

    kind: str
    rho: float | _Infinite = 0.0
    lam: float = 0.0
    alpha: float = 0.0
    beta: float = 0.0
    count: int = 0
    second_class: bool = False

    def __post_init__(self):
        kinds = {"product_zr", "bernoulli_ex", "xi_star", "xi_star_third", "origin_second_burst"}
        if self.kind not in kinds:
            raise ValueError(f"unknown initial condition {self.kind!r}")
        if self.kind == "bernoulli_ex":
            if not (0 <= self.alpha <= 1 and 0 <= self.beta <= 1):
                raise ValueError("alpha, beta must lie in [0, 1]")
        if self.kind == "origin_second_burst" and self.count < 1:
            raise ValueError("origin_second_burst needs count >= 1")


def product_zr(rho, lam=0.0, second_class=False) -> InitialCondition:
    return InitialCondition("product_zr", rho=rho, lam=lam, second_class=second_class)


def xi_star() -> InitialCondition:
    return InitialCondition("xi_star", rho=INFINITE, lam=0.0)


def xi_star_third() -> InitialCondition:
    return InitialCondition("xi_star_third", rho=INFINITE, lam=0.0)


def origin_second_burst(rho, count: int) -> InitialCondition:
    return InitialCondition("origin_second_burst", rho=rho, lam=0.0, count=count)


def bernoulli_ex(alpha: float, beta: float) -> InitialCondition:
    return InitialCondition("bernoulli_ex", alpha=alpha, beta=beta)


def profile_of(spec: InitialCondition):
    """Macroscopic (left, right) step densities of a product step measure."""
    if spec.kind == "bernoulli_ex":
        return (spec.alpha, spec.beta)
    if spec.kind in ("product_zr", "origin_second_burst", "xi_star", "xi_star_third"):
        return (spec.rho, spec.lam)
    raise NotAStep(spec.kind)


def _reservoir(g: RateFunction, rho):
    if rho is INFINITE:
        return INFINITE
    return fugacity_of_density(g, rho)


def sample_initial(spec: InitialCondition, window: tuple[int, int], rng: np.random.Generator,
                   g: RateFunction | None = None) -> Configuration:
    """Draw a configuration on ``window`` (inclusive bounds).

    First-class particles are labelled bottom-to-top, site by site from the
    left, starting at 0. Special particles carry labels 1, 2, ... within their
    class (bottom to top for a burst).
    """
    from .core import CONSTANT_RATE

    g = g or CONSTANT_RATE
    left, right = window
    if not (left <= -1 and right >= 1):
        raise WindowTooSmall(f"window {window} must contain sites -1, 0 and 1")
    n = right - left + 1

    if spec.kind == "bernoulli_ex":
        occ = np.where(np.arange(left, right + 1) < 0,
                       rng.random(n) < spec.alpha, rng.random(n) < spec.beta).astype(np.int64)
        from .core import from_occupancies
        # reservoir values are occupation probabilities for exclusion windows
        return from_occupancies(left, occ.tolist(), left_reservoir=spec.alpha, right_reservoir=spec.beta)

    rho, lam = spec.rho, spec.lam
    stacks: list[SiteStack] = []
    label = 0
    phi_lam = fugacity_of_density(g, lam)
    phi_rho = None if rho is INFINITE else fugacity_of_density(g, rho)
    neg = min(-left, n)
    left_draw = None if phi_rho is None else np.atleast_1d(sample_site(g, phi_rho, rng, size=neg))
    right_draw = np.atleast_1d(sample_site(g, phi_lam, rng, size=n - neg))
    for i, x in enumerate(range(left, right + 1)):
        if x < 0:
            if phi_rho is None:
                stacks.append(SiteStack(INFINITE, []))
                continue
            k = int(left_draw[i])
        else:
            k = int(right_draw[i - neg])
        stacks.append(SiteStack(k, [(1, label + j) for j in range(k)]))
        label += k

    config = Configuration(left, stacks, left_reservoir=_reservoir(g, rho), right_reservoir=phi_lam)
    origin = config.stack(0)
    if spec.kind in ("xi_star", "xi_star_third"):
        if phi_lam != 0.0:
            raise ValueError("xi_star configurations have empty nonnegative sites")
        origin.particles.append((2, 1))
        origin.occupancy += 1
        if spec.kind == "xi_star_third":
            s1 = config.stack(1)
            s1.particles.append((3, 1))
            s1.occupancy += 1
    elif spec.kind == "origin_second_burst":
        for j in range(1, spec.count + 1):
            origin.particles.append((2, j))
            origin.occupancy += 1
    elif spec.second_class:
        # the second-class particle sits at the bottom of the origin
        origin.particles.insert(0, (2, 1))
        origin.occupancy += 1
    return config


def window_for(t: float, vmax: float, sigmas: float = 8.0, support: tuple[int, int] = (0, 0),
               exact_left: bool = False) -> tuple[int, int]:
    """Light-cone window: the support widened by ``v t + sigmas * sqrt(v t + 10)`` on each side.

    With ``exact_left`` (totally asymmetric jumps: nothing travels left) the
    left margin is dropped, since the boundary reservoir reproduces the
    exterior exactly.
    """
    m = int(math.ceil(vmax * t + sigmas * math.sqrt(vmax * t + 10.0))) + 3
    left = support[0] - 3 if exact_left else support[0] - m
    return (min(left, -2), max(support[1] + m, 2))
