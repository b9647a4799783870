"""Estimators and distribution distances used by the harness."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import INFINITE, ZRError

# neglected-weight bound for finite rho and marginal tail bound for infinite rho
WEIGHT_TAIL = 1e-9
MARGINAL_TAIL = 1e-3


class TruncationTooSmall(ZRError):
    pass


@dataclass
class ECDF:
    """Weighted empirical distribution; ``values`` sorted, ``weights`` summing to one."""

    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def of(cls, sample, weights=None) -> "ECDF":
        x = np.asarray(sample, dtype=np.float64).reshape(-1)
        w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
        if x.size and (np.any(w < 0) or w.sum() <= 0):
            raise ValueError("weights must be nonnegative with a positive sum")
        order = np.argsort(x, kind="stable")
        w = w[order]
        return cls(x[order], w / w.sum() if x.size else w)

    def __len__(self):
        return self.values.size

    def __call__(self, x):
        """Right-continuous: the weight of sample values <= x."""
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.values, x, side="right")
        return np.minimum(cw[idx], 1.0)

    def left_limit(self, x):
        cw = np.concatenate([[0.0], np.cumsum(self.weights)])
        return np.minimum(cw[np.searchsorted(self.values, x, side="left")], 1.0)

    def table(self):
        """Distinct support points with the ECDF value at each."""
        xs = np.unique(self.values)
        return xs, self(xs)


def ks_distance(ecdf: ECDF, cdf, continuous: bool = False) -> float:
    """sup |ECDF - cdf| over the sample points, using both one-sided gaps.

    The left gap compares left limits, taking ``cdf`` just below the point,
    so a target with an atom matching the sample is not penalized. With
    ``continuous`` the target is trusted to have no atoms and is evaluated
    once per point.
    """
    if len(ecdf) == 0:
        return 0.0
    xs = np.unique(ecdf.values)
    f = np.array([cdf(x) for x in xs], dtype=np.float64)
    f_left = f if continuous else np.array([cdf(np.nextafter(x, -np.inf)) for x in xs], dtype=np.float64)
    d_plus = np.max(ecdf(xs) - f)
    d_minus = np.max(f_left - ecdf.left_limit(xs))
    return float(max(d_plus, d_minus, 0.0))


def mean_se(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def binomial_estimate(successes: int, n: int, z: float = 1.96):
    """Proportion, its standard error and the Wilson interval."""
    if n == 0:
        return math.nan, math.nan, (math.nan, math.nan)
    ph = successes / n
    se = math.sqrt(ph * (1 - ph) / n)
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    half = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return ph, se, (mid - half, mid + half)


def labels_needed(rho) -> int | None:
    """Smallest K with (rho/(1+rho))^K < WEIGHT_TAIL; None for infinite rho."""
    if rho is INFINITE:
        return None
    w = rho / (1.0 + rho)
    if w <= 0:
        return 1
    return max(1, math.floor(math.log(WEIGHT_TAIL) / math.log(w)) + 1)


@dataclass
class WeightedSum:
    value: float
    se: float
    neglected: float
    tail_frequencies: list


def estimate_weighted_sum(positions, u: float, rho, t: float) -> WeightedSum:
    """Estimate sum_j P(X2^j(t) >= ut) (rho/(1+rho))^j (weights 1 for infinite rho).

    ``positions``: array (replicas, K) of label positions at time t, column
    j - 1 for label j. For infinite rho this is the mean number of labels at
    or beyond ut.
    """
    x = np.asarray(positions, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("positions must be a (replicas, K) array")
    n, k = x.shape
    hit = (x >= u * t).astype(np.float64)
    freq = hit.mean(axis=0) if n else np.zeros(k)
    if rho is INFINITE:
        if n and freq[-1] >= MARGINAL_TAIL:
            raise TruncationTooSmall(f"label {k} reaches ut with frequency {freq[-1]:.4g} >= {MARGINAL_TAIL}")
        w = np.ones(k)
        neglected = float(freq[-1]) if n else 0.0
    else:
        r = rho / (1.0 + rho)
        neglected = r ** k
        if neglected >= WEIGHT_TAIL:
            raise TruncationTooSmall(f"K = {k} leaves weight {neglected:.3g} >= {WEIGHT_TAIL}")
        w = r ** np.arange(1, k + 1)
    per_rep = hit @ w
    m, se = mean_se(per_rep)
    return WeightedSum(m, se, neglected, [float(f) for f in freq])
