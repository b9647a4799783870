"""Monte Carlo experiments behind the acceptance suite.

An experiment turns an :class:`ExperimentConfig` into a :class:`Report`:
replicas are simulated independently (optionally on worker threads), their
rows are folded in replica order, and the aggregates are compared with
targets computed by :mod:`zrsim.hydro` at run time.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from .. import __version__
from ..core import (
    INFINITE,
    AsymmetryParams,
    Configuration,
    RateFunction,
    ZRError,
    add_particle,
    translate,
    validate_rate,
)
from ..coupling import run_basic, run_basic_reference, run_p2p
from ..dual_map import run_dual
from ..engine import ACTIVE, TRAPPED, density_profile, init_rng, line_current, prng_id, run
from ..hydro import (
    EntropySolution,
    Flux,
    LimitLaw,
    bin_average,
    crossing_probability,
    limit_cdf,
    tail_prob_target,
    weighted_sum_target,
)
from ..measures import (
    fugacity_of_density,
    mean_density,
    origin_second_burst,
    product_zr,
    sample_initial,
    window_for,
    xi_star,
    xi_star_third,
)
from .stats import ECDF, binomial_estimate, estimate_weighted_sum, ks_distance, labels_needed, mean_se


class InvalidConfig(ZRError):
    pass


class ReplicaFailed(ZRError):
    def __init__(self, replica: int, cause: Exception):
        super().__init__(f"replica {replica}: {type(cause).__name__}: {cause}")
        self.replica = replica
        self.cause = cause


# acceptance-suite defaults; any field left as None in a config is taken from here
DEFAULTS = {
    "lln": dict(p=1.0, t=200.0, replicas=2000),
    "partial": dict(p=0.7, t=300.0, replicas=4000),
    "thm24": dict(p=1.0, rho=1.0, lam=0.0, t=200.0, replicas=2000),
    "weighted": dict(p=1.0, rho=1.0, lam=0.0, u=0.5, t=200.0, replicas=4000),
    "crossing": dict(p=1.0, t=300.0, replicas=5000),
    "profile": dict(p=1.0, rho=math.inf, lam=0.0, t=400.0, replicas=200),
    "x1": dict(p=1.0, t=200.0, replicas=1000),
    "dual": dict(p=1.0, t=100.0, replicas=100),
    "discrepancy": dict(p=0.7, t=100.0, replicas=100),
    "attractive": dict(p=0.7, rho=1.0, lam=0.5, t=200.0, replicas=100),
    "p2p": dict(p=0.7, rho=1.0, lam=0.5, t=30.0, replicas=100),
    "conservation": dict(p=0.7, rho=1.0, lam=0.5, t=100.0, replicas=100),
    "numerics": dict(p=1.0, t=1.0, replicas=0),
}

TOL = {
    "ks": 0.05,
    "ks_trend": 0.01,
    "trapped": 0.03,
    "ks_partial": 0.06,
    "weighted": 0.05,
    "tail": 0.04,
    "crossing": 0.03,
    "profile": 0.05,
    "x1": 0.05,
    "cdf_closed_form": 1e-8,
    "round_trip": 1e-8,
    "inversion": 1e-10,
}

MIN_EVENTS = 100_000  # per replica, attractiveness suite
PROFILE_BINS = (0.1, 0.9, 16)  # u range and bin count (width 0.05)
P2P_U = (0.0, 0.1, 0.25, 0.5, 0.75)


def _inf_or(x):
    return INFINITE if x is not None and math.isinf(x) else x


@dataclass
class ExperimentConfig:
    experiment: str
    p: float | None = None
    rate: tuple = (1.0,)
    rho: float | None = None
    lam: float | None = None
    alpha: float | None = None
    beta: float | None = None
    t: float | None = None
    replicas: int | None = None
    seed: int = 0
    sample_times: tuple | None = None
    u: float | None = None
    labels: int | None = None
    window_margin_sigmas: float = 8.0
    threads: int = 1
    out: str | None = None

    def resolved(self) -> "ExperimentConfig":
        if self.experiment not in DEFAULTS:
            raise InvalidConfig(f"unknown experiment {self.experiment!r}; choose from {sorted(DEFAULTS)}")
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for k, v in DEFAULTS[self.experiment].items():
            if kw[k] is None:
                kw[k] = v
        kw["rate"] = tuple(float(x) for x in kw["rate"])
        if kw["sample_times"] is not None:
            kw["sample_times"] = tuple(float(x) for x in kw["sample_times"])
        return ExperimentConfig(**kw)

    @property
    def g(self) -> RateFunction:
        return validate_rate(self.rate)

    @property
    def asym(self) -> AsymmetryParams:
        return AsymmetryParams(self.p)

    def echo(self) -> dict:
        """Everything that determines the report (threads and output path do not)."""
        d = asdict(self)
        d.pop("threads")
        d.pop("out")
        for k in ("rho", "lam"):
            if d[k] is not None and math.isinf(d[k]):
                d[k] = "inf"
        d["rate"] = list(d["rate"])
        if d["sample_times"] is not None:
            d["sample_times"] = list(d["sample_times"])
        return d


def validate(cfg: ExperimentConfig) -> None:
    """Reject configurations outside the hypotheses of the targeted statement."""
    name = cfg.experiment
    try:
        g, asym = cfg.g, cfg.asym
    except (ZRError, ValueError) as e:
        raise InvalidConfig(str(e)) from e
    if cfg.t is None or cfg.t <= 0:
        raise InvalidConfig("t must be positive")
    if cfg.replicas is None or cfg.replicas < 0:
        raise InvalidConfig("replicas must be >= 0")
    if cfg.threads < 1:
        raise InvalidConfig("threads must be >= 1")
    p1 = asym.totally_asymmetric
    if name in ("lln", "thm24", "weighted", "crossing", "profile", "dual") and not p1:
        raise InvalidConfig(f"{name} needs p = 1")
    if name == "partial" and p1:
        raise InvalidConfig("partial needs p < 1")
    if name in ("thm24", "weighted", "crossing", "dual") and not g.is_constant:
        raise InvalidConfig(f"{name} needs the constant rate")
    if name in ("thm24", "weighted", "profile", "attractive", "p2p", "conservation", "discrepancy"):
        rho, lam = cfg.rho, cfg.lam
        if name in ("thm24", "profile") and not (rho is not None and lam is not None and rho > lam):
            raise InvalidConfig(f"{name} needs rho > lam")
        if rho is not None and rho < 0 or lam is not None and lam < 0:
            raise InvalidConfig("densities must be nonnegative")
    if name in ("attractive", "p2p") and cfg.rho is not None and math.isinf(cfg.rho):
        raise InvalidConfig(f"{name} needs a finite rho")
    if name == "weighted":
        if cfg.lam != 0.0:
            raise InvalidConfig("weighted needs lam = 0")
        rho = _inf_or(cfg.rho)
        lo = 0.0 if rho is INFINITE else 1.0 / (1.0 + rho) ** 2
        if not lo < cfg.u <= 1.0:
            raise InvalidConfig(f"u = {cfg.u} outside ({lo}, 1]")
        if cfg.labels is not None and cfg.labels < 1:
            raise InvalidConfig("labels must be >= 1")
    if name == "attractive" and any(b < a for a, b in zip(g.values, g.values[1:])):
        raise InvalidConfig("attractiveness needs a nondecreasing rate")


# ---------------------------------------------------------------------------
# report


@dataclass
class Report:
    meta: dict
    columns: list
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def check(self, name: str) -> dict:
        return next(c for c in self.checks if c["name"] == name)

    def to_dict(self) -> dict:
        return {"meta": self.meta, "columns": self.columns, "rows": self.rows,
                "aggregates": self.aggregates, "checks": self.checks}

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(d["meta"], d["columns"], d["rows"], d["aggregates"], d["checks"])


def _check(name, value, target, tol, kind="abs", detail=""):
    """kind ``abs``: |value - target| <= tol; ``le``: value <= target + tol; ``eq``: value == target."""
    value = _py(value)
    target = _py(target)
    if kind == "abs":
        ok = abs(value - target) <= tol
    elif kind == "le":
        ok = value <= target + tol
    elif kind == "ge":
        ok = value >= target - tol
    else:
        ok = value == target
    if isinstance(value, float) and math.isnan(value):
        ok = False
    return {"name": name, "value": value, "target": target, "tolerance": tol, "kind": kind,
            "passed": bool(ok), "detail": detail}


def _py(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, (list, tuple)):
        return [_py(v) for v in x]
    if isinstance(x, dict):
        return {k: _py(v) for k, v in x.items()}
    return x


# ---------------------------------------------------------------------------
# experiments


class _Experiment:
    columns: list = []

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.g = cfg.g
        self.asym = cfg.asym

    def window(self, t, support=(0, 0)):
        return window_for(t, self.g.gmax, self.cfg.window_margin_sigmas, support,
                          exact_left=self.asym.totally_asymmetric)

    def initial(self, spec, window, k):
        return sample_initial(spec, window, init_rng(self.cfg.seed, k), self.g)

    def replica(self, k):
        """Row for replica ``k``, or None if the replica is discarded."""
        raise NotImplementedError

    def aggregate(self, rows):
        raise NotImplementedError

    def col(self, rows, name):
        i = self.columns.index(name)
        return np.array([r[i] for r in rows], dtype=np.float64)


class LLN(_Experiment):
    columns = ["replica", "x2_t", "x2_2t", "j2_t", "j2_2t", "x1_t", "x1_2t"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.times = cfg.sample_times or (cfg.t, 2 * cfg.t)
        if len(self.times) != 2:
            raise InvalidConfig("lln samples exactly two times (t, 2t)")
        self.win = self.window(max(self.times))

    def replica(self, k):
        r = run(self.initial(xi_star(), self.win, k), self.asym, self.g, max(self.times), self.times,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        tl = r.timeline
        return [k, int(tl.x2[0]), int(tl.x2[1]), int(tl.j2[0]), int(tl.j2[1]), int(tl.x1[0]), int(tl.x1[1])]

    def aggregate(self, rows):
        law_x = LimitLaw("thm22", self.g, self.asym)
        law_j = LimitLaw("current22", self.g, self.asym)
        fx = lru_cache(maxsize=None)(lambda u: limit_cdf(law_x, u))
        fj = lru_cache(maxsize=None)(lambda u: limit_cdf(law_j, u))
        agg, checks = {}, []
        for tag, t in zip(("t", "2t"), self.times):
            agg[f"ks_x2_{tag}"] = ks_distance(ECDF.of(self.col(rows, f"x2_{tag}") / t), fx, continuous=True)
            agg[f"ks_j2_{tag}"] = ks_distance(ECDF.of(self.col(rows, f"j2_{tag}") / t), fj, continuous=True)
            agg[f"mean_x2_over_t_{tag}"], agg[f"se_x2_over_t_{tag}"] = mean_se(self.col(rows, f"x2_{tag}") / t)
        checks.append(_check("ks_x2", agg["ks_x2_t"], 0.0, TOL["ks"], "le", f"X2(t)/t vs thm22 CDF, t={self.times[0]}"))
        checks.append(_check("ks_x2_trend", agg["ks_x2_2t"], agg["ks_x2_t"], TOL["ks_trend"], "le",
                             "KS at 2t <= KS at t + 0.01"))
        checks.append(_check("ks_j2", agg["ks_j2_t"], 0.0, TOL["ks"], "le", "J2(t)/t vs current limit CDF"))
        agg["target_mean_x2"] = float(_mean_of_cdf(fx, *law_x.support()))
        return agg, checks


def _mean_of_cdf(cdf, lo, hi, n=2000):
    # E[X] = lo + int_lo^hi (1 - F) du, midpoint rule
    us = lo + (np.arange(n) + 0.5) * (hi - lo) / n
    return lo + float(np.sum([1.0 - cdf(u) for u in us])) * (hi - lo) / n


class Partial(_Experiment):
    columns = ["replica", "x2", "trapped"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(xi_star(), self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        return [k, int(r.timeline.x2[0]), int(r.timeline.sstat[0, 0] == TRAPPED)]

    def aggregate(self, rows):
        t = self.cfg.t
        law = LimitLaw("thm22", self.g, self.asym)
        atom = limit_cdf(law, 0.0)
        trapped = self.col(rows, "trapped")
        x = self.col(rows, "x2") / t
        frac, se, ci = binomial_estimate(int(trapped.sum()), len(rows))
        free = x[trapped == 0]
        cond = lru_cache(maxsize=None)(lambda u: (limit_cdf(law, u) - atom) / (1.0 - atom))
        ks = ks_distance(ECDF.of(free), cond, continuous=True)
        agg = {"trapped_fraction": frac, "trapped_se": se, "trapped_ci": list(ci), "target_trapped": atom,
               "ks_untrapped": ks, "untrapped": int(free.size)}
        return agg, [_check("trapped_fraction", frac, atom, TOL["trapped"], detail="P(trapped at -1) vs F_X(0)"),
                     _check("ks_untrapped", ks, 0.0, TOL["ks_partial"], "le", "untrapped X2/t vs renormalized CDF")]


class Thm24(_Experiment):
    columns = ["replica", "x2", "j2"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = product_zr(_inf_or(cfg.rho), cfg.lam, second_class=True)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(self.spec, self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        return [k, int(r.timeline.x2[0]), int(r.timeline.j2[0])]

    def aggregate(self, rows):
        t = self.cfg.t
        rho = _inf_or(self.cfg.rho)
        lx = LimitLaw("thm24_x2", self.g, self.asym, rho, self.cfg.lam)
        lj = LimitLaw("thm24_j2", self.g, self.asym, rho, self.cfg.lam)
        agg = {"ks_x2": ks_distance(ECDF.of(self.col(rows, "x2") / t), lambda u: limit_cdf(lx, u), True),
               "ks_j2": ks_distance(ECDF.of(self.col(rows, "j2") / t), lambda u: limit_cdf(lj, u), True),
               "uniform_bounds": list(lx.uniform_bounds())}
        return agg, [_check("ks_x2", agg["ks_x2"], 0.0, TOL["ks"], "le", "X2/t vs ((1+U)/2)^2"),
                     _check("ks_j2", agg["ks_j2"], 0.0, TOL["ks"], "le", "J2/t vs ((1-U)/2)^2")]


class Weighted(_Experiment):
    def __init__(self, cfg):
        super().__init__(cfg)
        self.rho = _inf_or(cfg.rho)
        self.K = cfg.labels or labels_needed(self.rho) or 30
        self.columns = ["replica"] + [f"x2_{j}" for j in range(1, self.K + 1)]
        self.spec = origin_second_burst(self.rho, self.K)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(self.spec, self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        keys = r.timeline.keys
        order = sorted(range(len(keys)), key=lambda i: keys[i][1])
        return [k] + [int(r.timeline.spos[0, i]) for i in order]

    def aggregate(self, rows):
        t, u = self.cfg.t, self.cfg.u
        pos = np.array([r[1:] for r in rows], dtype=np.float64).reshape(len(rows), self.K)
        est = estimate_weighted_sum(pos, u, self.rho, t)
        target = weighted_sum_target(self.rho, u, self.asym)
        agg = {"weighted_sum": est.value, "weighted_sum_se": est.se, "target_weighted_sum": target,
               "labels": self.K, "neglected": est.neglected, "tail_frequencies": est.tail_frequencies}
        checks = [_check("weighted_sum", est.value, target, TOL["weighted"],
                         detail=f"sum_j P(X2^j(t) >= ut) w^j vs rho(1,u), K={self.K}")]
        if self.rho is not INFINITE:
            p1, se1, _ = binomial_estimate(int((pos[:, 0] >= u * t).sum()), len(rows))
            agg.update(tail_label1=p1, tail_label1_se=se1, target_tail_label1=tail_prob_target(self.rho, u))
            checks.append(_check("tail_label1", p1, agg["target_tail_label1"], TOL["tail"],
                                 detail="P(X2^1(t) >= ut) vs ((1+rho)/rho)(1-sqrt(u))"))
        return agg, checks


class Crossing(_Experiment):
    columns = ["replica", "x2", "x3", "crossed"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(xi_star_third(), self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        x2, x3 = int(r.timeline.x2[0]), int(r.timeline.x3[0])
        return [k, x2, x3, int(x2 >= x3)]

    def aggregate(self, rows):
        c = self.col(rows, "crossed")
        ph, se, ci = binomial_estimate(int(c.sum()), len(rows))
        target = crossing_probability(self.g, self.asym)
        agg = {"crossing": ph, "crossing_se": se, "crossing_ci": list(ci), "target_crossing": target}
        return agg, [_check("crossing", ph, target, TOL["crossing"], detail="P(X2(t) >= X3(t))")]


class Profile(_Experiment):
    def __init__(self, cfg):
        super().__init__(cfg)
        a, b, n = PROFILE_BINS
        self.edges = np.linspace(a, b, n + 1)
        self.columns = ["replica"] + [f"bin_{i}" for i in range(n)]
        self.spec = product_zr(_inf_or(cfg.rho), cfg.lam)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(self.spec, self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        dens = density_profile(r.config, len(self.edges) - 1, (self.edges[0], self.edges[-1]), self.cfg.t)
        return [k] + [float(d) for d in dens]

    def aggregate(self, rows):
        sol = EntropySolution(_inf_or(self.cfg.rho), self.cfg.lam, Flux(self.g, self.asym))
        target = [bin_average(sol, a, b) for a, b in zip(self.edges[:-1], self.edges[1:])]
        data = np.array([r[1:] for r in rows], dtype=np.float64).reshape(len(rows), len(target))
        mean = data.mean(axis=0) if len(rows) else np.full(len(target), np.nan)
        dev = float(np.max(np.abs(mean - np.array(target))))
        agg = {"bin_edges": [float(e) for e in self.edges], "mean_density": [float(m) for m in mean],
               "target_density": [float(x) for x in target], "max_deviation": dev}
        return agg, [_check("profile", dev, 0.0, TOL["profile"], "le", "max over bins |mean density - rho(1,u)|")]


class X1(_Experiment):
    columns = ["replica", "x1"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.win = self.window(cfg.t)

    def replica(self, k):
        r = run(self.initial(xi_star(), self.win, k), self.asym, self.g, self.cfg.t,
                seed=self.cfg.seed, replica=k, on_breach="flag")
        if r.breach:
            return None
        return [k, int(r.timeline.x1[0])]

    def aggregate(self, rows):
        m, se = mean_se(self.col(rows, "x1") / self.cfg.t)
        target = Flux(self.g, self.asym).prime(0.0)
        return ({"mean_x1_over_t": m, "se": se, "target": target},
                [_check("x1_drift", m, target, TOL["x1"], detail="mean X1(t)/t vs F'(0)")])


class Dual(_Experiment):
    columns = ["replica", "checks", "failures", "events"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.win = self.window(cfg.t)

    def replica(self, k):
        res = run_dual(self.initial(xi_star(), self.win, k), self.asym, self.g, self.cfg.t,
                       seed=self.cfg.seed, replica=k)
        if res.breach:
            return None
        return [k, res.checks, res.failures, res.events]

    def aggregate(self, rows):
        f = int(self.col(rows, "failures").sum()) if rows else 0
        agg = {"checks": int(self.col(rows, "checks").sum()) if rows else 0, "failures": f}
        return agg, [_check("dual_square", f, 0, 0, "eq", "encoding commutes with the dynamics at every event")]


def _drop_specials(config: Configuration) -> Configuration:
    out = config.copy()
    for s in out.stacks:
        s.particles = [r for r in s.particles if r[0] == 1]
        if not s.infinite:
            s.occupancy = len(s.particles)
    return out


class Discrepancy(_Experiment):
    columns = ["replica", "moves", "mismatches"]

    def __init__(self, cfg):
        super().__init__(cfg)
        rho = _inf_or(cfg.rho)
        self.spec = xi_star() if rho is None or rho is INFINITE else product_zr(rho, cfg.lam or 0.0, True)
        self.win = self.window(cfg.t)

    def replica(self, k):
        cfg = self.cfg
        init = self.initial(self.spec, self.win, k)
        times = np.linspace(0, cfg.t, 11)
        r = run(init, self.asym, self.g, cfg.t, times, seed=cfg.seed, replica=k, backend="compiled",
                trajectory=True, on_breach="flag")
        upper, lower = init.project(), _drop_specials(init)
        pair, tl = run_basic(upper, lower, self.asym, self.g, cfg.t, times, seed=cfg.seed, replica=k, trajectory=True)
        bad = 0
        bad += not np.array_equal(tl.dpos, r.timeline.spos)
        bad += not np.array_equal(tl.dstat, r.timeline.sstat)
        bad += [e[:3] + (e[4],) for e in tl.trajectory] != [e[:3] + (e[4],) for e in r.trajectory]
        # occupancies from an independent implementation that knows nothing of discrepancies
        up, lw = run_basic_reference(upper, lower, self.asym, self.g, cfg.t, seed=cfg.seed, replica=k)
        ((site, status),) = pair.discrepancies.values()
        diff = {x: up[x] - lw[x] for x in up if up[x] != lw[x]}
        expect = {site: 1} if status == ACTIVE else {}
        bad += diff != expect
        return [k, len(tl.trajectory), int(bad)]

    def aggregate(self, rows):
        m = int(self.col(rows, "mismatches").sum()) if rows else 0
        return {"mismatches": m}, [_check("discrepancy_path", m, 0, 0, "eq",
                                          "discrepancy path equals the class-2 path")]


class Attractive(_Experiment):
    columns = ["replica", "events", "order_violations", "thinning_violations"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = product_zr(cfg.rho, cfg.lam)
        self.win = self.window(cfg.t)

    def replica(self, k):
        rng = init_rng(self.cfg.seed, k)
        lower = sample_initial(self.spec, self.win, rng, self.g)
        upper = lower.copy()
        label = 1 + max((lab for s in lower.stacks for _, lab in s.particles), default=0)
        for x, extra in zip(upper.sites(), rng.random(len(upper.stacks)) < 0.5):
            if extra and not upper.stack(x).infinite:
                add_particle(upper, x, 1, label)
                label += 1
        _, tl = run_basic(upper, lower, self.asym, self.g, self.cfg.t, seed=self.cfg.seed, replica=k,
                          check_every=1)
        return [k, tl.events, tl.order_violations, tl.thinning_violations]

    def aggregate(self, rows):
        v = int(self.col(rows, "order_violations").sum() + self.col(rows, "thinning_violations").sum()) if rows else 0
        ev = int(self.col(rows, "events").min()) if rows else 0
        return ({"violations": v, "min_events": ev},
                [_check("ordering", v, 0, 0, "eq", "upper >= lower after every event"),
                 _check("events_per_replica", ev, MIN_EVENTS, 0, "ge", "events simulated per replica")])


class P2P(_Experiment):
    columns = ["replica"] + [f"mismatch_u{u}" for u in P2P_U]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = product_zr(cfg.rho, cfg.lam)
        self.win = self.window(cfg.t)

    def replica(self, k):
        t = self.cfg.t
        a = self.initial(self.spec, self.win, k)
        res = run_p2p(a, translate(a, -1), self.asym, self.g, t, seed=self.cfg.seed, replica=k)
        row = [k]
        for u in P2P_U:
            lhs = line_current(res.obs_a, u, t) - line_current(res.obs_b, u, t)
            rhs = res.a.stack(math.floor(u * t) + 1).occupancy - a.stack(1).occupancy
            row.append(int(lhs != rhs))
        return row

    def aggregate(self, rows):
        m = int(sum(sum(r[1:]) for r in rows))
        return {"mismatches": m}, [_check("p2p_current", m, 0, 0, "eq",
                                          "J_A - J_B = xi_t(floor(ut)+1) - xi_0(1) with B = A shifted by one")]


class Conservation(_Experiment):
    columns = ["replica", "mass_change", "inflow", "outflow", "specials_lost"]

    def __init__(self, cfg):
        super().__init__(cfg)
        self.spec = product_zr(_inf_or(cfg.rho), cfg.lam, second_class=True)
        self.win = self.window(cfg.t)

    def replica(self, k):
        init = self.initial(self.spec, self.win, k)
        r = run(init, self.asym, self.g, self.cfg.t, seed=self.cfg.seed, replica=k, on_breach="flag")
        c = r.config
        before = sum(1 for s in init.stacks for cl, _ in s.particles if cl != 1)
        inside = sum(1 for s in c.stacks if not s.infinite for cl, _ in s.particles if cl != 1)
        gone = int(np.sum(r.timeline.sstat[-1] != ACTIVE))
        return [k, c.finite_mass() - init.finite_mass(), c.flux.inflow, c.flux.outflow, before - inside - gone]

    def aggregate(self, rows):
        bad = sum(1 for r in rows if r[1] != r[2] - r[3] or r[4] != 0)
        return {"violations": bad}, [_check("conservation", bad, 0, 0, "eq",
                                            "finite mass change = inflow - outflow")]


class Numerics(_Experiment):
    columns = ["replica"]

    def replica(self, k):
        return [k]

    def aggregate(self, rows):
        g, asym = self.g, self.asym
        p, q = asym.p, asym.q
        fl = Flux(g, asym)
        agg, checks = {}, []
        if g.is_constant:
            law = LimitLaw("thm22", g, asym)
            us = np.linspace(0.0, p - q, 1000)
            err = max(abs(limit_cdf(law, u) - (q + math.sqrt((p - q) * u)) / p) for u in us)
            agg["cdf_closed_form_error"] = err
            checks.append(_check("cdf_closed_form", err, 0.0, TOL["cdf_closed_form"], "le",
                                 "thm22 CDF vs (q + sqrt((p-q)u))/p on 1000 points"))
        rhos = np.concatenate([np.linspace(0.01, 1.0, 25), np.geomspace(1.0, 100.0, 25)])
        rt_rho = max(abs(fl.prime_inv(fl.prime(r)) - r) for r in rhos)
        vs = np.linspace(0.01, 0.99, 50) * fl.prime(0.0)
        rt_v = max(abs(fl.prime(fl.prime_inv(v)) - v) for v in vs)
        res = max(abs(mean_density(g, fugacity_of_density(g, r)) - r) for r in rhos)
        agg.update(round_trip_density=rt_rho, round_trip_speed=rt_v, inversion_residual=res)
        checks += [_check("round_trip_density", rt_rho, 0.0, TOL["round_trip"], "le",
                          "|(F')^-1(F'(rho)) - rho|, rho in [0.01, 100]"),
                   _check("round_trip_speed", rt_v, 0.0, TOL["round_trip"], "le", "|F'((F')^-1(v)) - v|"),
                   _check("inversion_residual", res, 0.0, TOL["inversion"], "le", "|R(g~(rho)) - rho|")]
        return agg, checks


EXPERIMENTS = {
    "lln": LLN, "partial": Partial, "thm24": Thm24, "weighted": Weighted, "crossing": Crossing,
    "profile": Profile, "x1": X1, "dual": Dual, "discrepancy": Discrepancy, "attractive": Attractive,
    "p2p": P2P, "conservation": Conservation, "numerics": Numerics,
}


def run_replicas(fn, n: int, threads: int = 1, progress=None) -> list:
    """``[fn(0), ..., fn(n - 1)]``; worker threads change nothing but the wall time."""

    def safe(k):
        try:
            return fn(k)
        except ZRError as e:
            raise ReplicaFailed(k, e) from e

    if threads <= 1 or n <= 1:
        out = []
        for k in range(n):
            out.append(safe(k))
            if progress:
                progress(k + 1, n)
        return out
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(safe, range(n)))


def run_experiment(config: ExperimentConfig, progress=None) -> Report:
    cfg = config.resolved()
    validate(cfg)
    exp = EXPERIMENTS[cfg.experiment](cfg)
    results = run_replicas(exp.replica, cfg.replicas, cfg.threads, progress)
    rows = [r for r in results if r is not None]
    discarded = [k for k, r in enumerate(results) if r is None]
    if rows or cfg.experiment == "numerics":
        agg, checks = exp.aggregate(rows)
    else:
        agg, checks = {}, []
    meta = {"experiment": cfg.experiment, "config": cfg.echo(), "prng": prng_id(), "version": __version__,
            "replicas": cfg.replicas, "discarded_replicas": len(discarded), "discarded": discarded,
            "targets": "computed by zrsim.hydro at run time"}
    return Report(_py(meta), list(exp.columns), _py(rows), _py(agg), _py(checks))
