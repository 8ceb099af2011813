"""Discrete-time Monte-Carlo simulation of a tandem of work-conserving nodes.

Each slot a node receives ``in_h(t)``, is offered ``s_h(t)`` units of service
and sends ``min(backlog + in_h(t), s_h(t))`` downstream. Over a whole run this
Lindley recursion is evaluated in closed form,

    B_h(t) = X_h(t) - min_{u <= t} X_h(u),   X_h = A_h - S_h  (cumulative),

which is the same recursion vectorised over time.

Randomness: every replication ``r`` owns a Philox (counter-based, 64-bit key)
stream keyed by ``seed ^ r``. Results therefore do not depend on how many
worker threads run the replications.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from .bounds import TandemScenario, backlog_bound, delay_bound
from .envelope import IncrementModel, Kind

POISSON_INVERSION_LIMIT = 10.0
STAT_SIGMAS = 3.0
Z95 = 1.959963984540054


def replication_rng(seed: int, replication: int) -> np.random.Generator:
    """Independent generator for one replication: Philox keyed by ``seed ^ replication``."""
    key = (int(seed) ^ int(replication)) & 0xFFFF_FFFF_FFFF_FFFF
    return np.random.Generator(np.random.Philox(key=key))


@lru_cache(maxsize=64)
def _poisson_cdf_table(mean: float) -> np.ndarray:
    # grows until the cdf rounds to 1.0, so every u in [0, 1) has a preimage
    probs = [math.exp(-mean)]
    cdf = [probs[0]]
    k = 0
    while cdf[-1] < 1.0:
        k += 1
        probs.append(probs[-1] * mean / k)
        nxt = cdf[-1] + probs[-1]
        if nxt == cdf[-1]:
            cdf[-1] = 1.0
            break
        cdf.append(min(nxt, 1.0))
    table = np.array(cdf)
    table.setflags(write=False)
    return table


def sample_increments(model: IncrementModel, rng: np.random.Generator, size: int | tuple[int, ...]) -> np.ndarray:
    """i.i.d. per-slot increments of ``model``.

    Poisson uses table inversion for means below 10 and numpy's transformed
    rejection (PTRS) sampler above.
    """
    if model.kind is Kind.DETERMINISTIC:
        return np.full(size, float(model.rate))
    if model.kind is Kind.BERNOULLI:
        return np.where(rng.random(size) < model.prob, float(model.size), 0.0)
    if model.rate == 0:
        return np.zeros(size)
    if model.rate < POISSON_INVERSION_LIMIT:
        table = _poisson_cdf_table(float(model.rate))
        return np.searchsorted(table, rng.random(size), side="right").astype(float)
    return rng.poisson(model.rate, size).astype(float)


def sample_increment(model: IncrementModel, rng: np.random.Generator) -> float:
    return float(sample_increments(model, rng, 1)[0])


@dataclass(frozen=True)
class SimConfig:
    scenario: TandemScenario
    horizon: int = 100_000
    replications: int = 100
    seed: int = 0
    warmup: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.warmup is None:
            object.__setattr__(self, "warmup", self.horizon // 10)
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if not 0 <= self.warmup < self.horizon:
            raise ValueError(f"need 0 <= warmup < horizon, got warmup={self.warmup}, horizon={self.horizon}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")


@dataclass
class TandemPath:
    """Cumulative curves of one replication, indexed by slot 0..T.

    ``cumulative[h]`` is the input to node ``h`` (``cumulative[0]`` is the
    external arrival ``A``); ``cumulative[H]`` is the network departure ``D``.
    """

    cumulative: list[np.ndarray]
    service: list[np.ndarray]

    @property
    def arrivals(self) -> np.ndarray:
        return self.cumulative[0]

    @property
    def departures(self) -> np.ndarray:
        return self.cumulative[-1]

    def node_backlog(self, h: int) -> np.ndarray:
        return self.cumulative[h] - self.cumulative[h + 1]

    @property
    def backlog(self) -> np.ndarray:
        return self.arrivals - self.departures

    @property
    def delay(self) -> np.ndarray:
        return virtual_delay(self.arrivals, self.departures)


def _cumulative(increments: np.ndarray) -> np.ndarray:
    out = np.empty(increments.size + 1)
    out[0] = 0.0
    np.cumsum(increments, out=out[1:])
    return out


def node_departures(cum_in: np.ndarray, cum_service: np.ndarray) -> np.ndarray:
    """Cumulative departures of a work-conserving node, ``D = A (x) S``."""
    x = cum_in - cum_service
    backlog = x - np.minimum.accumulate(x)
    return cum_in - backlog


def virtual_delay(cum_arrivals: np.ndarray, cum_departures: np.ndarray) -> np.ndarray:
    """``W(t) = min{d >= 0 : A(t - d) <= D(t)}`` for every slot ``t``."""
    t = np.arange(cum_arrivals.size)
    # A is non-decreasing, so {u : A(u) <= D(t)} is a prefix 0..k
    k = np.searchsorted(cum_arrivals, cum_departures, side="right") - 1
    return np.maximum(0, t - k)


def simulate_path(scenario: TandemScenario, horizon: int, rng: np.random.Generator) -> TandemPath:
    """One replication of the tandem over slots 1..horizon."""
    cum = [_cumulative(sample_increments(scenario.arrival, rng, horizon))]
    services = []
    for model in scenario.services:
        cum_s = _cumulative(sample_increments(model, rng, horizon))
        services.append(cum_s)
        cum.append(node_departures(cum[-1], cum_s))
    return TandemPath(cum, services)


@dataclass(frozen=True)
class CCDFPoint:
    threshold: float
    estimate: float
    half_width_95: float
    n_samples: int

    @property
    def stderr(self) -> float:
        return self.half_width_95 / Z95


@dataclass(frozen=True)
class EmpiricalCCDF:
    """Estimated ``P{X > threshold}`` on a grid, with binomial 95% half-widths."""

    points: tuple[CCDFPoint, ...]

    @classmethod
    def from_counts(cls, values: np.ndarray, counts: np.ndarray, thresholds: Iterable[float]) -> "EmpiricalCCDF":
        values = np.asarray(values, dtype=float)
        counts = np.asarray(counts, dtype=np.int64)
        n = int(counts.sum())
        thresholds = np.asarray(list(thresholds), dtype=float)
        # exceedances[i] = number of samples strictly above thresholds[i]
        order = np.argsort(values)
        values, counts = values[order], counts[order]
        tail = np.concatenate([np.cumsum(counts[::-1])[::-1], [0]])
        exceed = tail[np.searchsorted(values, thresholds, side="right")]
        est = exceed / n
        # isotonic cleanup: a CCDF cannot increase with the threshold
        if thresholds.size > 1 and np.all(np.diff(thresholds) >= 0):
            est = np.minimum.accumulate(est)
        half = Z95 * np.sqrt(est * (1.0 - est) / n)
        return cls(tuple(CCDFPoint(float(t), float(p), float(h), n) for t, p, h in zip(thresholds, est, half)))

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([p.threshold for p in self.points])

    @property
    def estimates(self) -> np.ndarray:
        return np.array([p.estimate for p in self.points])


@dataclass(frozen=True)
class ContainmentRow:
    threshold: float
    estimate: float
    stderr: float
    bound: float

    @property
    def passed(self) -> bool:
        if self.estimate == 0:
            return True
        return self.estimate <= self.bound + STAT_SIGMAS * self.stderr


def containment(ccdf: EmpiricalCCDF, bound: Callable[[float], float]) -> list[ContainmentRow]:
    """Compare an empirical CCDF with an analytic bound point by point."""
    return [ContainmentRow(p.threshold, p.estimate, p.stderr, bound(p.threshold)) for p in ccdf.points]


@dataclass
class SimResult:
    config: SimConfig
    delay_values: np.ndarray
    delay_counts: np.ndarray
    backlog_values: np.ndarray
    backlog_counts: np.ndarray
    delay: EmpiricalCCDF = field(init=False)
    backlog: EmpiricalCCDF = field(init=False)
    grid_points: int = 20

    def __post_init__(self) -> None:
        self.delay = self.ccdf("delay")
        self.backlog = self.ccdf("backlog")

    def default_grid(self, metric: str) -> np.ndarray:
        values = self.delay_values if metric == "delay" else self.backlog_values
        top = float(values.max()) if values.size else 0.0
        return np.unique(np.linspace(0.0, top, self.grid_points))

    def ccdf(self, metric: str, thresholds: Sequence[float] | None = None) -> EmpiricalCCDF:
        if metric == "delay":
            values, counts = self.delay_values, self.delay_counts
        elif metric == "backlog":
            values, counts = self.backlog_values, self.backlog_counts
        else:
            raise ValueError(f"unknown metric {metric!r}")
        grid = self.default_grid(metric) if thresholds is None else thresholds
        return EmpiricalCCDF.from_counts(values, counts, grid)

    def delay_containment(self) -> list[ContainmentRow]:
        sc = self.config.scenario
        return containment(self.delay, lambda d: delay_bound(sc, d).value)

    def backlog_containment(self) -> list[ContainmentRow]:
        sc = self.config.scenario
        return containment(self.backlog, lambda x: backlog_bound(sc, x).value)

    @property
    def contained(self) -> bool:
        return all(r.passed for r in self.delay_containment() + self.backlog_containment())


def _merge(parts: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    values = np.concatenate([v for v, _ in parts])
    counts = np.concatenate([c for _, c in parts])
    uniq, inverse = np.unique(values, return_inverse=True)
    return uniq, np.bincount(inverse, weights=counts).astype(np.int64)


def _one_replication(config: SimConfig, r: int) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    path = simulate_path(config.scenario, config.horizon, replication_rng(config.seed, r))
    keep = slice(config.warmup + 1, None)
    w = np.unique(path.delay[keep], return_counts=True)
    b = np.unique(path.backlog[keep], return_counts=True)
    return w, b


def simulate_tandem(config: SimConfig) -> SimResult:
    """Run all replications and pool the post-warmup delay and backlog samples.

    Per-replication histograms are merged in replication order, so the
    result is identical for any ``config.workers``.
    """
    reps = range(config.replications)
    if config.workers == 1:
        parts = [_one_replication(config, r) for r in reps]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(lambda r: _one_replication(config, r), reps))
    dv, dc = _merge([p[0] for p in parts])
    bv, bc = _merge([p[1] for p in parts])
    return SimResult(config, dv, dc, bv, bc)


def trace_rows(config: SimConfig, replication: int = 0) -> Iterable[list[float]]:
    """Per-slot raw trace of one replication: t, node backlogs, A(t), D(t)."""
    path = simulate_path(config.scenario, config.horizon, replication_rng(config.seed, replication))
    backlogs = [path.node_backlog(h) for h in range(config.scenario.hops)]
    for t in range(config.horizon + 1):
        yield [t, *(float(b[t]) for b in backlogs), float(path.arrivals[t]), float(path.departures[t])]
