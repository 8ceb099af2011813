"""Monte-Carlo checks of the demisubmartingale property and maximal inequalities.

For a single node (arrival ``A``, service ``S``) the exponential processes

    X(t)  = exp( theta  (A(t) - alpha(theta) t))
    Y(t)  = exp(-theta  (S(t) - beta(theta) t))
    Z(t)  = exp(-theta* (S(t) - A(t)))
    Y*(t) = max_{0 <= u <= t} Y(u)

should be demisubmartingales: ``E[(S_{j+1} - S_j) f(S_1..S_j)] >= 0`` for every
non-negative, coordinatewise non-decreasing ``f``. We estimate that
expectation for a fixed family of test functions and a few lags, and the
exceedance probabilities of the associated maximal inequalities.

A test passes when its estimate is no more than three standard errors on the
wrong side. Processes are simulated in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bounds import TandemScenario, theta_star
from .simulate import STAT_SIGMAS, replication_rng, sample_increments

PROCESSES = ("X", "Y", "Z", "Ystar")
TEST_CAPS = (0.5, 1.0, 2.0, 5.0)
DEFAULT_CHUNK = 20_000


def default_lags(horizon: int) -> list[int]:
    """Lags ``1, T/4, T/2, T-1``; few lags keep the family-wise false-alarm rate low."""
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    return sorted({1, max(1, horizon // 4), max(1, horizon // 2), horizon - 1})


def family_names() -> list[str]:
    names = ["1"]
    for c in TEST_CAPS:
        names += [f"min(s_j,{c:g})", f"min(max_s,{c:g})"]
    return names


def _test_functions(seq: np.ndarray, j: int) -> list[np.ndarray]:
    """Family evaluated on ``S_1..S_j`` (columns ``0..j-1`` of ``seq``)."""
    last = seq[:, j - 1]
    running = seq[:, :j].max(axis=1)
    out = [np.ones(seq.shape[0])]
    for c in TEST_CAPS:
        out += [np.minimum(last, c), np.minimum(running, c)]
    return out


def _check_theta(scenario: TandemScenario, theta: float) -> float:
    ts = scenario.theta_star().value
    if not theta > 0 or theta > ts * (1.0 + 1e-12):
        raise ValueError(f"theta must lie in (0, theta*={ts}], got {theta}")
    return ts


def _node_theta_star(scenario: TandemScenario, node: int) -> float:
    """theta* of the single node; ``inf`` when the bisection saturates.

    Saturation means alpha < beta for every theta tried, i.e. the supremum
    is unbounded; Z is then evaluated in the ``theta* -> inf`` limit.
    """
    ts = theta_star(scenario.alpha, [scenario.betas[node]], theta_hi=scenario.theta_hi)
    return math.inf if ts.saturated else ts.value


def _scale(theta: float, values: np.ndarray) -> np.ndarray:
    if math.isinf(theta):
        return np.where(values > 0, math.inf, np.where(values < 0, -math.inf, 0.0))
    return theta * values


def log_process(
    process: str,
    scenario: TandemScenario,
    theta: float,
    cum_arrivals: np.ndarray,
    cum_service: np.ndarray,
    node: int = 0,
) -> np.ndarray:
    """log of the named process at ``t = 1..T`` from cumulative curves of shape (R, T)."""
    t = np.arange(1, cum_arrivals.shape[1] + 1)
    if process == "X":
        return theta * (cum_arrivals - scenario.alpha(theta) * t)
    if process == "Y":
        return -theta * (cum_service - scenario.betas[node](theta) * t)
    if process == "Z":
        log_z = -_scale(_node_theta_star(scenario, node), cum_service - cum_arrivals)
        if np.any(log_z == math.inf):
            raise ValueError("Z is unbounded: service fell behind arrivals with theta* infinite")
        return log_z
    if process == "Ystar":
        log_y = log_process("Y", scenario, theta, cum_arrivals, cum_service, node)
        return np.maximum(np.maximum.accumulate(log_y, axis=1), 0.0)  # Y(0) = 1
    raise ValueError(f"unknown process {process!r}; choose from {PROCESSES}")


def _chunks(replications: int, chunk: int):
    start, idx = 0, 0
    while start < replications:
        size = min(chunk, replications - start)
        yield idx, size
        start += size
        idx += 1


def _draw(scenario: TandemScenario, node: int, horizon: int, size: int, seed: int, idx: int):
    rng = replication_rng(seed, idx)
    a = np.cumsum(sample_increments(scenario.arrival, rng, (size, horizon)), axis=1)
    s = np.cumsum(sample_increments(scenario.services[node], rng, (size, horizon)), axis=1)
    return a, s


@dataclass(frozen=True)
class DemiEstimate:
    function: str
    lag: int
    estimate: float
    stderr: float

    @property
    def passed(self) -> bool:
        return bool(self.estimate >= -STAT_SIGMAS * self.stderr)


@dataclass(frozen=True)
class DemiTestReport:
    process: str
    theta: float
    horizon: int
    replications: int
    estimates: tuple[DemiEstimate, ...]

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.estimates)

    def failures(self) -> list[DemiEstimate]:
        return [e for e in self.estimates if not e.passed]


class _Moments:
    """Running mean and sum of squared deviations, merged chunk by chunk."""

    def __init__(self) -> None:
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, values: np.ndarray) -> None:
        n_b = values.size
        mean_b = float(values.mean())
        m2_b = float(((values - mean_b) ** 2).sum())
        n = self.n + n_b
        delta = mean_b - self.mean
        self.mean += delta * n_b / n
        self.m2 += m2_b + delta * delta * self.n * n_b / n
        self.n = n

    @property
    def stderr(self) -> float:
        if self.n < 2:
            return math.inf
        return math.sqrt(self.m2 / (self.n - 1) / self.n)


def check_demisubmartingale(
    process: str,
    scenario: TandemScenario,
    theta: float,
    horizon: int = 50,
    replications: int = 100_000,
    seed: int = 0,
    lags: Sequence[int] | None = None,
    node: int = 0,
    chunk: int = DEFAULT_CHUNK,
) -> DemiTestReport:
    """Estimate ``E[(S_{j+1} - S_j) f(S_1..S_j)]`` over the test family and lags."""
    if process not in PROCESSES:
        raise ValueError(f"unknown process {process!r}; choose from {PROCESSES}")
    _check_theta(scenario, theta)
    lags = default_lags(horizon) if lags is None else sorted(set(lags))
    if any(j < 1 or j >= horizon for j in lags):
        raise ValueError(f"lags must lie in 1..{horizon - 1}")
    names = family_names()
    acc = {(name, j): _Moments() for j in lags for name in names}
    for idx, size in _chunks(replications, chunk):
        a, s = _draw(scenario, node, horizon, size, seed, idx)
        seq = np.exp(log_process(process, scenario, theta, a, s, node))
        for j in lags:
            inc = seq[:, j] - seq[:, j - 1]
            for name, fv in zip(names, _test_functions(seq, j)):
                acc[(name, j)].add(inc * fv)
    estimates = tuple(
        DemiEstimate(name, j, acc[(name, j)].mean, acc[(name, j)].stderr) for j in lags for name in names
    )
    return DemiTestReport(process, theta, horizon, replications, estimates)


@dataclass(frozen=True)
class DoobRow:
    sigma: float
    estimate: float
    stderr: float
    rhs: float

    @property
    def passed(self) -> bool:
        return bool(self.estimate <= self.rhs + STAT_SIGMAS * self.stderr)


@dataclass(frozen=True)
class DoobReport:
    inequality: str
    theta: float
    horizon: int
    replications: int
    rows: tuple[DoobRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)


def _sup_statistic(inequality: str, log_seq: np.ndarray, ystar: str) -> np.ndarray:
    # prepend u = 0, where every process equals 1
    full = np.hstack([np.zeros((log_seq.shape[0], 1)), log_seq])
    if inequality == "Ystar" and ystar == "two-parameter":
        # sup over v <= u of Y(v, u) = Y(u) / Y(v): the largest draw-up of log Y
        return (full - np.minimum.accumulate(full, axis=1)).max(axis=1)
    return full.max(axis=1)


def check_doob(
    inequality: str,
    scenario: TandemScenario,
    theta: float,
    sigmas: Sequence[float] = (2.0, 5.0, 10.0),
    horizon: int = 50,
    replications: int = 100_000,
    seed: int = 0,
    node: int = 0,
    ystar: str = "two-parameter",
    chunk: int = DEFAULT_CHUNK,
) -> DoobReport:
    """Estimate ``P{sup_{u <= t} proc(u) > exp(theta sigma)}`` against its maximal-inequality bound.

    The bound is ``exp(-theta sigma)`` for X, Y and Z (Z always at theta*)
    and ``e exp(-theta sigma)`` for Y*. With ``ystar="two-parameter"`` the Y*
    statistic is ``sup_{v <= u <= t} Y(u) / Y(v)``; ``"running-max"`` uses
    ``sup_u Y*(u)`` instead.
    """
    if inequality not in PROCESSES:
        raise ValueError(f"unknown inequality {inequality!r}; choose from {PROCESSES}")
    if ystar not in ("two-parameter", "running-max"):
        raise ValueError(f"unknown Y* mode {ystar!r}")
    if any(s < 0 for s in sigmas):
        raise ValueError("sigma must be non-negative")
    _check_theta(scenario, theta)
    rate = _node_theta_star(scenario, node) if inequality == "Z" else theta
    factor = math.e if inequality == "Ystar" else 1.0
    levels = [0.0 if s == 0 else rate * s for s in sigmas]
    base = "Y" if inequality == "Ystar" else inequality
    hits = np.zeros(len(sigmas), dtype=np.int64)
    for idx, size in _chunks(replications, chunk):
        a, s = _draw(scenario, node, horizon, size, seed, idx)
        stat = _sup_statistic(inequality, log_process(base, scenario, theta, a, s, node), ystar)
        hits += np.array([np.count_nonzero(stat > lvl) for lvl in levels])
    rows = []
    for sigma, lvl, k in zip(sigmas, levels, hits):
        p = float(k) / replications
        rows.append(DoobRow(float(sigma), p, math.sqrt(p * (1 - p) / replications), factor * math.exp(-lvl)))
    return DoobReport(inequality, theta, horizon, replications, tuple(rows))
