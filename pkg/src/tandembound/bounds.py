"""End-to-end delay and backlog bounds for tandems of GI/GI/1 nodes.

Three families of results live here:

* the demisubmartingale bound ``eps(x)``: ``exp(-theta* x)`` for one node and
  ``Q(H + 1, theta* x - (H - 1))`` for ``H > 1`` nodes, together with its
  single-node variant ``(1 + y) exp(-y)``;
* the exact end-to-end delay tail of a tandem of M/M/1 queues, an Erlang tail;
* the moment-generating-function bound used as a baseline.

``theta*`` is the largest decay rate at which the arrival's effective
bandwidth stays below the smallest effective capacity on the path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .envelope import IncrementModel, Kind, RateFunction, Role
from .special import gamma_q

DEFAULT_THETA_HI = 50.0
THETA_LO = 1e-9
MGF_GRID_POINTS = 64
MGF_REL_TOL = 1e-10

_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class UnstableError(ValueError):
    """No positive theta satisfies alpha(theta) <= min_h beta_h(theta)."""


class Method(str, enum.Enum):
    DEMI = "demi"
    EQ16_H1 = "eq16-h1"
    EXACT_MM1 = "exact-mm1"
    MGF = "mgf"


class ThetaStar(NamedTuple):
    value: float
    saturated: bool


@dataclass(frozen=True)
class TandemScenario:
    """A flow crossing ``H`` nodes in series, all processes independent."""

    arrival: IncrementModel
    services: tuple[IncrementModel, ...]
    theta_hi: float = DEFAULT_THETA_HI

    def __post_init__(self) -> None:
        services = tuple(s.as_service() for s in self.services)
        if not services:
            raise ValueError("a tandem needs at least one node")
        object.__setattr__(self, "services", services)
        object.__setattr__(self, "arrival", self.arrival.as_arrival())
        slowest = min(s.mean for s in services)
        if not self.arrival.mean < slowest:
            raise UnstableError(
                f"mean arrival rate {self.arrival.mean} is not below the slowest "
                f"mean service rate {slowest}"
            )

    @classmethod
    def mm1(cls, mu: float, rho: float, hops: int) -> "TandemScenario":
        """Poisson(rho * mu) arrivals through ``hops`` Poisson(mu) servers."""
        if not 0 < rho < 1:
            raise ValueError(f"utilization must lie in (0, 1), got {rho}")
        if not mu > 0:
            raise ValueError(f"service rate must be positive, got {mu}")
        if hops < 1:
            raise ValueError("hops must be at least 1")
        service = IncrementModel.poisson(mu, Role.SERVICE)
        return cls(IncrementModel.poisson(rho * mu), (service,) * hops)

    @property
    def hops(self) -> int:
        return len(self.services)

    @property
    def alpha(self) -> RateFunction:
        return RateFunction.bandwidth_of(self.arrival)

    @property
    def betas(self) -> list[RateFunction]:
        return [RateFunction.capacity_of(s) for s in self.services]

    @property
    def homogeneous(self) -> bool:
        return all(s == self.services[0] for s in self.services)

    def mm1_parameters(self) -> tuple[float, float] | None:
        """``(mu, rho)`` when the scenario is an M/M/1 tandem, else ``None``."""
        if self.arrival.kind is not Kind.POISSON or not self.homogeneous:
            return None
        first = self.services[0]
        if first.kind is not Kind.POISSON or self.arrival.rate == 0:
            return None
        return first.rate, self.arrival.rate / first.rate

    def theta_star(self, tol: float = 0.0) -> ThetaStar:
        return theta_star(self.alpha, self.betas, theta_hi=self.theta_hi, tol=tol)

    def with_hops(self, hops: int) -> "TandemScenario":
        if hops < 1:
            raise ValueError("hops must be at least 1")
        return replace(self, services=(self.services[0],) * hops)


@dataclass(frozen=True)
class BoundReport:
    """One violation-probability value and how it was obtained.

    ``valid`` is False when the demisubmartingale bound is outside its domain
    ``theta* x >= H - 1`` (the value is then the trivial bound 1). ``clipped``
    records that a raw value above 1 was capped.
    """

    method: Method
    value: float
    theta_star: float
    argument: float
    hops: int
    valid: bool = True
    clipped: bool = False


def theta_star(
    alpha: RateFunction,
    betas: Sequence[RateFunction],
    theta_hi: float = DEFAULT_THETA_HI,
    tol: float = 0.0,
) -> ThetaStar:
    """Largest ``theta`` in ``(0, theta_hi]`` with ``alpha(theta) <= min_h beta_h(theta)``.

    Bisection on ``alpha - min beta``, which is non-decreasing for i.i.d.
    increments. With ``tol=0`` the bracket is shrunk until it cannot be
    split in floating point.
    """
    if not betas:
        raise ValueError("need at least one service rate function")
    if not theta_hi > THETA_LO:
        raise ValueError(f"theta_hi must exceed {THETA_LO}")
    if tol < 0:
        raise ValueError("tol must be non-negative")

    def gap(theta: float) -> float:
        return alpha(theta) - min(b(theta) for b in betas)

    if gap(THETA_LO) > 0:
        raise UnstableError("arrival effective bandwidth exceeds the effective capacity for every theta")
    if gap(theta_hi) <= 0:
        return ThetaStar(theta_hi, True)
    lo, hi = THETA_LO, theta_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if gap(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return ThetaStar(lo, False)


def _demi_value(y: float, hops: int) -> float:
    if hops == 1:
        return math.exp(-y)
    return gamma_q(hops + 1.0, y)


def error_function(x: float, theta_star: float, hops: int) -> BoundReport:
    """Demisubmartingale error function evaluated at backlog level ``x``."""
    if x < 0 or math.isnan(x):
        raise ValueError(f"x must be non-negative, got {x}")
    if not theta_star > 0:
        raise ValueError(f"theta* must be positive, got {theta_star}")
    if hops < 1:
        raise ValueError("hops must be at least 1")
    y = theta_star * x - (hops - 1)
    # x = (H-1)/theta* rounds to |y| of a few ulps; treat it as the boundary
    if abs(y) <= 8.0 * np.finfo(float).eps * (hops - 1):
        y = 0.0
    if y < 0:
        return BoundReport(Method.DEMI, 1.0, theta_star, x, hops, valid=False)
    raw = _demi_value(y, hops)
    return BoundReport(Method.DEMI, min(raw, 1.0), theta_star, x, hops, clipped=raw > 1.0)


def backlog_bound(scenario: TandemScenario, x: float) -> BoundReport:
    """Bound on ``P{B(t) > x}`` for the end-to-end backlog."""
    ts = scenario.theta_star()
    return error_function(x, ts.value, scenario.hops)


def delay_bound(scenario: TandemScenario, d: float) -> BoundReport:
    """Bound on ``P{W(t) > d}``: the error function at ``alpha(theta*) d``."""
    if d < 0 or math.isnan(d):
        raise ValueError(f"d must be non-negative, got {d}")
    ts = scenario.theta_star()
    x = scenario.alpha(ts.value) * d
    return replace(error_function(x, ts.value, scenario.hops), argument=d)


def eq16_variant_h1(scenario: TandemScenario, d: float) -> BoundReport:
    """Single-node bound ``(1 + y) exp(-y)``, ``y = theta* alpha(theta*) d``.

    This is what the multi-node argument gives when specialised to one node;
    it is valid but never tighter than :func:`delay_bound`.
    """
    if scenario.hops != 1:
        raise ValueError(f"defined for a single node, got H={scenario.hops}")
    if d < 0 or math.isnan(d):
        raise ValueError(f"d must be non-negative, got {d}")
    ts = scenario.theta_star()
    y = ts.value * scenario.alpha(ts.value) * d
    return BoundReport(Method.EQ16_H1, gamma_q(2.0, y) if y > 0 else 1.0, ts.value, d, 1)


def exact_mm1_tandem(mu: float, rho: float, hops: int, d: float) -> float:
    """Exact ``P{W > d}`` for a flow through ``hops`` M/M/1 queues in series.

    The end-to-end sojourn time is Erlang(hops, mu (1 - rho)).
    """
    if not 0 < rho < 1:
        raise ValueError(f"utilization must lie in (0, 1), got {rho}")
    if not mu > 0:
        raise ValueError(f"service rate must be positive, got {mu}")
    if hops < 1:
        raise ValueError("hops must be at least 1")
    if d < 0 or math.isnan(d):
        raise ValueError(f"d must be non-negative, got {d}")
    return gamma_q(float(hops), mu * (1.0 - rho) * d)


def exact_mm1_report(scenario: TandemScenario, d: float) -> BoundReport:
    params = scenario.mm1_parameters()
    if params is None:
        raise ValueError("exact tail needs Poisson arrivals and identical Poisson servers")
    mu, rho = params
    ts = scenario.theta_star()
    return BoundReport(Method.EXACT_MM1, exact_mm1_tandem(mu, rho, scenario.hops, d), ts.value, d, scenario.hops)


def _golden_section(fn: Callable[[float], float], a: float, b: float, rel_tol: float) -> tuple[float, float]:
    c = b - _INV_PHI * (b - a)
    e = a + _INV_PHI * (b - a)
    fc, fe = fn(c), fn(e)
    while abs(b - a) > rel_tol * max(abs(a), abs(b), 1.0):
        if fc < fe:
            b, e, fe = e, c, fc
            c = b - _INV_PHI * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, e, fe
            e = a + _INV_PHI * (b - a)
            fe = fn(e)
    return (c, fc) if fc < fe else (e, fe)


def mgf_log_objective(scenario: TandemScenario, theta: float, d: float) -> float:
    """log of ``(1 - exp(-theta (beta - alpha)))^-H exp(-theta alpha d)``."""
    a = scenario.alpha(theta)
    b = min(beta(theta) for beta in scenario.betas)
    margin = theta * (b - a)
    if margin <= 0:
        return math.inf
    return -scenario.hops * math.log(-math.expm1(-margin)) - theta * a * d


def mgf_tandem_bound(scenario: TandemScenario, d: float) -> BoundReport:
    """Moment-generating-function delay bound, minimised over ``theta in (0, theta*)``.

    A 64-point log-spaced scan locates the basin, then golden-section search
    in ``log theta`` refines it.
    """
    if not scenario.homogeneous:
        raise ValueError("the MGF tandem bound is defined for identical servers")
    if d < 0 or math.isnan(d):
        raise ValueError(f"d must be non-negative, got {d}")
    ts = scenario.theta_star()
    upper = math.log(ts.value)
    grid = np.linspace(upper + math.log(1e-8), upper, MGF_GRID_POINTS + 2)
    vals = [mgf_log_objective(scenario, math.exp(u), d) for u in grid[1:-1]]
    k = int(np.argmin(vals)) + 1
    u_best, f_best = _golden_section(
        lambda u: mgf_log_objective(scenario, math.exp(u), d), grid[k - 1], grid[k + 1], MGF_REL_TOL
    )
    if vals[k - 1] < f_best:
        u_best, f_best = grid[k], vals[k - 1]
    clipped = f_best > 0.0
    value = 1.0 if clipped else math.exp(f_best)
    return BoundReport(Method.MGF, value, ts.value, d, scenario.hops, clipped=clipped)


@dataclass(frozen=True)
class TailBoundFn:
    """Non-increasing ``sigma -> bound on P{X > sigma}``."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "tail"

    def __call__(self, sigma: float | np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(sigma, dtype=float)), dtype=float)

    @classmethod
    def exponential(cls, theta: float, scale: float = 1.0) -> "TailBoundFn":
        return cls(lambda s: scale * np.exp(-theta * s), name=f"{scale}*exp(-{theta}s)")

    @classmethod
    def constant(cls, c: float) -> "TailBoundFn":
        return cls(lambda s: np.full_like(s, c, dtype=float), name=f"const {c}")


def convolve_tail_bounds(
    f: TailBoundFn,
    g: TailBoundFn,
    sigma: float,
    grid_points: int = 10_000,
    rule: str = "midpoint",
) -> float:
    """Tail bound on ``F + G`` for independent non-negative ``F`` and ``G``.

    Evaluates ``1 - int_0^sigma ftilde(sigma - u) dgtilde(u)`` where
    ``ftilde = 1 - min(1, f)``; the Stieltjes integral includes the atom of
    ``gtilde`` at 0. ``rule="conservative"`` uses the smallest value of
    ``ftilde`` on each cell, so the result can only overshoot the integral's
    complement.
    """
    if sigma < 0 or math.isnan(sigma):
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    if rule not in ("midpoint", "conservative"):
        raise ValueError(f"unknown rule {rule!r}")
    u = np.linspace(0.0, sigma, grid_points)
    fv, gv = f(u), g(u)
    for name, vals in (("f", fv), ("g", gv)):
        if np.any(vals < 0) or np.any(np.diff(vals) > 1e-12 * max(1.0, float(np.max(vals)))):
            raise ValueError(f"{name} must be non-negative and non-increasing")
    ftilde = lambda s: 1.0 - np.minimum(1.0, f(s))
    gtilde = 1.0 - np.minimum(1.0, gv)
    if rule == "midpoint":
        fvals = ftilde(sigma - 0.5 * (u[:-1] + u[1:]))
    else:
        fvals = ftilde(sigma - u[1:])
    integral = float(np.sum(fvals * np.diff(gtilde))) + float(ftilde(np.float64(sigma))) * gtilde[0]
    return min(1.0, max(0.0, 1.0 - integral))


SWEEP_VARIABLES = ("H", "rho", "d", "x")
SWEEP_METHODS = ("demi", "backlog", "eq16", "exact", "mgf")


@dataclass(frozen=True)
class SweepTemplate:
    """Base point of a sweep: a scenario plus delay ``d`` and backlog level ``x``."""

    scenario: TandemScenario
    d: float = 0.0
    x: float = 0.0


@dataclass(frozen=True)
class SweepRow:
    value: float
    method: str
    report: BoundReport | None = None
    error: str | None = None


def _instantiate(template: SweepTemplate, vary: str, value: float) -> SweepTemplate:
    if vary == "H":
        if value != int(value):
            raise ValueError(f"H must be an integer, got {value}")
        return replace(template, scenario=template.scenario.with_hops(int(value)))
    if vary == "rho":
        sc = template.scenario
        if sc.arrival.kind is Kind.BERNOULLI:
            raise ValueError("rho sweeps need a Poisson or deterministic arrival")
        rate = value * min(s.mean for s in sc.services)
        arrival = IncrementModel(sc.arrival.kind, rate=rate)
        return replace(template, scenario=replace(sc, arrival=arrival))
    if vary == "d":
        return replace(template, d=value)
    return replace(template, x=value)


def _evaluate(point: SweepTemplate, method: str) -> BoundReport:
    if method == "demi":
        return delay_bound(point.scenario, point.d)
    if method == "backlog":
        return backlog_bound(point.scenario, point.x)
    if method == "eq16":
        return eq16_variant_h1(point.scenario, point.d)
    if method == "exact":
        return exact_mm1_report(point.scenario, point.d)
    return mgf_tandem_bound(point.scenario, point.d)


def sweep(
    template: SweepTemplate,
    vary: str,
    values: Iterable[float],
    methods: Sequence[str],
) -> list[SweepRow]:
    """Evaluate ``methods`` at every value of one swept variable.

    Rows are ordered value-major, method-minor. A failing cell carries the
    error message instead of a report; the sweep itself never raises for a
    cell-level problem.
    """
    if vary not in SWEEP_VARIABLES:
        raise ValueError(f"vary must be one of {SWEEP_VARIABLES}, got {vary!r}")
    unknown = [m for m in methods if m not in SWEEP_METHODS]
    if unknown:
        raise ValueError(f"unknown methods {unknown}; choose from {SWEEP_METHODS}")
    rows: list[SweepRow] = []
    for value in values:
        try:
            point = _instantiate(template, vary, value)
        except ValueError as exc:
            rows.extend(SweepRow(value, m, error=str(exc)) for m in methods)
            continue
        for m in methods:
            try:
                rows.append(SweepRow(value, m, report=_evaluate(point, m)))
            except ValueError as exc:
                rows.append(SweepRow(value, m, error=str(exc)))
    return rows
