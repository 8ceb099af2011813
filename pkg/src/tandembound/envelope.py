"""Effective bandwidth, effective capacity and linear statistical envelopes.

Arrival and service processes are described by the distribution of a single
slot's increment (``A(1)`` or ``S(1)``); increments are i.i.d. across slots.
From that increment we derive the scaled log-MGF rate functions

    alpha(theta) =  (1/theta) log E[exp( theta A(1))]
    beta(theta)  = -(1/theta) log E[exp(-theta S(1))]

and the linear envelopes ``rate * t`` with exponential error ``exp(-theta sigma)``.

Supported increment kinds are Poisson, Deterministic and Bernoulli. Adding a
kind means adding its log-MGF to :func:`_log_mgf` and a sampler in
:mod:`tandembound.simulate`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class Kind(str, enum.Enum):
    POISSON = "poisson"
    DETERMINISTIC = "deterministic"
    BERNOULLI = "bernoulli"


class Role(str, enum.Enum):
    ARRIVAL = "arrival"
    SERVICE = "service"


@dataclass(frozen=True)
class IncrementModel:
    """Per-slot increment distribution of an arrival or a service process.

    ``rate`` is the mean for Poisson and the constant for Deterministic;
    Bernoulli increments equal ``size`` with probability ``prob`` and 0 otherwise.
    """

    kind: Kind
    rate: float | None = None
    prob: float | None = None
    size: float | None = None
    role: Role = Role.ARRIVAL

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "role", Role(self.role))
        if self.kind is Kind.BERNOULLI:
            if self.prob is None or self.size is None:
                raise ValueError("bernoulli increments need prob and size")
            if not 0.0 <= self.prob <= 1.0:
                raise ValueError(f"prob must lie in [0, 1], got {self.prob}")
            if not self.size > 0:
                raise ValueError(f"size must be positive, got {self.size}")
            if self.rate is not None:
                raise ValueError("bernoulli increments take prob and size, not rate")
        else:
            if self.rate is None:
                raise ValueError(f"{self.kind.value} increments need a rate")
            if self.prob is not None or self.size is not None:
                raise ValueError(f"{self.kind.value} increments take only a rate")
            # rate 0 is admitted so that idle sources can be simulated
            if not self.rate >= 0 or math.isinf(self.rate):
                raise ValueError(f"rate must be finite and non-negative, got {self.rate}")

    @classmethod
    def poisson(cls, rate: float, role: Role | str = Role.ARRIVAL) -> "IncrementModel":
        return cls(Kind.POISSON, rate=rate, role=role)

    @classmethod
    def deterministic(cls, rate: float, role: Role | str = Role.ARRIVAL) -> "IncrementModel":
        return cls(Kind.DETERMINISTIC, rate=rate, role=role)

    @classmethod
    def bernoulli(cls, prob: float, size: float, role: Role | str = Role.ARRIVAL) -> "IncrementModel":
        return cls(Kind.BERNOULLI, prob=prob, size=size, role=role)

    def as_service(self) -> "IncrementModel":
        return IncrementModel(self.kind, self.rate, self.prob, self.size, Role.SERVICE)

    def as_arrival(self) -> "IncrementModel":
        return IncrementModel(self.kind, self.rate, self.prob, self.size, Role.ARRIVAL)

    @property
    def mean(self) -> float:
        if self.kind is Kind.BERNOULLI:
            return self.prob * self.size
        return float(self.rate)

    @property
    def max_increment(self) -> float:
        """Essential supremum of one increment (``inf`` for Poisson)."""
        if self.kind is Kind.POISSON:
            return math.inf if self.rate > 0 else 0.0
        if self.kind is Kind.BERNOULLI:
            return self.size if self.prob > 0 else 0.0
        return float(self.rate)


def _check_theta(theta: float) -> None:
    if not theta > 0 or math.isnan(theta):
        raise ValueError(f"theta must be positive, got {theta}")


def _log_mgf(model: IncrementModel, s: float) -> float:
    """log E[exp(s X)] for one increment X; ``s`` may have either sign."""
    if model.kind is Kind.POISSON:
        return model.rate * math.expm1(s)
    if model.kind is Kind.DETERMINISTIC:
        return model.rate * s
    p, size = model.prob, model.size
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return s * size
    z = s * size
    if z < 30.0:
        return math.log1p(p * math.expm1(z))
    return float(np.logaddexp(math.log1p(-p), math.log(p) + z))


def effective_bandwidth(model: IncrementModel, theta: float) -> float:
    """Effective bandwidth ``(1/theta) log E[exp(theta A(1))]``.

    >>> round(effective_bandwidth(IncrementModel.poisson(0.7), 0.3566749), 6)
    0.841121
    """
    _check_theta(theta)
    if model.kind is Kind.DETERMINISTIC:
        return float(model.rate)
    return _log_mgf(model, theta) / theta


def effective_capacity(model: IncrementModel, theta: float) -> float:
    """Effective capacity ``-(1/theta) log E[exp(-theta S(1))]``."""
    _check_theta(theta)
    if model.kind is Kind.DETERMINISTIC:
        return float(model.rate)
    return -_log_mgf(model, -theta) / theta


@dataclass(frozen=True)
class RateFunction:
    """``theta -> rate`` view of a model, either its bandwidth or its capacity.

    Evaluating at ``theta == 0`` returns the analytic limit (the mean rate)
    instead of the 0/0 quotient.
    """

    model: IncrementModel
    capacity: bool = False
    domain_max: float = math.inf

    @classmethod
    def bandwidth_of(cls, model: IncrementModel) -> "RateFunction":
        return cls(model, capacity=False)

    @classmethod
    def capacity_of(cls, model: IncrementModel) -> "RateFunction":
        return cls(model, capacity=True)

    @property
    def mean_rate(self) -> float:
        return self.model.mean

    def __call__(self, theta: float) -> float:
        if theta == 0:
            return self.mean_rate
        if theta > self.domain_max:
            raise ValueError(f"theta={theta} beyond domain {self.domain_max}")
        if self.capacity:
            return effective_capacity(self.model, theta)
        return effective_bandwidth(self.model, theta)


@dataclass(frozen=True)
class TraceSample:
    """Observed per-slot increments of one process realisation."""

    increments: np.ndarray

    def __post_init__(self) -> None:
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 1:
            raise ValueError("a trace is one-dimensional")
        if np.any(inc < 0) or np.any(~np.isfinite(inc)):
            raise ValueError("increments must be finite and non-negative")
        object.__setattr__(self, "increments", inc)

    @property
    def slot_count(self) -> int:
        return int(self.increments.size)


def _trace_values(trace: TraceSample | Sequence[float] | np.ndarray) -> np.ndarray:
    if isinstance(trace, TraceSample):
        return trace.increments
    return TraceSample(np.asarray(trace, dtype=float)).increments


def empirical_effective_bandwidth(trace: TraceSample | Sequence[float] | np.ndarray, theta: float) -> float:
    """Plug-in estimate ``(1/theta) log mean(exp(theta x_i))`` over a trace.

    Evaluated with log-sum-exp so that large ``theta * x`` does not overflow.
    """
    _check_theta(theta)
    x = _trace_values(trace)
    if x.size == 0:
        raise ValueError("empty trace")
    z = theta * x
    zmax = z.max()
    log_mean = zmax + math.log(np.mean(np.exp(z - zmax)))
    return log_mean / theta


def empirical_effective_bandwidth_stderr(trace: TraceSample | Sequence[float] | np.ndarray, theta: float) -> float:
    """Delta-method standard error of :func:`empirical_effective_bandwidth`."""
    _check_theta(theta)
    x = _trace_values(trace)
    if x.size < 2:
        raise ValueError("need at least two increments for a standard error")
    z = theta * x
    w = np.exp(z - z.max())
    # relative standard error of the sample MGF, divided by theta
    return float(np.std(w, ddof=1) / (math.sqrt(x.size) * np.mean(w) * theta))


def min_plus_convolve(f: Sequence[float] | np.ndarray, g: Sequence[float] | np.ndarray) -> np.ndarray:
    """Min-plus convolution of two time-invariant functions sampled on slots 0..T.

    ``h(t) = min_{0 <= u <= t} f(u) + g(t - u)``.
    """
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.ndim != 1 or f.shape != g.shape:
        raise ValueError(f"functions must share one slot grid, got shapes {f.shape} and {g.shape}")
    if f.size == 0:
        raise ValueError("empty slot grid")
    if f[0] != 0 or g[0] != 0:
        raise ValueError("both functions must vanish at t = 0")
    n = f.size
    u = np.arange(n)
    lag = u[:, None] - u[None, :]  # t - u
    vals = np.where(lag >= 0, f[None, :] + g[np.clip(lag, 0, None)], np.inf)
    return vals.min(axis=1)


@dataclass(frozen=True)
class EnvelopeSpec:
    """Linear envelope ``rate * t`` with error function ``exp(-theta sigma)``."""

    rate: float
    theta: float

    def __post_init__(self) -> None:
        if self.rate < 0:
            raise ValueError("envelope rate must be non-negative")
        _check_theta(self.theta)

    @classmethod
    def arrival(cls, model: IncrementModel, theta: float) -> "EnvelopeSpec":
        return cls(effective_bandwidth(model, theta), theta)

    @classmethod
    def service(cls, model: IncrementModel, theta: float) -> "EnvelopeSpec":
        return cls(effective_capacity(model, theta), theta)

    def envelope(self, t: float | np.ndarray) -> float | np.ndarray:
        out = self.rate * np.asarray(t, dtype=float)
        return float(out) if out.ndim == 0 else out

    def error_fn(self, sigma: float | np.ndarray) -> float | np.ndarray:
        sigma = np.maximum(sigma, 0.0)
        out = np.exp(-self.theta * sigma)
        return float(out) if np.ndim(out) == 0 else out


def envelope_violation_rate(
    traces: Iterable[TraceSample] | np.ndarray,
    spec: EnvelopeSpec,
    sigma: float,
    t: int,
) -> tuple[float, float]:
    """Fraction of traces with ``A(t) > envelope(t) + sigma``.

    Returns ``(estimate, half_width_95)`` using the binomial normal approximation.
    """
    if isinstance(traces, np.ndarray):
        mat = np.asarray(traces, dtype=float)
        if mat.ndim != 2:
            raise ValueError("trace matrix must be two-dimensional (trace, slot)")
        lengths = np.full(mat.shape[0], mat.shape[1])
        partial = mat[:, :t].sum(axis=1) if t <= mat.shape[1] else None
    else:
        rows = [_trace_values(tr) for tr in traces]
        lengths = np.array([r.size for r in rows])
        partial = np.array([r[:t].sum() for r in rows]) if rows and lengths.min() >= t else None
    if t < 0:
        raise ValueError("t must be non-negative")
    if lengths.size == 0:
        raise ValueError("no traces")
    if partial is None or lengths.min() < t:
        raise ValueError(f"t={t} exceeds the shortest trace ({lengths.min()} slots)")
    n = partial.size
    p = float(np.mean(partial > spec.envelope(t) + sigma))
    return p, 1.96 * math.sqrt(p * (1.0 - p) / n)
