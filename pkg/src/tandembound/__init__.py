"""Demisubmartingale delay and backlog bounds for tandem GI/GI/1 queues."""

from .bounds import (
    BoundReport,
    Method,
    SweepTemplate,
    TailBoundFn,
    TandemScenario,
    ThetaStar,
    UnstableError,
    backlog_bound,
    convolve_tail_bounds,
    delay_bound,
    eq16_variant_h1,
    error_function,
    exact_mm1_tandem,
    mgf_tandem_bound,
    sweep,
    theta_star,
)
from .envelope import (
    EnvelopeSpec,
    IncrementModel,
    RateFunction,
    TraceSample,
    effective_bandwidth,
    effective_capacity,
    empirical_effective_bandwidth,
    envelope_violation_rate,
    min_plus_convolve,
)
from .martingale import check_demisubmartingale, check_doob
from .simulate import EmpiricalCCDF, SimConfig, sample_increment, simulate_tandem

__version__ = "0.1.0"
