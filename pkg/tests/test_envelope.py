import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tandembound.envelope import (
    EnvelopeSpec,
    IncrementModel,
    RateFunction,
    Role,
    TraceSample,
    effective_bandwidth,
    effective_capacity,
    empirical_effective_bandwidth,
    empirical_effective_bandwidth_stderr,
    envelope_violation_rate,
    min_plus_convolve,
)

THETA = 0.3566749
THETA_STAR = -math.log(0.7)

# mpmath, 50 digits: 0.7 (e^t - 1)/t and (1 - e^-t)/t at t = 0.3566749
ALPHA_POISSON_07 = 0.84110195604251537566
BETA_POISSON_1 = 0.84110199299946999087

MODELS = [
    IncrementModel.poisson(0.7),
    IncrementModel.poisson(12.0),
    IncrementModel.deterministic(2.5),
    IncrementModel.bernoulli(0.3, 4.0),
    IncrementModel.bernoulli(0.95, 0.5),
]


def test_poisson_bandwidth_example():
    assert effective_bandwidth(IncrementModel.poisson(0.7), THETA) == pytest.approx(ALPHA_POISSON_07, rel=1e-14)


def test_poisson_capacity_example():
    service = IncrementModel.poisson(1.0, Role.SERVICE)
    assert effective_capacity(service, THETA) == pytest.approx(BETA_POISSON_1, rel=1e-14)


def test_bandwidth_equals_capacity_at_theta_star():
    a = effective_bandwidth(IncrementModel.poisson(0.7), THETA_STAR)
    b = effective_capacity(IncrementModel.poisson(1.0), THETA_STAR)
    assert a == pytest.approx(b, rel=1e-14)


@pytest.mark.parametrize("theta", [1e-6, 0.3, 7.0, 45.0])
def test_deterministic_is_constant(theta):
    m = IncrementModel.deterministic(2.5)
    assert effective_bandwidth(m, theta) == 2.5
    assert effective_capacity(IncrementModel.deterministic(1.0), theta) == 1.0


def test_bernoulli_against_definition():
    m = IncrementModel.bernoulli(0.3, 4.0)
    theta = 0.8
    mgf = 0.7 + 0.3 * math.exp(theta * 4.0)
    assert effective_bandwidth(m, theta) == pytest.approx(math.log(mgf) / theta, rel=1e-14)
    mgf_neg = 0.7 + 0.3 * math.exp(-theta * 4.0)
    assert effective_capacity(m, theta) == pytest.approx(-math.log(mgf_neg) / theta, rel=1e-14)


def test_bernoulli_large_theta_does_not_overflow():
    m = IncrementModel.bernoulli(0.3, 4.0)
    assert effective_bandwidth(m, 500.0) == pytest.approx(4.0 + math.log(0.3) / 500.0, rel=1e-12)


@pytest.mark.parametrize("model", MODELS)
def test_mean_rate_limit(model):
    alpha = RateFunction.bandwidth_of(model)
    beta = RateFunction.capacity_of(model)
    assert alpha(0) == model.mean and beta(0) == model.mean
    assert alpha(1e-7) == pytest.approx(model.mean, rel=1e-5, abs=1e-12)
    assert beta(1e-7) == pytest.approx(model.mean, rel=1e-5, abs=1e-12)


@pytest.mark.parametrize("model", MODELS)
def test_monotone_and_ordered_on_grid(model):
    grid = np.geomspace(1e-4, 40.0, 200)
    a = np.array([effective_bandwidth(model, t) for t in grid])
    b = np.array([effective_capacity(model, t) for t in grid])
    slack = 1e-12 * max(1.0, model.mean)
    assert np.all(np.diff(a) >= -slack)
    assert np.all(np.diff(b) <= slack)
    assert np.all(a >= model.mean - slack)
    assert np.all(b <= model.mean + slack)


@pytest.mark.parametrize("fn", [effective_bandwidth, effective_capacity])
@pytest.mark.parametrize("theta", [0.0, -1.0, math.nan])
def test_non_positive_theta_rejected(fn, theta):
    with pytest.raises(ValueError):
        fn(IncrementModel.poisson(1.0), theta)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="poisson"),
        dict(kind="poisson", rate=-1.0),
        dict(kind="bernoulli", prob=1.5, size=1.0),
        dict(kind="bernoulli", prob=0.5, size=0.0),
        dict(kind="bernoulli", prob=0.5),
        dict(kind="deterministic", rate=1.0, size=2.0),
    ],
)
def test_invalid_models(kwargs):
    with pytest.raises(ValueError):
        IncrementModel(**kwargs)


def test_empirical_constant_trace():
    assert empirical_effective_bandwidth([1.7] * 50, 3.0) == pytest.approx(1.7, rel=1e-14)
    assert empirical_effective_bandwidth(TraceSample(np.zeros(3)), 1.0) == 0.0


def test_empirical_empty_trace_rejected():
    with pytest.raises(ValueError):
        empirical_effective_bandwidth([], 1.0)


def test_empirical_large_theta_no_overflow():
    assert empirical_effective_bandwidth([0.0, 1000.0], 5.0) == pytest.approx(1000.0 - math.log(2) / 5.0)


def test_empirical_converges_to_closed_form():
    rng = np.random.default_rng(11)
    trace = rng.poisson(0.7, 1_000_000).astype(float)
    est = empirical_effective_bandwidth(trace, THETA)
    se = empirical_effective_bandwidth_stderr(trace, THETA)
    assert abs(est - ALPHA_POISSON_07) < 3 * se


def test_trace_rejects_negative():
    with pytest.raises(ValueError):
        TraceSample(np.array([1.0, -0.5]))


def brute_min_plus(f, g):
    n = len(f)
    return np.array([min(f[u] + g[t - u] for u in range(t + 1)) for t in range(n)])


def test_min_plus_linear():
    t = np.arange(11.0)
    assert np.array_equal(min_plus_convolve(2 * t, 3 * t), 2 * t)


def test_min_plus_zero():
    assert np.array_equal(min_plus_convolve(np.zeros(5), np.zeros(5)), np.zeros(5))


def test_min_plus_square_and_linear():
    t = np.arange(9.0)
    f, g = t**2, 4 * t
    expected = brute_min_plus(f, g)
    assert np.array_equal(min_plus_convolve(f, g), expected)
    # frozen from the brute-force loop
    assert expected.tolist() == [0, 1, 4, 8, 12, 16, 20, 24, 28]


@given(
    st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=15),
    st.lists(st.floats(0, 50, allow_nan=False), min_size=1, max_size=15),
)
def test_min_plus_matches_brute_force(fa, ga):
    n = min(len(fa), len(ga))
    f = np.concatenate([[0.0], np.cumsum(fa[:n])])
    g = np.concatenate([[0.0], np.cumsum(ga[:n])])
    assert np.allclose(min_plus_convolve(f, g), brute_min_plus(f, g))


@given(st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_min_plus_linear_chain(a, b, c):
    t = np.arange(30.0)
    h = min_plus_convolve(min_plus_convolve(a * t, b * t), c * t)
    assert np.allclose(h, min(a, b, c) * t, rtol=1e-12, atol=1e-12)


def test_min_plus_errors():
    with pytest.raises(ValueError):
        min_plus_convolve(np.zeros(3), np.zeros(4))
    with pytest.raises(ValueError):
        min_plus_convolve(np.array([1.0, 2.0]), np.zeros(2))


def test_envelope_spec_shape():
    spec = EnvelopeSpec.arrival(IncrementModel.poisson(0.7), THETA_STAR)
    assert spec.envelope(10) == pytest.approx(10 * spec.rate)
    sig = np.linspace(0, 20, 50)
    assert np.all(np.diff(spec.error_fn(sig)) <= 0)
    assert spec.error_fn(0.0) == 1.0


def test_violation_rate_vanishes_for_huge_sigma():
    rng = np.random.default_rng(0)
    traces = rng.poisson(0.7, (2000, 20)).astype(float)
    spec = EnvelopeSpec.arrival(IncrementModel.poisson(0.7), THETA_STAR)
    assert envelope_violation_rate(traces, spec, 1e9, 20)[0] == 0.0


def test_violation_rate_on_envelope_is_zero():
    traces = [TraceSample(np.full(10, 0.5)) for _ in range(5)]
    spec = EnvelopeSpec(0.5, 1.0)
    assert envelope_violation_rate(traces, spec, 0.0, 10) == (0.0, 0.0)


def test_violation_rate_t_too_large():
    with pytest.raises(ValueError):
        envelope_violation_rate([TraceSample(np.ones(5))], EnvelopeSpec(1.0, 1.0), 0.0, 6)


def test_violation_rate_respects_exponential_error():
    rng = np.random.default_rng(3)
    traces = rng.poisson(0.7, (100_000, 50)).astype(float)
    spec = EnvelopeSpec.arrival(IncrementModel.poisson(0.7), THETA_STAR)
    p, half = envelope_violation_rate(traces, spec, 10.0, 50)
    se = half / 1.96
    assert p <= math.exp(-THETA_STAR * 10.0) + 3 * se
