"""Regularized upper incomplete gamma function in log space.

Poisson tails and Erlang tails are both values of ``Q(a, x)``; in the
regimes of interest (``x`` of a few tens, ``a`` up to ~50) the plain
term-by-term Poisson sum underflows long before the answer does, so every
evaluation here is carried out on the logarithm.
"""

from __future__ import annotations

import math

_EPS = 1e-17
_TINY = 1e-300
_MAX_ITER = 10_000


def _log_prefactor(a: float, x: float) -> float:
    # log(x^a e^{-x} / Gamma(a))
    return a * math.log(x) - x - math.lgamma(a)


def _log_p_series(a: float, x: float) -> float:
    """log P(a, x) from the power series; converges fast for x < a + 1."""
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if term < total * _EPS:
            break
    else:  # pragma: no cover - unreachable for x < a + 1
        raise ArithmeticError(f"gamma series did not converge (a={a}, x={x})")
    return _log_prefactor(a, x) + math.log(total)


def _log_q_continued_fraction(a: float, x: float) -> float:
    """log Q(a, x) from the Legendre continued fraction (modified Lentz)."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:  # pragma: no cover
        raise ArithmeticError(f"gamma continued fraction did not converge (a={a}, x={x})")
    return _log_prefactor(a, x) + math.log(h)


def log_gamma_q(a: float, x: float) -> float:
    """Natural log of the regularized upper incomplete gamma ``Q(a, x)``.

    Uses the series for ``P`` when ``x <= a + 1`` and the continued fraction
    for ``Q`` otherwise, so that neither branch suffers cancellation.
    """
    if a <= 0:
        raise ValueError(f"shape must be positive, got {a}")
    if x < 0 or math.isnan(x):
        raise ValueError(f"argument must be non-negative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return -math.inf
    if x <= a + 1.0:
        log_p = _log_p_series(a, x)
        return math.log1p(-math.exp(log_p))
    return _log_q_continued_fraction(a, x)


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma ``Q(a, x) = Gamma(a, x) / Gamma(a)``."""
    return math.exp(log_gamma_q(a, x))


def log_poisson_cdf(k: int, mean: float) -> float:
    """log P{N <= k} for N ~ Poisson(mean), i.e. log Q(k + 1, mean)."""
    if k < 0:
        return -math.inf
    return log_gamma_q(k + 1.0, mean)
