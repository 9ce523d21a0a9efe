"""Log-gamma, digamma, trigamma and a stable log-sum-exp.

All functions accept scalars or numpy arrays and return the same shape.
Digamma and trigamma use upward recurrence to ``x >= 6`` followed by the
asymptotic series; at that threshold the truncation error of the series
is below 2e-13.
"""

import numpy as np
from scipy.special import gammaln

from .errors import DomainError

LOG_ZERO = -np.inf

_RECURRENCE_FLOOR = 6.0

# Bernoulli-number coefficients B_2k / (2k) for the digamma series.
_PSI_COEFS = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)

# B_2k for the trigamma series: 1/x + 1/(2x^2) + sum B_2k / x^(2k+1).
_TRIGAMMA_COEFS = (
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
)


def _positive(x, name):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError(f"{name} requires x > 0")
    return arr


def _unwrap(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


def log_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    arr = _positive(x, "log_gamma")
    return _unwrap(gammaln(arr), x)


def _shift_up(arr):
    """Return ``(shifted, steps)`` with every entry of ``shifted`` >= 6."""
    work = np.array(arr, dtype=float, copy=True, ndmin=1)
    steps = []
    while True:
        low = work < _RECURRENCE_FLOOR
        if not low.any():
            break
        steps.append((low, work[low].copy()))
        work[low] += 1.0
    return work, steps


def digamma(x):
    """Derivative of ``log_gamma``."""
    arr = _positive(x, "digamma")
    work, steps = _shift_up(arr)
    acc = np.zeros_like(work)
    for mask, vals in steps:
        acc[mask] -= 1.0 / vals
    inv2 = 1.0 / (work * work)
    series = np.zeros_like(work)
    for c in reversed(_PSI_COEFS):
        series = (series + c) * inv2
    out = acc + np.log(work) - 0.5 / work - series
    return _unwrap(out.reshape(np.shape(arr)), x)


def trigamma(x):
    """Derivative of ``digamma``."""
    arr = _positive(x, "trigamma")
    work, steps = _shift_up(arr)
    acc = np.zeros_like(work)
    for mask, vals in steps:
        acc[mask] += 1.0 / (vals * vals)
    inv = 1.0 / work
    inv2 = inv * inv
    series = np.zeros_like(work)
    for c in reversed(_TRIGAMMA_COEFS):
        series = (series + c) * inv2
    out = acc + inv + 0.5 * inv2 + series * inv
    return _unwrap(out.reshape(np.shape(arr)), x)


def log_sum_exp(values, axis=None):
    """Compute ``log(sum(exp(values)))`` without overflow.

    A slice made only of ``LOG_ZERO`` entries yields ``LOG_ZERO``.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise DomainError("log_sum_exp of an empty sequence")
    top = np.max(arr, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(arr - safe), axis=axis, keepdims=True)) + safe
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)
