"""Special functions needed by the Dirichlet losses.

All functions accept scalars or numpy arrays (float64) and are valid for
strictly positive arguments. They are implemented from first principles
(Lanczos approximation for log-gamma, recurrence shift plus asymptotic
series for the polygammas) so that the recurrence identities can serve as
independent checks in the test suite.
"""

from __future__ import annotations

import numpy as np

__all__ = ["lgamma", "digamma", "trigamma", "softplus"]

_HALF_LOG_TWO_PI = 0.9189385332046727417803297364056

# Lanczos coefficients, g = 7, 9 terms.
_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array(
    [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ]
)

# Bernoulli-number coefficients of the asymptotic series for psi(x):
# psi(x) ~ ln x - 1/(2x) - sum_n B_{2n} / (2n x^{2n})
_PSI_SERIES = np.array(
    [
        1.0 / 12.0,
        -1.0 / 120.0,
        1.0 / 252.0,
        -1.0 / 240.0,
        1.0 / 132.0,
        -691.0 / 32760.0,
        1.0 / 12.0,
    ]
)

# psi'(x) ~ 1/x + 1/(2x^2) + sum_n B_{2n} / x^{2n+1}
_PSI1_SERIES = np.array(
    [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ]
)

_SHIFT_TO = 6.0


def _as_positive_array(x, name: str) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    scalar = arr.ndim == 0
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} requires finite input")
    if np.any(arr <= 0.0):
        raise ValueError(f"{name} requires strictly positive input")
    return np.atleast_1d(arr), scalar


def _maybe_scalar(out: np.ndarray, scalar: bool):
    return float(out[0]) if scalar else out


def lgamma(x):
    """Natural log of the gamma function for x > 0."""
    arr, scalar = _as_positive_array(x, "lgamma")
    z = arr - 1.0
    acc = np.full_like(z, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        acc = acc + _LANCZOS_COEF[i] / (z + i)
    t = z + _LANCZOS_G + 0.5
    out = _HALF_LOG_TWO_PI + (z + 0.5) * np.log(t) - t + np.log(acc)
    return _maybe_scalar(out, scalar)


def _shift_then_series(arr: np.ndarray, series_fn, shift_fn) -> np.ndarray:
    x = arr.copy()
    acc = np.zeros_like(x)
    while True:
        small = x < _SHIFT_TO
        if not np.any(small):
            break
        acc[small] += shift_fn(x[small])
        x[small] += 1.0
    return acc + series_fn(x)


def digamma(x):
    """psi(x) = d/dx ln Gamma(x) for x > 0."""
    arr, scalar = _as_positive_array(x, "digamma")

    def series(x):
        inv2 = 1.0 / (x * x)
        tail = np.zeros_like(x)
        p = inv2
        for c in _PSI_SERIES:
            tail += c * p
            p = p * inv2
        return np.log(x) - 0.5 / x - tail

    out = _shift_then_series(arr, series, lambda x: -1.0 / x)
    return _maybe_scalar(out, scalar)


def trigamma(x):
    """psi'(x), the derivative of digamma, for x > 0."""
    arr, scalar = _as_positive_array(x, "trigamma")

    def series(x):
        inv = 1.0 / x
        inv2 = inv * inv
        tail = np.zeros_like(x)
        p = inv2 * inv
        for c in _PSI1_SERIES:
            tail += c * p
            p = p * inv2
        return inv + 0.5 * inv2 + tail

    out = _shift_then_series(arr, series, lambda x: 1.0 / (x * x))
    return _maybe_scalar(out, scalar)


def softplus(x):
    """ln(1 + exp(x)), overflow-safe; strictly positive output."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValueError("softplus requires finite input")
    out = np.logaddexp(0.0, arr)
    return float(out) if out.ndim == 0 else out
