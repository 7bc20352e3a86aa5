"""Shared helpers for the test suite."""

from contextlib import nullcontext

import numpy as np
import pytest

from apln import opinions

_PYTEST_CONFIG = {}


def pytest_configure(config):
    _PYTEST_CONFIG["config"] = config


def capture_disabled():
    """Context in which writes reach the real stdout despite pytest capture."""
    config = _PYTEST_CONFIG.get("config")
    capman = config.pluginmanager.get_plugin("capturemanager") if config else None
    return capman.global_and_fixture_disabled() if capman else nullcontext()


def random_opinion(rng: np.random.Generator, k: int) -> opinions.Opinion:
    """Opinion drawn from a random Dirichlet evidence vector."""
    e = rng.gamma(shape=1.0, scale=3.0, size=k)
    return opinions.opinion_from_evidence(e)


def central_difference(f, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of a flat array."""
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2.0 * eps)
    return g


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12)
    return float(np.linalg.norm(analytic - numeric) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
