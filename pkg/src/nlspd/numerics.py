"""Log-domain Poisson weights and binomial coefficients.

Log-probabilities are plain floats <= 0, with ``-inf`` encoding an exactly
impossible outcome; ``-inf`` must propagate through sums with finite terms.
Binomial coefficients are computed exactly in integer arithmetic up to
``EXACT_BINOMIAL_LIMIT`` and through the log-gamma function beyond it.
"""

from __future__ import annotations

from math import comb, inf, log

import numpy as np
from scipy.special import gammaln

__all__ = [
    "EXACT_BINOMIAL_LIMIT",
    "LogProb",
    "binomial_exponent",
    "binomial_exponents",
    "log_binomial",
    "log_poisson_weight",
    "poisson_log_weights",
]

LogProb = float

# Largest m for which C(m, n) is built from exact integer arithmetic.
EXACT_BINOMIAL_LIMIT = 60


def log_poisson_weight(mean_photons: float, m: int) -> LogProb:
    """Natural log of the Poisson weight ``e^-mu mu^m / m!``."""
    if mean_photons < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mean_photons}")
    if m < 0:
        raise ValueError(f"photon number must be >= 0, got {m}")
    if mean_photons == 0:
        return 0.0 if m == 0 else -inf
    return m * log(mean_photons) - mean_photons - float(gammaln(m + 1))


def poisson_log_weights(mean_photons: float, truncation: int) -> np.ndarray:
    """Vector of ``log_poisson_weight(mean_photons, m)`` for m = 0..truncation-1."""
    if mean_photons < 0:
        raise ValueError(f"mean photon number must be >= 0, got {mean_photons}")
    if truncation < 1:
        raise ValueError(f"truncation must be >= 1, got {truncation}")
    m = np.arange(truncation)
    if mean_photons == 0:
        out = np.full(truncation, -inf)
        out[0] = 0.0
        return out
    return m * log(mean_photons) - mean_photons - gammaln(m + 1)


def log_binomial(m: int, n: int) -> float:
    """Natural log of C(m, n); requires 0 <= n <= m."""
    if not 0 <= n <= m:
        raise ValueError(f"log_binomial requires 0 <= n <= m, got m={m}, n={n}")
    if m <= EXACT_BINOMIAL_LIMIT:
        return log(comb(m, n))
    return float(gammaln(m + 1) - gammaln(n + 1) - gammaln(m - n + 1))


def binomial_exponent(m: int, n: int) -> float:
    """Binomial coefficient C(m, n) as a float, with C(m, n) = 0 for n > m.

    The n = 0 column is identically 1, so the zeroth mechanism order acts on
    every photon number including vacuum.
    """
    if m < 0 or n < 0:
        raise ValueError(f"binomial_exponent requires m, n >= 0, got m={m}, n={n}")
    if n > m:
        return 0.0
    if m <= EXACT_BINOMIAL_LIMIT:
        return float(comb(m, n))
    return float(np.exp(log_binomial(m, n)))


def binomial_exponents(m_values: np.ndarray, n: int) -> np.ndarray:
    """Vectorized ``binomial_exponent`` over an integer array of m values."""
    if n < 0:
        raise ValueError(f"binomial_exponents requires n >= 0, got n={n}")
    m_values = np.asarray(m_values, dtype=np.int64)
    if m_values.size and m_values.min() < 0:
        raise ValueError("binomial_exponents requires m >= 0")
    out = np.zeros(m_values.shape, dtype=float)
    small = (m_values >= n) & (m_values <= EXACT_BINOMIAL_LIMIT)
    if np.any(small):
        out[small] = [float(comb(int(m), n)) for m in m_values[small]]
    large = m_values > EXACT_BINOMIAL_LIMIT
    if np.any(large):
        ml = m_values[large].astype(float)
        out[large] = np.exp(gammaln(ml + 1) - gammaln(n + 1) - gammaln(ml - n + 1))
    return out
