"""Synthetic generators with known ground truth.

Used as oracles in the test-suite and for calibration runs from the CLI.
"""

from __future__ import annotations

import numpy as np

from ._validation import check_scalar


def fgn_autocovariance(k, hurst):
    """Autocovariance of unit-variance fractional Gaussian noise at lag ``k``."""
    k = np.abs(np.asarray(k, dtype=np.float64))
    h2 = 2.0 * hurst
    return 0.5 * ((k + 1.0) ** h2 - 2.0 * k ** h2 + np.abs(k - 1.0) ** h2)


def fgn(n, hurst, rng=None):
    """Exact fractional Gaussian noise by circulant-embedding spectral synthesis.

    The covariance sequence is embedded in a circulant of size ``2n``; its
    eigenvalues (an FFT) colour complex white noise, and a second FFT returns
    a stationary Gaussian sequence with exactly the fGn covariance.
    """
    check_scalar(n, "n", low=1, integer=True)
    check_scalar(hurst, "hurst", low=0.0, high=1.0, low_open=True, high_open=True)
    rng = np.random.default_rng(rng)
    m = 2 * n
    gamma = fgn_autocovariance(np.arange(n + 1), hurst)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    # eigenvalues are non-negative for fGn; clip rounding
    lam = np.clip(lam, 0.0, None)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    w = np.fft.fft(np.sqrt(lam / m) * z)
    return w.real[:n]


def fbm(n, hurst, rng=None):
    """Fractional Brownian motion path of ``n`` points starting at 0."""
    return np.concatenate([[0.0], np.cumsum(fgn(n - 1, hurst, rng))])


def zipf_probabilities(n_words, zeta=1.0):
    """Normalised rank probabilities ``p_r ~ r**-zeta`` for ``r = 1..n_words``."""
    r = np.arange(1, n_words + 1, dtype=np.float64)
    p = r ** -zeta
    return p / p.sum()


def zipf_sample(n_draws, n_words=1000, zeta=1.0, rng=None):
    """Draw word ids (0-based ranks) from a finite Zipf law."""
    rng = np.random.default_rng(rng)
    return rng.choice(n_words, size=n_draws, p=zipf_probabilities(n_words, zeta))


def pareto_sample(n, tail_exponent, x_min=1.0, rng=None):
    """Inverse-CDF sample with ``P[X > x] = (x / x_min) ** -tail_exponent``."""
    rng = np.random.default_rng(rng)
    u = 1.0 - rng.random(n)
    return x_min * u ** (-1.0 / tail_exponent)
