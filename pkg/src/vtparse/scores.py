"""Score functions for the REINFORCE weights.

Every statistic is a population statistic over the samples of one
sentence.  Optional ``weights`` turn the sample average into an exact
expectation over an enumerated support.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError

VARIANTS = ("raw", "rl-bl", "rl-sn", "rl-pc", "rl-c")


def _weights(x: np.ndarray, weights) -> np.ndarray:
    if weights is None:
        return np.full(x.shape[0], 1.0 / x.shape[0])
    w = np.asarray(weights, dtype=np.float64)
    return w / w.sum()


def mean_std(x, weights=None) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.size and np.all(x == x[0]):
        # exact answer; the weighted sum could leave a rounding-level spread
        return float(x[0]), 0.0
    w = _weights(x, weights)
    mu = float(w @ x)
    var = float(w @ (x - mu) ** 2)
    return mu, float(np.sqrt(var))


def _need_two(x) -> None:
    if len(x) < 2:
        raise ConfigurationError("score normalisation needs at least two samples")


def raw_score(log_p, log_q):
    return np.asarray(log_p, dtype=np.float64) - np.asarray(log_q, dtype=np.float64)


def standardize(s, weights=None) -> np.ndarray:
    """``(s - mean) / std``, all zeros when the variance vanishes."""
    s = np.asarray(s, dtype=np.float64)
    mu, sd = mean_std(s, weights)
    if sd == 0.0:
        return np.zeros_like(s)
    return (s - mu) / sd


def score_rl_sn(l, weights=None) -> np.ndarray:
    l = np.asarray(l, dtype=np.float64)
    _need_two(l)
    mu, sd = mean_std(l, weights)
    return (l - mu) / max(1.0, sd)


def score_rl_pc(l_sn, s, weights=None) -> np.ndarray:
    """Magnitude from the normalised score, sign from the standardised rule count."""
    l_sn = np.asarray(l_sn, dtype=np.float64)
    _need_two(l_sn)
    s_hat = standardize(s, weights)
    return np.where(s_hat >= 0, np.abs(l_sn), -np.abs(l_sn))


def score_rl_c(s, weights=None) -> np.ndarray:
    _need_two(s)
    return standardize(s, weights)


def score_rl_bl(l, baseline) -> np.ndarray:
    """``l - (alpha * log p_LM(x) + tau)``; ``baseline`` is that bracket."""
    return np.asarray(l, dtype=np.float64) - baseline
