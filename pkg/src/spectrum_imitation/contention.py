"""Backoff contention within a slot and the closed-form grab probability g(k)."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class ContentionConfig:
    lambda_max: int = 50

    def __post_init__(self):
        if int(self.lambda_max) != self.lambda_max or self.lambda_max < 1:
            raise ValueError(f"lambda_max must be a positive integer, got {self.lambda_max!r}")


def _lambda_max(cfg):
    return cfg.lambda_max if isinstance(cfg, ContentionConfig) else int(cfg)


@lru_cache(maxsize=None)
def _grab_probability_int(k, lambda_max):
    lam = np.arange(1, lambda_max + 1, dtype=float)
    base = (lambda_max - lam) / lambda_max
    return float(np.sum(base ** (k - 1)) / lambda_max)


def grab_probability(k, cfg=ContentionConfig()):
    """Probability that one given user out of ``k`` contenders wins an idle slot.

    ``k`` may be real (k >= 1); the mean-field dynamics evaluate g at
    fractional channel masses. ``cfg`` is a ContentionConfig or a bare
    lambda_max integer.
    """
    lambda_max = _lambda_max(cfg)
    if k < 1:
        raise ValueError(f"contender count must be >= 1, got {k}")
    if float(k).is_integer():
        return _grab_probability_int(int(k), lambda_max)
    lam = np.arange(1, lambda_max + 1, dtype=float)
    base = (lambda_max - lam) / lambda_max
    return float(np.sum(base ** (k - 1.0)) / lambda_max)


def grab_probability_array(k, lambda_max):
    """Vectorised g over an array of (real) contender counts.

    Counts below one are clamped to one, so fewer than one contender
    always wins.
    """
    k = np.maximum(np.asarray(k, dtype=float), 1.0)
    lam = np.arange(1, lambda_max + 1, dtype=float)
    base = (lambda_max - lam) / lambda_max
    powers = base[None, :] ** (k.reshape(-1, 1) - 1.0)
    return (powers.sum(axis=1) / lambda_max).reshape(k.shape)


def grab_table(lambda_max, k_max):
    """List of (k, g(k), k*g(k)) rows for k = 1..k_max."""
    rows = []
    for k in range(1, k_max + 1):
        gk = grab_probability(k, lambda_max)
        rows.append((k, gk, k * gk))
    return rows


def run_contention(contender_ids, cfg, rng, backoffs=None):
    """Resolve one slot of backoff contention.

    Every contender draws a backoff uniformly from 1..lambda_max; the unique
    minimum wins, a tied minimum is a collision and nobody wins. ``backoffs``
    forces the draws (same order as ``contender_ids``).
    """
    ids = list(contender_ids)
    if not ids:
        raise ValueError("contender set must be nonempty")
    lambda_max = _lambda_max(cfg)
    if backoffs is None:
        draws = rng.integers(1, lambda_max + 1, size=len(ids))
    else:
        draws = np.asarray(backoffs)
        if draws.shape != (len(ids),):
            raise ValueError("one forced backoff per contender required")
    lowest = draws.min()
    winners = np.flatnonzero(draws == lowest)
    if len(winners) != 1:
        return None
    return ids[int(winners[0])]


def resolve_slots(backoffs):
    """Vectorised contention for one channel over many slots.

    ``backoffs`` has shape (contenders, slots). Returns a boolean array of
    the same shape marking the winner of each slot (all False on collision).
    """
    backoffs = np.asarray(backoffs)
    if backoffs.shape[0] == 0:
        return np.zeros(backoffs.shape, dtype=bool)
    lowest = backoffs.min(axis=0)
    at_min = backoffs == lowest[None, :]
    unique = at_min.sum(axis=0) == 1
    return at_min & unique[None, :]
