"""Maximum-likelihood estimates of grab probability, idle probability and mean rate.

Per-user observations of one decision period are summarised by an
``ObservationLog``. Idle probability and mean rate are averaged over the
periods a user has spent on a channel; the grab probability is a
one-period estimate because it depends on the current congestion.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid


@dataclass(frozen=True)
class ObservationLog:
    S: np.ndarray
    I: np.ndarray
    b: np.ndarray
    period: int = 0

    def __post_init__(self):
        S = np.asarray(self.S, dtype=int)
        I = np.asarray(self.I, dtype=int)
        b = np.asarray(self.b, dtype=float)
        if not (S.shape == I.shape == b.shape) or S.ndim != 1 or len(S) == 0:
            raise ValueError("S, I and b must be 1-d arrays of the same nonzero length")
        if np.any((S != 0) & (S != 1)) or np.any((I != 0) & (I != 1)):
            raise ValueError("S and I must be 0/1 indicators")
        if np.any(I > S):
            raise ValueError("a slot can only be grabbed when the channel is idle")
        if np.any(b < 0) or np.any((b > 0) & (I == 0)):
            raise ValueError("positive rate recorded in a slot that was not grabbed")
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "I", I)
        object.__setattr__(self, "b", b)

    @property
    def length(self):
        return len(self.S)


@dataclass(frozen=True)
class ChannelEstimate:
    channel: int
    theta_hat: float = 0.5
    rate_hat: float = 0.0
    periods_used: int = 0
    rate_periods: int = 0
    grab_hat: float = 1.0


def estimate_grab_prob(log):
    """Sample-average MLE sum(I)/sum(S); None when the channel was never idle."""
    idle = log.S.sum()
    if idle == 0:
        return None
    return log.I.sum() / idle


def estimate_idle_prob(log, prior):
    one_period = log.S.sum() / log.length
    c = prior.periods_used
    theta = one_period if c == 0 else prior.theta_hat + (one_period - prior.theta_hat) / (c + 1)
    return replace(prior, theta_hat=theta, periods_used=c + 1)


def estimate_mean_rate(log, prior):
    grabs = log.I.sum()
    if grabs == 0:
        return prior
    one_period = log.b.sum() / grabs
    c = prior.rate_periods
    rate = one_period if c == 0 else prior.rate_hat + (one_period - prior.rate_hat) / (c + 1)
    return replace(prior, rate_hat=rate, rate_periods=c + 1)


def update_estimate(log, prior):
    """Fold one period of observations into ``prior`` (all three estimates)."""
    est = estimate_mean_rate(log, estimate_idle_prob(log, prior))
    grab = estimate_grab_prob(log)
    if grab is not None:
        est = replace(est, grab_hat=grab)
    return est


def estimate_throughput(grab_hat, theta_hat, rate_hat):
    return grab_hat * theta_hat * rate_hat


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean estimation noise on (lower, upper).

    ``pdf`` of None means the uniform density. A custom density must be
    positive on the open support and have zero mean; it is sampled by
    inverting its CDF on a grid of ``grid`` points.
    """

    lower: float
    upper: float
    pdf: Optional[Callable] = None
    grid: int = 4001

    def __post_init__(self):
        if not self.lower < 0 < self.upper:
            raise ValueError("noise support must straddle zero")
        if self.pdf is not None:
            x, f = self.density_grid()
            if np.any(f[1:-1] <= 0):
                raise ValueError("noise density must be positive on its open support")
            mass = trapezoid(f, x)
            mean = trapezoid(x * f, x) / mass
            if abs(mean) > 1e-6 * (self.upper - self.lower):
                raise ValueError(f"noise density must have zero mean, got {mean:g}")

    @classmethod
    def uniform(cls, half_width):
        return cls(-half_width, half_width)

    @property
    def is_uniform(self):
        return self.pdf is None

    def density_grid(self, n=None):
        """Grid and normalised density values over the support."""
        x = np.linspace(self.lower, self.upper, n or self.grid)
        if self.pdf is None:
            f = np.full_like(x, 1.0 / (self.upper - self.lower))
        else:
            f = np.asarray(self.pdf(x), dtype=float)
            f = f / trapezoid(f, x)
        return x, f

    def sample(self, rng, size=None):
        if self.pdf is None:
            return rng.uniform(self.lower, self.upper, size)
        x, f = self.density_grid()
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(x))])
        cdf /= cdf[-1]
        return np.interp(rng.random(size), cdf, x)


def default_noise(theta_rate_products, fraction=0.05):
    """Uniform noise with half-width ``fraction`` * max(theta_m * B_m)."""
    return NoiseModel.uniform(fraction * float(np.max(theta_rate_products)))


def apply_noise(U, model, rng):
    return U + model.sample(rng, np.shape(U) or None)


class EstimateTable:
    """Running per-user, per-channel estimates for a whole population.

    Array-backed counterpart of repeatedly calling ``update_estimate`` on
    one ChannelEstimate per (user, channel); the engine uses it to update
    all users of a period at once.
    """

    def __init__(self, n_users, n_channels, reset_on_return=False):
        self.theta = np.full((n_users, n_channels), 0.5)
        self.theta_count = np.zeros((n_users, n_channels), dtype=int)
        self.rate = np.zeros((n_users, n_channels))
        self.rate_count = np.zeros((n_users, n_channels), dtype=int)
        self.grab = np.ones(n_users)
        self.reset_on_return = reset_on_return

    def reset(self, users, channels):
        self.theta[users, channels] = 0.5
        self.theta_count[users, channels] = 0
        self.rate[users, channels] = 0.0
        self.rate_count[users, channels] = 0

    def update(self, channels, sum_S, sum_I, sum_b, n_slots):
        """Fold one period of per-user sums into the table.

        ``channels[n]`` is the channel user n accessed this period.
        """
        users = np.arange(len(channels))
        theta_one = sum_S / n_slots
        c = self.theta_count[users, channels]
        self.theta[users, channels] = np.where(
            c == 0, theta_one, self.theta[users, channels] + (theta_one - self.theta[users, channels]) / (c + 1)
        )
        self.theta_count[users, channels] = c + 1

        won = sum_I > 0
        rate_one = np.divide(sum_b, sum_I, out=np.zeros_like(sum_b, dtype=float), where=won)
        rc = self.rate_count[users, channels]
        prev = self.rate[users, channels]
        new_rate = np.where(rc == 0, rate_one, prev + (rate_one - prev) / (rc + 1))
        self.rate[users, channels] = np.where(won, new_rate, prev)
        self.rate_count[users, channels] = rc + won

        idle = sum_S > 0
        self.grab = np.where(idle, np.divide(sum_I, sum_S, out=np.zeros_like(self.grab), where=idle), self.grab)

    def own_throughput(self, channels):
        users = np.arange(len(channels))
        return self.theta[users, channels] * self.rate[users, channels] * self.grab

    def estimate(self, user, channel):
        return ChannelEstimate(
            channel=int(channel),
            theta_hat=float(self.theta[user, channel]),
            rate_hat=float(self.rate[user, channel]),
            periods_used=int(self.theta_count[user, channel]),
            rate_periods=int(self.rate_count[user, channel]),
            grab_hat=float(self.grab[user]),
        )
