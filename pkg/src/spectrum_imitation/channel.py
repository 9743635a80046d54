"""Primary-traffic channel availability and Rayleigh-fading slot rates.

Units: bandwidth in MHz, powers in mW, rates in Mbps.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, optimize, special


@dataclass(frozen=True)
class IIDIdle:
    theta: float

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"idle probability must lie in (0, 1), got {self.theta}")

    @property
    def stationary_idle(self):
        return self.theta


@dataclass(frozen=True)
class MarkovIdle:
    """Two-state chain; ``p`` is busy->idle, ``q`` is idle->busy."""

    p: float
    q: float

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0 and 0.0 < self.q <= 1.0):
            raise ValueError(f"Markov transition probabilities must lie in (0, 1], got p={self.p}, q={self.q}")
        if self.p == 1.0 and self.q == 1.0:
            raise ValueError("p = q = 1 gives a periodic chain")

    @classmethod
    def from_theta(cls, theta, mixing):
        """Chain with stationary idle probability ``theta``; ``mixing`` = p + q."""
        if not 0.0 < mixing <= 1.0:
            raise ValueError(f"mixing must lie in (0, 1], got {mixing}")
        return cls(p=mixing * theta, q=mixing * (1.0 - theta))

    @property
    def stationary_idle(self):
        return stationary_idle_prob(self)


@dataclass(frozen=True)
class ChannelSpec:
    id: int
    idle_model: object
    bandwidth: float = 10.0
    noise_power: float = 1e-10
    mean_gain: float = 1.0

    def __post_init__(self):
        if self.bandwidth <= 0 or self.noise_power <= 0 or self.mean_gain <= 0:
            raise ValueError("bandwidth, noise_power and mean_gain must be positive")
        if not isinstance(self.idle_model, (IIDIdle, MarkovIdle)):
            raise TypeError("idle_model must be IIDIdle or MarkovIdle")

    @property
    def theta(self):
        return self.idle_model.stationary_idle

    @property
    def is_markov(self):
        return isinstance(self.idle_model, MarkovIdle)


@dataclass(frozen=True)
class UserRadioSpec:
    id: int
    tx_power: float
    mean_gain_per_channel: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if any(g <= 0 for g in self.mean_gain_per_channel):
            raise ValueError("mean gains must be positive")


def dbm_to_mw(dbm):
    return 10.0 ** (dbm / 10.0)


def stationary_idle_prob(model):
    if isinstance(model, ChannelSpec):
        model = model.idle_model
    if isinstance(model, IIDIdle):
        return model.theta
    if model.p + model.q == 0:
        raise ValueError("p + q = 0: chain has no unique stationary distribution")
    return model.p / (model.p + model.q)


def sample_state(spec, prev_state, rng):
    """Draw the channel state for one slot: True means idle (S = 1).

    ``prev_state`` is ignored for i.i.d. channels; for Markov channels
    ``None`` draws from the stationary distribution.
    """
    model = spec.idle_model
    u = rng.random()
    if isinstance(model, IIDIdle) or prev_state is None:
        return bool(u < spec.theta)
    if prev_state:
        return bool(u >= model.q)
    return bool(u < model.p)


def sample_states(spec, n_slots, prev_state, rng):
    """States for ``n_slots`` consecutive slots as a boolean array."""
    model = spec.idle_model
    u = rng.random(n_slots)
    if isinstance(model, IIDIdle):
        return u < model.theta
    out = np.empty(n_slots, dtype=bool)
    state = prev_state
    for i in range(n_slots):
        if state is None:
            state = u[i] < stationary_idle_prob(model)
        elif state:
            state = u[i] >= model.q
        else:
            state = u[i] < model.p
        out[i] = state
    return out


def shannon_rate(bandwidth, tx_power, gain, noise_power):
    return bandwidth * np.log2(1.0 + tx_power * np.asarray(gain) / noise_power)


def sample_rate(channel, user, rng):
    """One Rayleigh-fading rate draw in Mbps for ``user`` on idle ``channel``."""
    if user.mean_gain_per_channel:
        mean_gain = user.mean_gain_per_channel[channel.id]
    else:
        mean_gain = channel.mean_gain
    h = rng.exponential(mean_gain)
    return float(shannon_rate(channel.bandwidth, user.tx_power, h, channel.noise_power))


def expected_rate(bandwidth, mean_snr):
    """E[bandwidth * log2(1 + mean_snr * X)] for X ~ Exp(1).

    Uses E[ln(1 + cX)] = exp(1/c) E1(1/c) while that is representable and
    falls back to quadrature for very small SNR.
    """
    if mean_snr <= 0:
        return 0.0
    x = 1.0 / mean_snr
    if x < 600.0:
        return bandwidth * math.exp(x) * float(special.exp1(x)) / math.log(2.0)
    return bandwidth * expected_rate_quad(1.0, mean_snr)


def expected_rate_quad(bandwidth, mean_snr):
    val, _ = integrate.quad(lambda t: np.log2(1.0 + mean_snr * t) * np.exp(-t), 0.0, np.inf, limit=200)
    return bandwidth * val


@lru_cache(maxsize=4096)
def calibrate_snr(target_rate, bandwidth):
    """Mean SNR (eta * h_bar / noise) whose expected Shannon rate equals ``target_rate``."""
    if target_rate <= 0:
        raise ValueError("target rate must be positive")
    f = lambda log_c: expected_rate(bandwidth, math.exp(log_c)) - target_rate
    lo, hi = -30.0, 5.0
    while f(hi) < 0:
        hi += 5.0
        if hi > 700:
            raise ValueError(f"target rate {target_rate} unreachable with bandwidth {bandwidth}")
    return math.exp(optimize.brentq(f, lo, hi, xtol=1e-14, rtol=1e-14))


def calibrate_mean_gain(target_rate, bandwidth, tx_power, noise_power):
    """Mean exponential gain h_bar giving expected rate ``target_rate``."""
    return calibrate_snr(float(target_rate), float(bandwidth)) * noise_power / tx_power
