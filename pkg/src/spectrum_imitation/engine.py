"""Stochastic per-period simulation of imitative spectrum access.

Each decision period every user senses and contends on its channel for
``slots_per_period`` slots, updates its estimates, enquires random
neighbors and moves to a neighbor's channel if that looks strictly better.
In heterogeneous mode users first scan every channel once in random order
and enquire the neighbor's grab-probability estimate instead of its
throughput.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .channel import expected_rate, sample_states
from .contention import grab_probability_array, resolve_slots
from .estimation import EstimateTable, NoiseModel

MODES = ("hom", "het")
ESTIMATORS = ("mle", "noise")


@dataclass(frozen=True)
class EngineConfig:
    slots_per_period: int = 100
    enquiry_fanout: int = 1
    delay: int = 0
    mode: str = "hom"
    max_periods: int = 500
    lambda_max: int = 50
    estimator: str = "mle"
    reset_on_return: bool = False

    def __post_init__(self):
        if self.slots_per_period < 1:
            raise ValueError("slots_per_period must be >= 1")
        if self.enquiry_fanout < 1:
            raise ValueError("enquiry_fanout must be >= 1")
        if self.delay < 0:
            raise ValueError("delay must be >= 0")
        if self.max_periods < 1:
            raise ValueError("max_periods must be >= 1")
        if self.lambda_max < 1:
            raise ValueError("lambda_max must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.mode == "het" and self.estimator == "noise":
            raise ValueError("the abstract-noise estimator only supports homogeneous mode")


@dataclass
class SystemModel:
    """Channels, per-user radio parameters and the effective sharing graph."""

    channels: list
    mean_snr: np.ndarray        # (N, M) tx_power * mean_gain / noise_power
    neighborhoods: list
    noise: NoiseModel = None    # used by the abstract-noise estimator

    def __post_init__(self):
        self.mean_snr = np.asarray(self.mean_snr, dtype=float)
        if self.mean_snr.shape != (len(self.neighborhoods), len(self.channels)):
            raise ValueError("mean_snr must be (users, channels)")
        self.theta = np.array([c.theta for c in self.channels])
        self.bandwidth = np.array([c.bandwidth for c in self.channels])
        self.mean_rate = np.array([
            [expected_rate(self.bandwidth[m], s) for m, s in enumerate(row)] for row in self.mean_snr
        ])

    @classmethod
    def from_radios(cls, channels, users, neighborhoods, noise=None):
        snr = np.array([
            [u.tx_power * (u.mean_gain_per_channel[c.id] if u.mean_gain_per_channel else c.mean_gain) / c.noise_power
             for c in channels]
            for u in users
        ])
        return cls(list(channels), snr, list(neighborhoods), noise)

    @property
    def n_users(self):
        return self.mean_snr.shape[0]

    @property
    def n_channels(self):
        return len(self.channels)

    def true_throughput(self, choices, lambda_max):
        """U_n = theta_a B_a^n g(k_a) for the given allocation."""
        choices = np.asarray(choices)
        k = np.bincount(choices, minlength=self.n_channels)
        g = grab_probability_array(np.maximum(k, 1), lambda_max)
        users = np.arange(len(choices))
        return self.theta[choices] * self.mean_rate[users, choices] * g[choices]


def imitation_decision(self_estimate, own_channel, peer_estimates):
    """Channel for next period given (channel, estimate) pairs from enquired peers.

    The best peer (ties to the lowest channel index) is imitated only if
    its estimate strictly exceeds ``self_estimate``.
    """
    if not peer_estimates:
        return own_channel
    best_channel, best_value = None, -np.inf
    for channel, value in peer_estimates:
        if value > best_value or (value == best_value and channel < best_channel):
            best_channel, best_value = channel, value
    return best_channel if best_value > self_estimate else own_channel


def heterogeneous_projection(theta_hat, rate_hat, peer_grab):
    return theta_hat * rate_hat * peer_grab


def delayed_estimate(buffer, delay):
    """Entry from ``delay`` periods ago (oldest available if the buffer is short)."""
    if not buffer:
        raise ValueError("empty estimate buffer")
    if len(buffer) > delay:
        return buffer[-1 - delay]
    return buffer[0]


@dataclass
class SimulationTrace:
    choices: np.ndarray       # (T, N) channel held during period t
    estimates: np.ndarray     # (T, N) own throughput estimate at end of t
    occupancy: np.ndarray     # (T, M) users per channel
    realized: np.ndarray      # (T, N) realized mean rate per slot (Mbps)
    expected: np.ndarray      # (T, N) true expected throughput U_n(t)
    switched: np.ndarray      # (T, N) whether the user moves after period t
    scan_periods: int = 0
    metadata: dict = field(default_factory=dict)

    @property
    def periods(self):
        return self.choices.shape[0]

    def occupancy_fractions(self):
        return self.occupancy / self.occupancy.sum(axis=1, keepdims=True)

    def time_average_throughput(self, start=0, stop=None, expected=False):
        data = self.expected if expected else self.realized
        return data[start:stop].mean(axis=0)

    def final_window_occupancy(self, window):
        return self.occupancy_fractions()[-window:].mean(axis=0)

    def modal_choices(self, window):
        tail = self.choices[-window:]
        M = self.occupancy.shape[1]
        counts = np.stack([(tail == m).sum(axis=0) for m in range(M)], axis=1)
        return counts.argmax(axis=1)


def window_change(fractions, window):
    """Max-norm change between the last two consecutive windows of occupancy fractions."""
    if len(fractions) < 2 * window:
        return np.inf
    last = fractions[-window:].mean(axis=0)
    prev = fractions[-2 * window:-window].mean(axis=0)
    return float(np.abs(last - prev).max())


def convergence_period(fractions, window=100, threshold=0.02):
    """First period t at which windows [t-2W, t-W) and [t-W, t) differ by < threshold."""
    fractions = np.asarray(fractions)
    if len(fractions) < 2 * window:
        return None
    csum = np.concatenate([np.zeros((1, fractions.shape[1])), np.cumsum(fractions, axis=0)])
    for t in range(2 * window, len(fractions) + 1):
        last = (csum[t] - csum[t - window]) / window
        prev = (csum[t - window] - csum[t - 2 * window]) / window
        if np.abs(last - prev).max() < threshold:
            return t
    return None


class Simulator:
    """Mutable run state; call ``run_period`` repeatedly or ``run``."""

    def __init__(self, system, config, seed=0, initial=None):
        self.system = system
        self.config = config
        N, M = system.n_users, system.n_channels
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(M + N)
        self.channel_rngs = [np.random.default_rng(s) for s in children[:M]]
        self.user_rngs = [np.random.default_rng(s) for s in children[M:]]
        self.channel_state = [None] * M
        self.table = EstimateTable(N, M, reset_on_return=config.reset_on_return)
        self.neighbors = [np.array(sorted(nb), dtype=int) for nb in system.neighborhoods]
        self.history = deque(maxlen=config.delay + 1)
        self.t = 0
        if config.mode == "het":
            self.scan_order = np.stack([rng.permutation(M) for rng in self.user_rngs])
            self.choice = self.scan_order[:, 0].copy()
            self.scan_periods = M
        else:
            self.scan_order = None
            self.scan_periods = 0
            if initial is None:
                self.choice = np.array([int(rng.integers(M)) for rng in self.user_rngs])
            else:
                self.choice = np.asarray(initial, dtype=int).copy()
                if self.choice.shape != (N,) or self.choice.min() < 0 or self.choice.max() >= M:
                    raise ValueError("initial allocation must give every user a valid channel")
        if config.estimator == "noise" and system.noise is None:
            raise ValueError("abstract-noise estimator needs a noise model")

    def _sense_and_contend(self, choice):
        cfg, sysm = self.config, self.system
        L, M = cfg.slots_per_period, sysm.n_channels
        states = np.empty((M, L), dtype=bool)
        for m, spec in enumerate(sysm.channels):
            states[m] = sample_states(spec, L, self.channel_state[m], self.channel_rngs[m])
            self.channel_state[m] = bool(states[m, -1])
        backoff = np.empty((len(choice), L), dtype=np.int64)
        fading = np.empty((len(choice), L))
        for n, rng in enumerate(self.user_rngs):
            backoff[n] = rng.integers(1, cfg.lambda_max + 1, size=L)
            fading[n] = rng.standard_exponential(L)
        grabbed = np.zeros((len(choice), L), dtype=bool)
        for m in range(M):
            users = np.flatnonzero(choice == m)
            if len(users):
                grabbed[users] = resolve_slots(backoff[users]) & states[m][None, :]
        users = np.arange(len(choice))
        snr = sysm.mean_snr[users, choice]
        rates = sysm.bandwidth[choice][:, None] * np.log2(1.0 + snr[:, None] * fading)
        rates = np.where(grabbed, rates, 0.0)
        sum_S = states[choice].sum(axis=1)
        return sum_S, grabbed.sum(axis=1), rates.sum(axis=1)

    def run_period(self):
        """Simulate one decision period; returns a dict trace row."""
        cfg, sysm = self.config, self.system
        L = cfg.slots_per_period
        choice = self.choice
        occupancy = np.bincount(choice, minlength=sysm.n_channels)
        expected = sysm.true_throughput(choice, cfg.lambda_max)

        if cfg.estimator == "mle":
            sum_S, sum_I, sum_b = self._sense_and_contend(choice)
            self.table.update(choice, sum_S, sum_I, sum_b, L)
            estimate = self.table.own_throughput(choice)
            realized = sum_b / L
        else:
            noise = np.array([sysm.noise.sample(rng) for rng in self.user_rngs])
            estimate = expected + noise
            realized = expected.copy()
        self.history.append((choice.copy(), estimate.copy(), self.table.grab.copy()))

        in_scan = self.scan_order is not None and self.t < self.scan_periods - 1
        if in_scan:
            nxt = self.scan_order[:, self.t + 1].copy()
        elif self.scan_order is not None and self.t == self.scan_periods - 1:
            nxt = choice.copy()
        else:
            nxt = self._imitate(choice, estimate)
        switched = nxt != choice
        if cfg.reset_on_return and not in_scan and switched.any():
            movers = np.flatnonzero(switched)
            self.table.reset(movers, nxt[movers])
        row = dict(period=self.t, choice=choice, estimate=estimate, occupancy=occupancy,
                   realized=realized, expected=expected, switched=switched)
        self.choice = nxt
        self.t += 1
        return row

    def _imitate(self, choice, estimate):
        cfg = self.config
        peer_choice, peer_estimate, peer_grab = delayed_estimate(self.history, cfg.delay)
        het = cfg.mode == "het"
        nxt = choice.copy()
        for n, nbrs in enumerate(self.neighbors):
            if len(nbrs) == 0:
                continue
            rng = self.user_rngs[n]
            if cfg.enquiry_fanout == 1:
                peers = (nbrs[int(rng.integers(len(nbrs)))],)
            elif cfg.enquiry_fanout < len(nbrs):
                peers = nbrs[rng.choice(len(nbrs), cfg.enquiry_fanout, replace=False)]
            else:
                peers = nbrs
            offers = []
            for p in peers:
                ch = int(peer_choice[p])
                if het:
                    value = heterogeneous_projection(self.table.theta[n, ch], self.table.rate[n, ch], peer_grab[p])
                else:
                    value = peer_estimate[p]
                offers.append((ch, value))
            nxt[n] = imitation_decision(estimate[n], int(choice[n]), offers)
        return nxt

    def run(self, periods=None):
        T = periods if periods is not None else self.config.max_periods
        if T < 1:
            raise ValueError("need at least one period")
        N, M = self.system.n_users, self.system.n_channels
        trace = SimulationTrace(
            choices=np.empty((T, N), dtype=np.int16),
            estimates=np.empty((T, N)),
            occupancy=np.empty((T, M), dtype=np.int32),
            realized=np.empty((T, N)),
            expected=np.empty((T, N)),
            switched=np.empty((T, N), dtype=bool),
            scan_periods=self.scan_periods,
        )
        for t in range(T):
            row = self.run_period()
            trace.choices[t] = row["choice"]
            trace.estimates[t] = row["estimate"]
            trace.occupancy[t] = row["occupancy"]
            trace.realized[t] = row["realized"]
            trace.expected[t] = row["expected"]
            trace.switched[t] = row["switched"]
        return trace


def run_simulation(system, config, seed=0, initial=None):
    """Run ``config.max_periods`` periods; deterministic for a given seed."""
    return Simulator(system, config, seed, initial).run()


def initial_channel_scan(system, config, seed=0):
    """Run only the scan stage of heterogeneous mode.

    Returns (EstimateTable after the scan, (N, M) visit orders, per-period occupancy).
    """
    if config.mode != "het":
        raise ValueError("the channel scan belongs to heterogeneous mode")
    sim = Simulator(system, config, seed)
    occupancy = [sim.run_period()["occupancy"] for _ in range(system.n_channels)]
    return sim.table, sim.scan_order, np.array(occupancy)
