"""Equilibrium checks, fairness, centralized optima and the price of imitation."""

from dataclasses import dataclass, asdict
from itertools import combinations_with_replacement
from math import comb

import numpy as np
from scipy.optimize import linear_sum_assignment

from .contention import grab_probability, grab_probability_array
from .graph import SocialGraph, effective_neighborhoods


def _neighborhoods(graph):
    if isinstance(graph, SocialGraph):
        return effective_neighborhoods(graph)
    return [frozenset(n) for n in graph]


def _rate_table(rate, n_users):
    rate = np.asarray(rate, dtype=float)
    if rate.ndim == 1:
        return np.broadcast_to(rate, (n_users, len(rate)))
    return rate


def user_throughputs(allocation, theta, rate, lambda_max, occupancy=None):
    """(N, M) table of U_n(m) = theta_m B_m^n g(k_m) at the given occupancy."""
    allocation = np.asarray(allocation, dtype=int)
    theta = np.asarray(theta, dtype=float)
    rates = _rate_table(rate, len(allocation))
    if occupancy is None:
        occupancy = np.bincount(allocation, minlength=len(theta))
    g = grab_probability_array(occupancy, lambda_max)
    return theta[None, :] * rates * g[None, :]


@dataclass
class EquilibriumReport:
    allocation: np.ndarray
    visible: list
    user_values: np.ndarray     # (N, M) U_n(m)
    own_values: np.ndarray      # U_n(a_n)
    residual: float             # largest visible gain over own value
    epsilon: float
    passed: bool
    violators: list


def check_imitation_equilibrium(allocation, graph, theta, rate, lambda_max, epsilon=0.0, occupancy=None):
    """No user sees a channel held by a neighbor that beats its own by more than ``epsilon``."""
    allocation = np.asarray(allocation, dtype=int)
    nbrs = _neighborhoods(graph)
    if len(nbrs) != len(allocation):
        raise ValueError("allocation and graph disagree on the number of users")
    values = user_throughputs(allocation, theta, rate, lambda_max, occupancy)
    users = np.arange(len(allocation))
    own = values[users, allocation]
    visible, violators = [], []
    residual = 0.0
    for n in users:
        delta = frozenset(int(allocation[k]) for k in nbrs[n]) | {int(allocation[n])}
        visible.append(delta)
        others = [m for m in delta if m != allocation[n]]
        if others:
            gain = float(values[n, others].max() - own[n])
            residual = max(residual, gain)
            if gain > epsilon:
                violators.append(int(n))
    return EquilibriumReport(allocation, visible, values, own, residual, float(epsilon), not violators, violators)


def jain_index(values):
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("Jain index of an empty list")
    if np.any(v < 0):
        raise ValueError("Jain index needs nonnegative values")
    top = v.max()
    if top == 0.0:
        raise ValueError("Jain index undefined when every value is zero")
    v = v / top
    return float(v.sum() ** 2 / (v.size * np.sum(v * v)))


def channel_values(theta, rate, n_users, lambda_max):
    """(M, N+1) table of k * theta_m * B_m * g(k) for k = 0..N."""
    k = np.arange(n_users + 1, dtype=float)
    g = grab_probability_array(np.maximum(k, 1), lambda_max)
    tb = np.asarray(theta, dtype=float) * np.asarray(rate, dtype=float)
    return tb[:, None] * (k * g)[None, :]


def centralized_optimum(theta, rate, n_users, lambda_max):
    """Best split of ``n_users`` homogeneous users over channels, by DP.

    Returns (counts, total throughput in Mbps).
    """
    vals = channel_values(theta, rate, n_users, lambda_max)
    M = vals.shape[0]
    best = np.full((M + 1, n_users + 1), -np.inf)
    choice = np.zeros((M + 1, n_users + 1), dtype=int)
    best[0, 0] = 0.0
    for m in range(1, M + 1):
        for n in range(n_users + 1):
            cand = best[m - 1, n::-1][: n + 1] + vals[m - 1, : n + 1]
            j = int(np.argmax(cand))
            best[m, n] = cand[j]
            choice[m, n] = j
    counts = np.zeros(M, dtype=int)
    n = n_users
    for m in range(M, 0, -1):
        counts[m - 1] = choice[m, n]
        n -= choice[m, n]
    return counts, float(best[M, n_users])


def allocation_value(assignment, theta, rate_table, lambda_max):
    assignment = np.asarray(assignment, dtype=int)
    M = len(theta)
    k = np.bincount(assignment, minlength=M)
    g = grab_probability_array(np.maximum(k, 1), lambda_max)
    per_user = np.asarray(theta)[assignment] * rate_table[np.arange(len(assignment)), assignment] * g[assignment]
    return float(per_user.sum())


def _compositions(n, m):
    # stars and bars over sorted bar positions
    for bars in combinations_with_replacement(range(n + 1), m - 1):
        prev, parts = 0, []
        for b in bars:
            parts.append(b - prev)
            prev = b
        parts.append(n - prev)
        yield parts


def _assignment_for_counts(counts, theta, rate_table, lambda_max):
    """Best user-to-slot matching for fixed channel occupancy counts."""
    N, M = rate_table.shape
    slot_channel = np.repeat(np.arange(M), counts)
    g = grab_probability_array(np.maximum(np.asarray(counts), 1), lambda_max)
    weight = (np.asarray(theta)[None, :] * rate_table * g[None, :])[:, slot_channel]
    rows, cols = linear_sum_assignment(weight, maximize=True)
    assignment = np.empty(N, dtype=int)
    assignment[rows] = slot_channel[cols]
    return assignment, float(weight[rows, cols].sum())


def _exact_by_counts(theta, rate_table, lambda_max):
    N, M = rate_table.shape
    best_val, best_assign = -np.inf, None
    for counts in _compositions(N, M):
        assign, val = _assignment_for_counts(counts, theta, rate_table, lambda_max)
        if val > best_val + 1e-12:
            best_val, best_assign = val, assign
    return best_assign, best_val


def _local_search(theta, rate_table, lambda_max, rng, restarts):
    N, M = rate_table.shape
    g = grab_probability_array(np.arange(1, N + 2), lambda_max)
    g_of = lambda k: g[max(k, 1) - 1]
    tb = np.asarray(theta)[None, :] * rate_table
    best_val, best_assign = -np.inf, None
    for _ in range(restarts):
        a = rng.integers(0, M, size=N)
        k = np.bincount(a, minlength=M)
        sums = np.array([tb[a == m, m].sum() for m in range(M)])
        improved = True
        while improved:
            improved = False
            for n in rng.permutation(N):
                src = a[n]
                base = sums[src] * g_of(k[src])
                for dst in range(M):
                    if dst == src:
                        continue
                    before = base + sums[dst] * g_of(k[dst])
                    after = (sums[src] - tb[n, src]) * g_of(k[src] - 1) + (sums[dst] + tb[n, dst]) * g_of(k[dst] + 1)
                    if after > before + 1e-12:
                        sums[src] -= tb[n, src]
                        sums[dst] += tb[n, dst]
                        k[src] -= 1
                        k[dst] += 1
                        a[n] = dst
                        improved = True
                        break
            if improved:
                continue
            # pairwise swaps keep occupancy fixed
            for n1 in range(N):
                for n2 in range(n1 + 1, N):
                    c1, c2 = a[n1], a[n2]
                    if c1 == c2:
                        continue
                    gain = (tb[n2, c1] - tb[n1, c1]) * g_of(k[c1]) + (tb[n1, c2] - tb[n2, c2]) * g_of(k[c2])
                    if gain > 1e-12:
                        sums[c1] += tb[n2, c1] - tb[n1, c1]
                        sums[c2] += tb[n1, c2] - tb[n2, c2]
                        a[n1], a[n2] = c2, c1
                        improved = True
        a, val = _polish_counts(np.bincount(a, minlength=M), theta, rate_table, lambda_max)
        if val > best_val:
            best_val, best_assign = val, a.copy()
    # structured starts: one crowded channel, the rest held by single users
    for crowd in range(M):
        if N < M:
            break
        counts = np.ones(M, dtype=int)
        counts[crowd] = N - (M - 1)
        a, val = _polish_counts(counts, theta, rate_table, lambda_max)
        if val > best_val:
            best_val, best_assign = val, a.copy()
    return best_assign, best_val


def _polish_counts(counts, theta, rate_table, lambda_max):
    """Hill-climb over occupancy vectors, each solved exactly by assignment."""
    M = len(counts)
    counts = np.asarray(counts).copy()
    assign, val = _assignment_for_counts(counts, theta, rate_table, lambda_max)
    improved = True
    while improved:
        improved = False
        for src in range(M):
            for dst in range(M):
                if src == dst or counts[src] == 0:
                    continue
                trial = counts.copy()
                trial[src] -= 1
                trial[dst] += 1
                t_assign, t_val = _assignment_for_counts(trial, theta, rate_table, lambda_max)
                if t_val > val + 1e-12:
                    counts, assign, val = trial, t_assign, t_val
                    improved = True
    return assign, val


@dataclass
class HeterogeneousOptimum:
    assignment: np.ndarray
    value: float
    exact: bool
    method: str


def heterogeneous_optimum(theta, rate_table, lambda_max, rng=None, restarts=20, max_compositions=200_000):
    """System-throughput maximizing assignment for per-user rate tables.

    Exact when the number of occupancy vectors is at most
    ``max_compositions``: each occupancy vector is solved as a linear
    assignment problem. Larger instances fall back to multi-start local
    search and are flagged inexact.
    """
    rate_table = np.asarray(rate_table, dtype=float)
    N, M = rate_table.shape
    if comb(N + M - 1, M - 1) <= max_compositions:
        assign, val = _exact_by_counts(theta, rate_table, lambda_max)
        return HeterogeneousOptimum(assign, val, True, "compositions")
    rng = rng if rng is not None else np.random.default_rng(0)
    assign, val = _local_search(theta, rate_table, lambda_max, rng, restarts)
    return HeterogeneousOptimum(assign, val, False, "local-search")


def local_search_optimum(theta, rate_table, lambda_max, rng=None, restarts=20):
    rng = rng if rng is not None else np.random.default_rng(0)
    assign, val = _local_search(theta, np.asarray(rate_table, dtype=float), lambda_max, rng, restarts)
    return HeterogeneousOptimum(assign, val, False, "local-search")


def price_of_imitation(equilibrium_value, optimum_value):
    if optimum_value == 0:
        raise ValueError("price of imitation undefined for a zero optimum")
    return equilibrium_value / optimum_value


def poi_lower_bound(n_users, n_utilized, n_channels, lambda_max):
    """N g(N/Z) / M; N/Z may be fractional."""
    return n_users * grab_probability(n_users / n_utilized, lambda_max) / n_channels


def largest_remainder(values, total):
    """Integers summing to ``total`` that stay within one of ``values``."""
    values = np.asarray(values, dtype=float)
    floors = np.floor(values).astype(int)
    short = int(total - floors.sum())
    order = np.argsort(-(values - floors), kind="stable")
    floors[order[:short]] += 1
    return floors


def project_state(X, cluster_graph):
    """Per-user channel allocation from fractional cluster states.

    Each cluster's z_k X_m^k is rounded by largest remainder; members are
    assigned channels in ascending order.
    """
    X = np.asarray(X, dtype=float)
    allocation = np.empty(sum(len(m) for m in cluster_graph.members), dtype=int)
    for k, users in enumerate(cluster_graph.members):
        counts = largest_remainder(len(users) * X[k], len(users))
        allocation[list(users)] = np.repeat(np.arange(X.shape[1]), counts)
    return allocation


@dataclass
class MetricsReport:
    n_users: int
    n_channels: int
    system_throughput: float
    jain: float
    utilized_channels: int
    optimum: float
    optimum_exact: bool
    poi: float
    poi_bound: float
    user_throughputs: np.ndarray = None

    FIELDS = ("n_users", "n_channels", "system_throughput", "jain", "utilized_channels",
              "optimum", "optimum_exact", "poi", "poi_bound")

    def row(self):
        d = asdict(self)
        return {k: d[k] for k in self.FIELDS}


def metrics_report(user_values, theta, rate, lambda_max, utilized, rate_table=None, rng=None):
    """Fairness and efficiency of per-user throughputs against the centralized optimum.

    ``rate`` is the shared B_m; pass ``rate_table`` for heterogeneous users.
    The PoI bound is reported only for homogeneous channels and users.
    """
    values = np.asarray(user_values, dtype=float)
    N, M = len(values), len(theta)
    if rate_table is None:
        _, opt = centralized_optimum(theta, rate, N, lambda_max)
        exact = True
    else:
        res = heterogeneous_optimum(theta, rate_table, lambda_max, rng=rng)
        opt, exact = res.value, res.exact
    tb = np.asarray(theta) * np.asarray(rate)
    homogeneous = rate_table is None and np.allclose(tb, tb[0])
    bound = poi_lower_bound(N, utilized, M, lambda_max) if homogeneous and utilized > 0 else float("nan")
    total = float(values.sum())
    return MetricsReport(N, M, total, jain_index(values), int(utilized), float(opt), bool(exact),
                         price_of_imitation(total, opt), bound, values)
