"""Deterministic population dynamics of imitation on a cluster graph.

State ``X`` is a (K, M) array: row k holds the fractions of cluster k's
users on each channel. One call to ``step`` is one decision period of the
exact discrete map X(t+1)_m^k = sum_i X_i^k(t) P_{i,k}^m(X(t)).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .contention import grab_probability_array
from .estimation import NoiseModel


@dataclass(frozen=True)
class MeanFieldModel:
    theta: np.ndarray
    rate: np.ndarray
    lambda_max: int
    sizes: np.ndarray
    closed_adjacency: np.ndarray  # K x K bool, True on the diagonal

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        rate = np.asarray(self.rate, dtype=float)
        sizes = np.asarray(self.sizes, dtype=float)
        adj = np.asarray(self.closed_adjacency, dtype=bool).copy()
        if theta.shape != rate.shape or theta.ndim != 1:
            raise ValueError("theta and rate must be 1-d arrays of equal length")
        if adj.shape != (len(sizes), len(sizes)) or not np.array_equal(adj, adj.T):
            raise ValueError("closed adjacency must be a symmetric K x K matrix")
        np.fill_diagonal(adj, True)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rate", rate)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "closed_adjacency", adj)

    @classmethod
    def from_cluster_graph(cls, cluster_graph, theta, rate, lambda_max):
        return cls(theta, rate, lambda_max, cluster_graph.sizes, cluster_graph.closed_adjacency())

    @classmethod
    def single_cluster(cls, n_users, theta, rate, lambda_max):
        return cls(theta, rate, lambda_max, np.array([n_users]), np.ones((1, 1), dtype=bool))

    @property
    def n_channels(self):
        return len(self.theta)

    @property
    def n_clusters(self):
        return len(self.sizes)

    @property
    def theta_rate(self):
        return self.theta * self.rate

    def uniform_state(self):
        return np.full((self.n_clusters, self.n_channels), 1.0 / self.n_channels)

    def neighbor_weights(self):
        """Row k: z_{k'} / sum_{l in C_k} z_l for k' in C_k, zero elsewhere."""
        w = self.closed_adjacency * self.sizes[None, :]
        return w / w.sum(axis=1, keepdims=True)


class NoiseDiffCdf:
    """CDF Q of the difference of two independent estimation-noise draws.

    Uniform(-a, a) noise gives the triangular density on (-2a, 2a) and a
    piecewise-quadratic Q. Other densities are convolved numerically on the
    model's grid and integrated with the trapezoid rule.
    """

    def __init__(self, model: NoiseModel):
        self.model = model
        self.width = model.upper - model.lower
        if model.is_uniform and model.upper == -model.lower:
            self._grid = None
        else:
            x, f = model.density_grid()
            h = x[1] - x[0]
            q = np.convolve(f, f[::-1]) * h
            d = (np.arange(len(q)) - (len(x) - 1)) * h
            Q = cumulative_trapezoid(q, d, initial=0.0)
            self._grid = (d, Q / Q[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self._grid is None:
            a2 = self.width  # 2a
            xc = np.clip(x, -a2, a2)
            return np.where(xc < 0, (xc + a2) ** 2 / (2 * a2 * a2), 1.0 - (a2 - xc) ** 2 / (2 * a2 * a2))
        d, Q = self._grid
        return np.interp(x, d, Q, left=0.0, right=1.0)

    def density(self, x):
        """q(x), by finite difference of Q for gridded models."""
        x = np.asarray(x, dtype=float)
        if self._grid is None:
            a2 = self.width
            return np.clip(a2 - np.abs(x), 0.0, None) / (a2 * a2)
        d, Q = self._grid
        return np.interp(x, d, np.gradient(Q, d), left=0.0, right=0.0)


def noise_diff_cdf(model):
    return NoiseDiffCdf(model)


def channel_mass(X, model):
    return model.sizes @ np.asarray(X, dtype=float)


def throughputs(X, model):
    """U(m, X) for every channel; mass below one is treated as one contender."""
    return model.theta_rate * grab_probability_array(channel_mass(X, model), model.lambda_max)


def expected_throughput(m, X, model):
    return float(throughputs(X, model)[m])


def imitation_matrix(U, Q):
    """Matrix with entry [i, j] = Q(U_j - U_i), zero diagonal."""
    U = np.asarray(U, dtype=float)
    mat = Q(U[None, :] - U[:, None])
    np.fill_diagonal(mat, 0.0)
    return mat


def flow_matrices(X, model, Q):
    """(K, M, M) array of per-cluster switching probabilities P_{i,k}^j."""
    X = np.asarray(X, dtype=float)
    visible = model.neighbor_weights() @ X
    P = visible[:, None, :] * imitation_matrix(throughputs(X, model), Q)[None, :, :]
    idx = np.arange(model.n_channels)
    P[:, idx, idx] = 1.0 - P.sum(axis=2)
    return P


def flow_probability(i, j, k, X, model, Q):
    return float(flow_matrices(X, model, Q)[k, i, j])


def step(X, model, Q):
    X = np.asarray(X, dtype=float)
    return np.einsum("ki,kij->kj", X, flow_matrices(X, model, Q))


def lyapunov_descent(X, model, Q, X_next=None):
    """Directional derivative of V along one step: sum_k sum_m -z_k U(m, X) dX_m^k."""
    X = np.asarray(X, dtype=float)
    if X_next is None:
        X_next = step(X, model, Q)
    U = throughputs(X, model)
    return float(-np.sum(model.sizes[:, None] * U[None, :] * (X_next - X)))


def utilized_channels(X, model, mass_floor=1e-6):
    frac = channel_mass(X, model) / model.sizes.sum()
    return np.flatnonzero(frac > mass_floor)


def equality_residual(X, model, mass_floor=1e-6):
    """Largest throughput spread among channels visible to any single cluster."""
    X = np.asarray(X, dtype=float)
    U = throughputs(X, model)
    visible = model.neighbor_weights() @ X
    worst = 0.0
    for k in range(model.n_clusters):
        used = visible[k] > mass_floor
        if used.any():
            worst = max(worst, float(U[used].max() - U[used].min()))
    return worst


@dataclass
class EquilibriumResult:
    X: np.ndarray
    converged: bool
    iterations: int
    state_change: float
    residual: float
    max_lyapunov: float
    trajectory: list = field(default_factory=list)


def iterate_to_equilibrium(X0, model, Q, tol=1e-10, max_iters=10**6, mass_floor=1e-6,
                           throughput_tol=None, record=False):
    """Iterate ``step`` until the max-norm change drops below ``tol``.

    ``converged`` additionally requires equal throughput (within
    ``throughput_tol``, default 1e-6 * max theta*B) across the channels each
    cluster can see. Non-convergence is reported, not raised.
    """
    X = np.asarray(X0, dtype=float)
    if X.shape != (model.n_clusters, model.n_channels):
        raise ValueError(f"state must have shape {(model.n_clusters, model.n_channels)}")
    if np.any(X < 0) or not np.allclose(X.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("each cluster's fractions must be nonnegative and sum to one")
    if throughput_tol is None:
        throughput_tol = 1e-6 * float(model.theta_rate.max())
    trajectory = [X.copy()] if record else []
    max_lyap = -np.inf
    change = np.inf
    it = 0
    while it < max_iters:
        X_next = step(X, model, Q)
        max_lyap = max(max_lyap, lyapunov_descent(X, model, Q, X_next))
        change = float(np.abs(X_next - X).max())
        X = X_next
        it += 1
        if record:
            trajectory.append(X.copy())
        if change < tol:
            break
    residual = equality_residual(X, model, mass_floor)
    converged = change < tol and residual < throughput_tol
    return EquilibriumResult(X, converged, it, change, residual, float(max_lyap), trajectory)


def run_trajectory(X0, model, Q, periods):
    """States X(0..periods) as a (periods + 1, K, M) array."""
    out = np.empty((periods + 1,) + np.shape(X0))
    out[0] = X0
    for t in range(periods):
        out[t + 1] = step(out[t], model, Q)
    return out
