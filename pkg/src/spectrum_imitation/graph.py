"""Information-sharing graph, effective neighborhoods and cluster-based graphs.

Edge-list file format (users are 0-based integers)::

    #users 150            optional; user count (default: 1 + largest index seen)
    #user 3 0.5 0.2       trust threshold and cooperation threshold of user 3
    0 1                   undirected edge, tie strength 1 both ways
    1 2 0.8 0.3           edge with delta_12 = 0.8 and delta_21 = 0.3
    # anything else after '#' is a comment

Missing tie strengths default to 1, missing thresholds to 0.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, minimum_spanning_tree
from scipy.spatial.distance import pdist, squareform


@dataclass(frozen=True)
class SocialGraph:
    n_users: int
    # (u, v) with u < v -> (delta_uv, delta_vu)
    ties: dict = field(default_factory=dict)
    trust: tuple = ()
    cooperation: tuple = ()

    def __post_init__(self):
        if self.n_users < 1:
            raise ValueError("graph needs at least one user")
        ties = {}
        for (u, v), (d_uv, d_vu) in self.ties.items():
            if u == v:
                raise ValueError(f"self-loop on user {u}")
            if not (0 <= u < self.n_users and 0 <= v < self.n_users):
                raise ValueError(f"edge ({u}, {v}) references an unknown user")
            for d in (d_uv, d_vu):
                if not 0.0 <= d <= 1.0:
                    raise ValueError(f"tie strength {d} outside [0, 1]")
            if u > v:
                u, v, d_uv, d_vu = v, u, d_vu, d_uv
            ties[(u, v)] = (float(d_uv), float(d_vu))
        object.__setattr__(self, "ties", ties)
        for name in ("trust", "cooperation"):
            vals = tuple(getattr(self, name)) or (0.0,) * self.n_users
            if len(vals) != self.n_users or any(not 0.0 <= x <= 1.0 for x in vals):
                raise ValueError(f"{name} thresholds must be one value in [0, 1] per user")
            object.__setattr__(self, name, tuple(float(x) for x in vals))

    @classmethod
    def from_edges(cls, n_users, edges):
        return cls(n_users, {(u, v): (1.0, 1.0) for u, v in edges})

    def tie(self, u, v):
        """delta_uv, or None when there is no edge."""
        if u < v:
            pair = self.ties.get((u, v))
            return None if pair is None else pair[0]
        pair = self.ties.get((v, u))
        return None if pair is None else pair[1]

    def raw_neighbors(self):
        adj = [set() for _ in range(self.n_users)]
        for u, v in self.ties:
            adj[u].add(v)
            adj[v].add(u)
        return adj


def neighborhood(graph, n):
    """Users whose estimates ``n`` may enquire: edge present, n trusts k, k cooperates with n."""
    out = set()
    for k in graph.raw_neighbors()[n]:
        if graph.tie(n, k) >= graph.trust[n] and graph.tie(k, n) >= graph.cooperation[k]:
            out.add(k)
    return frozenset(out)


def effective_neighborhoods(graph):
    adj = graph.raw_neighbors()
    result = []
    for n in range(graph.n_users):
        result.append(frozenset(
            k for k in adj[n]
            if graph.tie(n, k) >= graph.trust[n] and graph.tie(k, n) >= graph.cooperation[k]
        ))
    return result


def is_symmetric(neighborhoods):
    return all(n in neighborhoods[m] for n, nbrs in enumerate(neighborhoods) for m in nbrs)


def mutual_neighborhoods(neighborhoods):
    """Keep only pairs that share information in both directions."""
    return [frozenset(m for m in nbrs if n in neighborhoods[m]) for n, nbrs in enumerate(neighborhoods)]


@dataclass(frozen=True)
class ClusterGraph:
    members: tuple          # tuple of sorted user tuples, one per cluster
    adjacency: np.ndarray   # K x K bool, zero diagonal

    @property
    def n_clusters(self):
        return len(self.members)

    @property
    def sizes(self):
        return np.array([len(m) for m in self.members])

    @property
    def membership(self):
        out = np.empty(sum(len(m) for m in self.members), dtype=int)
        for k, users in enumerate(self.members):
            out[list(users)] = k
        return out

    def communicating(self, k):
        return frozenset(int(h) for h in np.flatnonzero(self.adjacency[k]))

    def closed(self, k):
        return self.communicating(k) | {k}

    def closed_adjacency(self):
        return self.adjacency | np.eye(self.n_clusters, dtype=bool)

    def neighborhoods(self):
        adj = self.adjacency
        return [frozenset(int(h) for h in np.flatnonzero(adj[k])) for k in range(self.n_clusters)]


def _as_neighborhoods(graph):
    if isinstance(graph, SocialGraph):
        return effective_neighborhoods(graph)
    if isinstance(graph, ClusterGraph):
        return graph.neighborhoods()
    return [frozenset(n) for n in graph]


def build_cluster_graph(graph, rng=None, rescan=False):
    """Greedy cluster construction followed by inter-cluster edges.

    A node ``m`` joins the cluster seeded at ``n`` when N_n \\ {m} == N_m \\ {n}.
    By default the candidate list is fixed when the seed is chosen; with
    ``rescan`` the candidates are re-examined until no node joins.
    """
    nbrs = _as_neighborhoods(graph)
    if not is_symmetric(nbrs):
        raise ValueError("clustering needs a symmetric effective graph")
    rng = rng if rng is not None else np.random.default_rng(0)
    unmerged = set(range(len(nbrs)))
    clusters = []
    while unmerged:
        pool = sorted(unmerged)
        n = pool[int(rng.integers(len(pool)))]
        omega = {n}
        changed = True
        while changed:
            changed = False
            for m in sorted((nbrs[n] & unmerged) - omega):
                if nbrs[n] - {m} == nbrs[m] - {n}:
                    omega.add(m)
                    changed = True
            if not rescan:
                break
        unmerged -= omega
        clusters.append(tuple(sorted(omega)))

    K = len(clusters)
    adjacency = np.zeros((K, K), dtype=bool)
    owner = {u: k for k, users in enumerate(clusters) for u in users}
    for u, vs in enumerate(nbrs):
        for v in vs:
            ku, kv = owner[u], owner[v]
            if ku != kv and u in nbrs[v]:
                adjacency[ku, kv] = adjacency[kv, ku] = True
    return ClusterGraph(tuple(clusters), adjacency)


def remerge(cluster_graph, rng=None, max_rounds=100):
    """Re-cluster the cluster graph until the number of clusters stops shrinking."""
    current = cluster_graph
    for _ in range(max_rounds):
        coarse = build_cluster_graph(current.neighborhoods(), rng)
        if coarse.n_clusters == current.n_clusters:
            return current
        members = tuple(
            tuple(sorted(u for k in group for u in current.members[k])) for group in coarse.members
        )
        current = ClusterGraph(members, coarse.adjacency)
    return current


def neighborhoods_match_clusters(neighborhoods, cluster_graph):
    """Whether every N_n equals the union of its closed cluster neighborhood (minus n)."""
    owner = cluster_graph.membership
    for n, nbrs in enumerate(neighborhoods):
        union = set()
        for k in cluster_graph.closed(owner[n]):
            union.update(cluster_graph.members[k])
        union.discard(n)
        if union != set(nbrs):
            return False
    return True


def satisfies_cluster_definition(neighborhoods, cluster_graph):
    """Members pairwise share and have identical outside neighbor sets."""
    for users in cluster_graph.members:
        inside = set(users)
        outside = None
        for u in users:
            if not inside - {u} <= neighborhoods[u]:
                return False
            ext = set(neighborhoods[u]) - inside
            if outside is None:
                outside = ext
            elif ext != outside:
                return False
    return True


def is_connected(graph):
    nbrs = _as_neighborhoods(graph)
    n = len(nbrs)
    if n == 0:
        raise ValueError("empty graph")
    rows = [u for u, vs in enumerate(nbrs) for _ in vs]
    cols = [v for vs in nbrs for v in vs]
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    count, _ = connected_components(mat, directed=True, connection="weak")
    return count == 1


def components(graph):
    nbrs = _as_neighborhoods(graph)
    n = len(nbrs)
    rows = [u for u, vs in enumerate(nbrs) for _ in vs]
    cols = [v for vs in nbrs for v in vs]
    mat = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(mat, directed=True, connection="weak")[1]


TOPOLOGIES = ("chain", "isolated", "full", "ring")


def topology_adjacency(name, n_clusters):
    K = n_clusters
    adj = np.zeros((K, K), dtype=bool)
    if name == "chain":
        for k in range(K - 1):
            adj[k, k + 1] = adj[k + 1, k] = True
    elif name == "full":
        adj[:] = True
        np.fill_diagonal(adj, False)
    elif name == "ring":
        for k in range(K):
            if K > 1:
                adj[k, (k + 1) % K] = adj[(k + 1) % K, k] = True
        np.fill_diagonal(adj, False)
    elif name != "isolated":
        raise ValueError(f"unknown topology {name!r}; choose from {TOPOLOGIES}")
    return adj


def cluster_topology(name, sizes):
    """User-level graph for a named cluster topology with cluster sizes ``sizes``.

    Each cluster is a clique; communicating clusters are joined completely.
    ``chain`` with three clusters is the 1-2-3 layout where clusters 1 and 3
    only talk through 2; ``isolated`` has no inter-cluster edges.
    """
    sizes = [int(z) for z in sizes]
    if not sizes or any(z < 1 for z in sizes):
        raise ValueError("cluster sizes must be positive")
    adj = topology_adjacency(name, len(sizes))
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    groups = [range(offsets[k], offsets[k + 1]) for k in range(len(sizes))]
    edges = set()
    for k, users in enumerate(groups):
        for i in users:
            for j in users:
                if i < j:
                    edges.add((i, j))
        for h in range(k + 1, len(sizes)):
            if adj[k, h]:
                edges.update((i, j) for i in users for j in groups[h])
    return SocialGraph.from_edges(int(offsets[-1]), sorted(edges))


def connecting_radius(points):
    """Smallest radius that makes the disk graph on ``points`` connected."""
    if len(points) < 2:
        return 0.0
    mst = minimum_spanning_tree(squareform(pdist(points)))
    return float(mst.data.max()) if mst.nnz else 0.0


def random_geometric_graph(n_users, side, radius, rng):
    """Users uniform in a side x side square, edge iff distance <= radius.

    ``radius`` of None picks the smallest connecting radius. Returns
    (graph, positions, radius used).
    """
    points = rng.uniform(0.0, side, size=(n_users, 2))
    if radius is None:
        radius = connecting_radius(points)
    dist = squareform(pdist(points))
    iu, ju = np.nonzero(np.triu(dist <= radius * (1 + 1e-12), k=1))
    return SocialGraph.from_edges(n_users, zip(iu.tolist(), ju.tolist())), points, float(radius)


def random_graph(n_users, edge_prob, rng):
    mask = np.triu(rng.random((n_users, n_users)) < edge_prob, k=1)
    iu, ju = np.nonzero(mask)
    return SocialGraph.from_edges(n_users, zip(iu.tolist(), ju.tolist()))


class GraphFormatError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = str(path), line


def read_edge_list(path):
    path = Path(path)
    ties, thresholds = {}, {}
    declared = None
    max_seen = -1
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            if line.startswith("#users"):
                declared = int(line.split()[1])
            elif line.startswith("#user"):
                parts = line.split()
                if len(parts) != 4:
                    raise ValueError("threshold line must be '#user n eta phi'")
                n = int(parts[1])
                thresholds[n] = (float(parts[2]), float(parts[3]))
                max_seen = max(max_seen, n)
            elif line.startswith("#"):
                continue
            else:
                parts = line.split()
                if len(parts) not in (2, 4):
                    raise ValueError("edge line must be 'u v' or 'u v d_uv d_vu'")
                u, v = int(parts[0]), int(parts[1])
                deltas = (float(parts[2]), float(parts[3])) if len(parts) == 4 else (1.0, 1.0)
                if u > v:
                    u, v, deltas = v, u, deltas[::-1]
                ties[(u, v)] = deltas
                max_seen = max(max_seen, u, v)
        except (ValueError, IndexError) as exc:
            raise GraphFormatError(path, lineno, str(exc)) from None
    n_users = declared if declared is not None else max_seen + 1
    trust = [thresholds.get(n, (0.0, 0.0))[0] for n in range(n_users)]
    coop = [thresholds.get(n, (0.0, 0.0))[1] for n in range(n_users)]
    try:
        return SocialGraph(n_users, ties, tuple(trust), tuple(coop))
    except ValueError as exc:
        raise GraphFormatError(path, 0, str(exc)) from None


def write_edge_list(graph, path):
    lines = [f"#users {graph.n_users}"]
    for n in range(graph.n_users):
        if graph.trust[n] or graph.cooperation[n]:
            lines.append(f"#user {n} {graph.trust[n]!r} {graph.cooperation[n]!r}")
    for (u, v), (d_uv, d_vu) in sorted(graph.ties.items()):
        if d_uv == 1.0 and d_vu == 1.0:
            lines.append(f"{u} {v}")
        else:
            lines.append(f"{u} {v} {d_uv!r} {d_vu!r}")
    Path(path).write_text("\n".join(lines) + "\n")
