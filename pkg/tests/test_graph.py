from collections import deque

import numpy as np
import pytest

from spectrum_imitation.graph import (ClusterGraph, GraphFormatError, SocialGraph, build_cluster_graph,
                                      cluster_topology, components, connecting_radius,
                                      effective_neighborhoods, is_connected, is_symmetric, neighborhoods_match_clusters,
                                      mutual_neighborhoods, neighborhood, random_geometric_graph,
                                      random_graph, read_edge_list, remerge, satisfies_cluster_definition,
                                      write_edge_list)


def bfs_connected(nbrs):
    seen, todo = {0}, deque([0])
    while todo:
        u = todo.popleft()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return len(seen) == len(nbrs)


def brute_clusters(nbrs):
    """Classes of the relation 'adjacent and N_u - {v} == N_v - {u}' (plus identity)."""
    n = len(nbrs)
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            x = parent[x]
        return x

    for u in range(n):
        for v in nbrs[u]:
            if nbrs[u] - {v} == nbrs[v] - {u}:
                parent[find(u)] = find(v)
    groups = {}
    for u in range(n):
        groups.setdefault(find(u), []).append(u)
    return sorted(tuple(g) for g in groups.values())


def test_thresholds_filter_edges():
    g = SocialGraph(3, {(0, 1): (0.9, 0.2), (1, 2): (0.5, 0.5)}, trust=(0.5, 0.0, 0.6), cooperation=(0.0, 0.3, 0.0))
    nb = effective_neighborhoods(g)
    # 0 trusts 1 (0.9 >= 0.5) but 1 does not cooperate with 0 (0.2 < 0.3)
    assert nb[0] == frozenset()
    # 1 -> 0: tie 0.2 >= trust 0, and 0 cooperates (0.9 >= 0)
    assert nb[1] == {0, 2}
    # 2 -> 1: tie 0.5 < trust 0.6
    assert nb[2] == frozenset()
    assert nb == [neighborhood(g, n) for n in range(3)]
    assert not is_symmetric(nb)
    assert mutual_neighborhoods(nb)[1] == frozenset()


def test_graph_validation():
    with pytest.raises(ValueError):
        SocialGraph(2, {(0, 0): (1.0, 1.0)})
    with pytest.raises(ValueError):
        SocialGraph(2, {(0, 5): (1.0, 1.0)})
    with pytest.raises(ValueError):
        SocialGraph(2, {(0, 1): (1.5, 1.0)})


def test_star_and_path_are_singletons():
    star = SocialGraph.from_edges(6, [(0, k) for k in range(1, 6)])
    assert build_cluster_graph(star).n_clusters == 6
    path = SocialGraph.from_edges(5, [(k, k + 1) for k in range(4)])
    assert build_cluster_graph(path).n_clusters == 5


def test_complete_graph_is_one_cluster():
    cg = build_cluster_graph(cluster_topology("full", [7]))
    assert cg.n_clusters == 1 and cg.sizes.tolist() == [7]


@pytest.mark.parametrize("name,adj", [
    ("chain", [[0, 1, 0], [1, 0, 1], [0, 1, 0]]),
    ("isolated", [[0, 0, 0], [0, 0, 0], [0, 0, 0]]),
    ("full", [[0, 1, 1], [1, 0, 1], [1, 1, 0]]),
])
def test_topologies_recover_their_clusters(name, adj):
    sizes = [4, 6, 5]
    cg = build_cluster_graph(cluster_topology(name, sizes))
    order = np.argsort([m[0] for m in cg.members])
    if name == "full":
        assert cg.n_clusters == 1
        return
    assert sorted(cg.sizes.tolist()) == sorted(sizes)
    assert cg.adjacency[np.ix_(order, order)].astype(int).tolist() == adj


def test_clustering_independent_of_seed_and_matches_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = random_graph(12, 0.5, rng)
        nbrs = effective_neighborhoods(g)
        ref = brute_clusters(nbrs)
        for seed in range(3):
            cg = build_cluster_graph(g, np.random.default_rng(seed))
            assert sorted(cg.members) == ref
            assert satisfies_cluster_definition(nbrs, cg)
            assert neighborhoods_match_clusters(nbrs, cg)
        assert remerge(cg).n_clusters == cg.n_clusters


def test_connectivity_against_bfs():
    rng = np.random.default_rng(2)
    for _ in range(200):
        g = random_graph(int(rng.integers(2, 15)), float(rng.uniform(0.05, 0.5)), rng)
        nbrs = effective_neighborhoods(g)
        assert is_connected(g) == bfs_connected(nbrs)
        assert (len(set(components(g))) == 1) == is_connected(g)


def test_asymmetric_graph_rejected():
    g = SocialGraph(2, {(0, 1): (1.0, 0.1)}, trust=(0.0, 0.5))
    with pytest.raises(ValueError):
        build_cluster_graph(g)


def test_cluster_graph_views():
    cg = ClusterGraph(((0, 1), (2,), (3, 4)), np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=bool))
    assert cg.membership.tolist() == [0, 0, 1, 2, 2]
    assert cg.closed(1) == {0, 1, 2}
    assert cg.closed_adjacency().diagonal().all()


def test_geometric_radius_is_minimal():
    rng = np.random.default_rng(4)
    g, pts, r = random_geometric_graph(40, 250.0, None, rng)
    assert is_connected(g)
    assert r == pytest.approx(connecting_radius(pts))
    from scipy.spatial.distance import pdist, squareform
    d = squareform(pdist(pts))
    below = SocialGraph.from_edges(40, [(i, j) for i in range(40) for j in range(i + 1, 40) if d[i, j] < r * 0.999])
    assert not is_connected(below)


def test_edge_list_round_trip(tmp_path):
    g = SocialGraph(5, {(0, 1): (1.0, 1.0), (1, 2): (0.8, 0.25), (3, 4): (1.0, 1.0)},
                    trust=(0.0, 0.5, 0.0, 0.0, 0.0), cooperation=(0.0, 0.0, 0.1, 0.0, 0.0))
    path = tmp_path / "g.txt"
    write_edge_list(g, path)
    assert read_edge_list(path) == g


def test_edge_list_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("#users 3\n0 1\n1 x\n")
    with pytest.raises(GraphFormatError) as err:
        read_edge_list(path)
    assert err.value.line == 3
    path.write_text("0 1 0.5\n")
    with pytest.raises(GraphFormatError) as err:
        read_edge_list(path)
    assert err.value.line == 1


def test_edge_list_comments_and_defaults(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("# a comment\n#users 4\n2 1\n")
    g = read_edge_list(path)
    assert g.n_users == 4 and g.tie(1, 2) == 1.0 and g.trust == (0.0,) * 4
