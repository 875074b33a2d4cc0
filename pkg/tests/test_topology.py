import itertools

import networkx as nx
import pytest

from dcnplace.topology import (InvalidSpecError, NodeNotFoundError, TopologySpec, UnsupportedSpecError,
                               build_topology, path_latency_ms, shortest_hops)


def as_graph(t):
    g = nx.Graph()
    g.add_nodes_from(n.id for n in t.nodes)
    g.add_edges_from(t.edges)
    return g


SPECS = [
    TopologySpec("fat_tree", fat_tree_k=2),
    TopologySpec("fat_tree", fat_tree_k=4),
    TopologySpec("fat_tree", fat_tree_k=6),
    TopologySpec("three_tier", core_count=2, agg_count=4, edge_count=4, hosts_per_edge=3),
    TopologySpec("three_tier", core_count=1, agg_count=1, edge_count=1, hosts_per_edge=1),
    TopologySpec("three_tier", core_count=3, agg_count=3, edge_count=5, hosts_per_edge=2),
    TopologySpec("dcell", dcell_n=2, dcell_level=1),
    TopologySpec("dcell", dcell_n=4, dcell_level=1),
    TopologySpec("dcell", dcell_n=3, dcell_level=0),
]


def fat_tree_counts(k):
    # enumerate the canonical construction pod by pod
    hosts = edge = agg = 0
    for _pod in range(k):
        agg += k // 2
        for _e in range(k // 2):
            edge += 1
            hosts += k // 2
    return hosts, edge, agg, (k // 2) ** 2


@pytest.mark.parametrize("k", [2, 4, 6, 8])
def test_fat_tree_counts(k):
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=k))
    hosts, edge, agg, core = fat_tree_counts(k)
    c = t.role_counts()
    assert (len(t.host_ids), c["edge"], c["agg"], c["core"]) == (hosts, edge, agg, core)


def test_fat_tree_k4_example():
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=4))
    assert len(t.host_ids) == 16
    assert len(t.switch_ids) == 20


def test_fat_tree_k2_example():
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=2))
    c = t.role_counts()
    assert (c["host"], c["edge"], c["agg"], c["core"]) == (2, 2, 2, 1)


def test_dcell_level1_host_count():
    t = build_topology(TopologySpec("dcell", dcell_n=2, dcell_level=1))
    assert len(t.host_ids) == 2 * 3
    assert t.role_counts()["dcell_switch"] == 3


def test_three_tier_counts():
    t = build_topology(TopologySpec("three_tier", core_count=2, agg_count=4, edge_count=4, hosts_per_edge=3))
    c = t.role_counts()
    assert (c["core"], c["agg"], c["edge"], c["host"]) == (2, 4, 4, 12)


def test_odd_fat_tree_rejected():
    with pytest.raises(InvalidSpecError):
        build_topology(TopologySpec("fat_tree", fat_tree_k=3))


def test_dcell_level2_unsupported():
    with pytest.raises(UnsupportedSpecError):
        build_topology(TopologySpec("dcell", dcell_n=2, dcell_level=2))


@pytest.mark.parametrize("kw", [dict(kind="mesh"), dict(kind="three_tier", edge_count=0),
                                dict(per_hop_latency_ms=-1.0), dict(kind="fat_tree", fat_tree_k=0)])
def test_invalid_specs(kw):
    with pytest.raises(InvalidSpecError):
        build_topology(TopologySpec(**kw))


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}")
def test_structure_invariants(spec):
    t = build_topology(spec)
    g = as_graph(t)
    assert nx.is_connected(g)
    assert t.is_connected()
    assert len({n.id for n in t.nodes}) == len(t.nodes)
    assert len(set(t.edges)) == len(t.edges)
    assert all(g.degree(h) >= 1 for h in t.host_ids)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: f"{s.kind}")
def test_hops_match_networkx_bfs(spec):
    t = build_topology(spec)
    lengths = dict(nx.all_pairs_shortest_path_length(as_graph(t)))
    for a, b in itertools.combinations_with_replacement(t.host_ids, 2):
        assert shortest_hops(t, a, b) == lengths[a][b]


@pytest.mark.parametrize("spec", [s for s in SPECS if len(build_topology(s).host_ids) <= 20], ids=lambda s: s.kind)
def test_symmetry_and_triangle_inequality(spec):
    t = build_topology(spec)
    hosts = t.host_ids
    for a, b in itertools.product(hosts, repeat=2):
        assert shortest_hops(t, a, b) == shortest_hops(t, b, a)
    for a, b, c in itertools.product(hosts, repeat=3):
        assert shortest_hops(t, a, c) <= shortest_hops(t, a, b) + shortest_hops(t, b, c)


def test_fat_tree_hop_values():
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=4))
    values = {shortest_hops(t, a, b) for a, b in itertools.product(t.host_ids, repeat=2)}
    assert values == {0, 2, 4, 6}


def test_fat_tree_named_pairs():
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=4))
    by_name = {n.name: n.id for n in t.nodes}
    assert shortest_hops(t, by_name["host0_0_0"], by_name["host0_0_0"]) == 0
    assert shortest_hops(t, by_name["host0_0_0"], by_name["host0_0_1"]) == 2
    assert shortest_hops(t, by_name["host0_0_0"], by_name["host0_1_0"]) == 4
    assert shortest_hops(t, by_name["host0_0_0"], by_name["host3_1_1"]) == 6


def test_path_latency():
    t = build_topology(TopologySpec("fat_tree", fat_tree_k=4, per_hop_latency_ms=0.5))
    h = t.host_ids
    assert path_latency_ms(t, h[0], h[0]) == 0.0
    assert path_latency_ms(t, h[0], h[1]) == 1.0
    t0 = build_topology(TopologySpec("fat_tree", fat_tree_k=4, per_hop_latency_ms=0.0))
    assert all(path_latency_ms(t0, a, b) == 0.0 for a, b in itertools.product(t0.host_ids, repeat=2))


def test_unknown_node():
    t = build_topology(TopologySpec())
    with pytest.raises(NodeNotFoundError):
        shortest_hops(t, 0, 10_000)
    with pytest.raises(NodeNotFoundError):
        path_latency_ms(t, -1, 0)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.kind)
def test_deterministic_construction(spec):
    a, b = build_topology(spec), build_topology(spec)
    assert a.nodes == b.nodes
    assert a.edges == b.edges


def test_describe_reports_histogram():
    text = build_topology(TopologySpec()).describe()
    assert "hosts: 16" in text
    assert "switches: 20" in text
    assert "6 hops: 96" in text
