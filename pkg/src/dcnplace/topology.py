"""Data-center network topology generators (three-tier, fat-tree, DCell).

Topologies are immutable after construction. Node ids are integers assigned
in construction order, so two builds of the same spec are identical.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import shortest_path

KINDS = ("three_tier", "fat_tree", "dcell")


class InvalidSpecError(ValueError):
    pass


class UnsupportedSpecError(InvalidSpecError):
    pass


class NodeNotFoundError(KeyError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    kind: str = "fat_tree"
    fat_tree_k: int = 4
    core_count: int = 2
    agg_count: int = 4
    edge_count: int = 4
    hosts_per_edge: int = 4
    dcell_n: int = 4
    dcell_level: int = 1
    per_hop_latency_ms: float = 0.5

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise InvalidSpecError(f"unknown topology kind {self.kind!r}")
        if self.per_hop_latency_ms < 0:
            raise InvalidSpecError("per_hop_latency_ms must be >= 0")
        if self.kind == "fat_tree":
            if self.fat_tree_k < 2 or self.fat_tree_k % 2:
                raise InvalidSpecError(f"fat_tree_k must be even and >= 2, got {self.fat_tree_k}")
        elif self.kind == "three_tier":
            for name in ("core_count", "agg_count", "edge_count", "hosts_per_edge"):
                if getattr(self, name) < 1:
                    raise InvalidSpecError(f"{name} must be >= 1")
        else:
            if self.dcell_n < 1:
                raise InvalidSpecError("dcell_n must be >= 1")
            if self.dcell_level < 0:
                raise InvalidSpecError("dcell_level must be >= 0")
            if self.dcell_level > 1:
                raise UnsupportedSpecError("DCell is only supported up to level 1")


@dataclass(frozen=True)
class Node:
    id: int
    role: str  # host | edge | agg | core | dcell_switch
    name: str


@dataclass(frozen=True, eq=False)
class Topology:
    nodes: tuple[Node, ...]
    edges: tuple[tuple[int, int], ...]
    spec: TopologySpec
    host_ids: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "host_ids", tuple(n.id for n in self.nodes if n.role == "host"))

    @property
    def switch_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.role != "host")

    def role_counts(self) -> Counter:
        return Counter(n.role for n in self.nodes)

    def degree(self, node_id: int) -> int:
        return sum(1 for a, b in self.edges if node_id in (a, b))

    @cached_property
    def _hops(self) -> np.ndarray:
        n = len(self.nodes)
        a = np.array([e[0] for e in self.edges] + [e[1] for e in self.edges], dtype=np.int64)
        b = np.array([e[1] for e in self.edges] + [e[0] for e in self.edges], dtype=np.int64)
        adj = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n)).tocsr()
        return shortest_path(adj, method="D", unweighted=True, directed=False)

    def is_connected(self) -> bool:
        return bool(np.isfinite(self._hops).all())

    def _check(self, node_id: int) -> None:
        if not isinstance(node_id, (int, np.integer)) or not 0 <= node_id < len(self.nodes):
            raise NodeNotFoundError(node_id)

    def host_hop_matrix(self) -> np.ndarray:
        idx = np.array(self.host_ids)
        return self._hops[np.ix_(idx, idx)].astype(np.int64)

    def hop_histogram(self) -> dict[int, int]:
        """Counts of hop distances over unordered distinct host pairs."""
        m = self.host_hop_matrix()
        iu = np.triu_indices(len(m), k=1)
        vals, counts = np.unique(m[iu], return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def describe(self) -> str:
        counts = self.role_counts()
        lines = [
            f"kind: {self.spec.kind}",
            f"nodes: {len(self.nodes)}",
            f"edges: {len(self.edges)}",
            f"hosts: {len(self.host_ids)}",
            f"switches: {len(self.nodes) - len(self.host_ids)}",
        ]
        for role in ("core", "agg", "edge", "dcell_switch"):
            if counts.get(role):
                lines.append(f"  {role}: {counts[role]}")
        lines.append("host-pair hop histogram:")
        for hops, count in self.hop_histogram().items():
            lines.append(f"  {hops} hops: {count}")
        return "\n".join(lines)


def shortest_hops(t: Topology, a: int, b: int) -> int:
    t._check(a)
    t._check(b)
    d = t._hops[a, b]
    if not np.isfinite(d):
        raise ValueError(f"nodes {a} and {b} are disconnected")
    return int(d)


def path_latency_ms(t: Topology, a: int, b: int) -> float:
    return shortest_hops(t, a, b) * t.spec.per_hop_latency_ms


class _Builder:
    def __init__(self):
        self.nodes: list[Node] = []
        self.edges: list[tuple[int, int]] = []

    def add(self, role: str, name: str) -> int:
        nid = len(self.nodes)
        self.nodes.append(Node(nid, role, name))
        return nid

    def link(self, a: int, b: int) -> None:
        self.edges.append((min(a, b), max(a, b)))

    def finish(self, spec: TopologySpec) -> Topology:
        return Topology(tuple(self.nodes), tuple(self.edges), spec)


def _fat_tree(spec: TopologySpec) -> Topology:
    k = spec.fat_tree_k
    half = k // 2
    g = _Builder()
    core = [g.add("core", f"core{i}") for i in range(half * half)]
    for p in range(k):
        aggs = [g.add("agg", f"agg{p}_{i}") for i in range(half)]
        edges = [g.add("edge", f"edge{p}_{i}") for i in range(half)]
        # agg i of every pod reaches core group i
        for i, agg in enumerate(aggs):
            for j in range(half):
                g.link(core[i * half + j], agg)
        for agg in aggs:
            for e in edges:
                g.link(agg, e)
        for i, e in enumerate(edges):
            for h in range(half):
                g.link(e, g.add("host", f"host{p}_{i}_{h}"))
    return g.finish(spec)


def _three_tier(spec: TopologySpec) -> Topology:
    g = _Builder()
    core = [g.add("core", f"core{i}") for i in range(spec.core_count)]
    aggs = [g.add("agg", f"agg{i}") for i in range(spec.agg_count)]
    for c in core:
        for a in aggs:
            g.link(c, a)
    # edges attach to an agg pair (the usual dual-homed fan-out)
    n_pairs = max(1, spec.agg_count // 2)
    for i in range(spec.edge_count):
        e = g.add("edge", f"edge{i}")
        p = i % n_pairs
        for a in sorted({aggs[2 * p], aggs[min(2 * p + 1, spec.agg_count - 1)]}):
            g.link(a, e)
        for h in range(spec.hosts_per_edge):
            g.link(e, g.add("host", f"host{i}_{h}"))
    return g.finish(spec)


def _dcell(spec: TopologySpec) -> Topology:
    n = spec.dcell_n
    cells = 1 if spec.dcell_level == 0 else n + 1
    g = _Builder()
    hosts = []
    for c in range(cells):
        sw = g.add("dcell_switch", f"sw{c}")
        row = []
        for h in range(n):
            hid = g.add("host", f"host{c}_{h}")
            g.link(sw, hid)
            row.append(hid)
        hosts.append(row)
    if spec.dcell_level == 1:
        # host j-1 of cell i <-> host i of cell j, for every i < j
        for i in range(cells):
            for j in range(i + 1, cells):
                g.link(hosts[i][j - 1], hosts[j][i])
    return g.finish(spec)


def build_topology(spec: TopologySpec) -> Topology:
    spec.validate()
    if spec.kind == "fat_tree":
        return _fat_tree(spec)
    if spec.kind == "three_tier":
        return _three_tier(spec)
    return _dcell(spec)
