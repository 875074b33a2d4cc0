"""
Touring the three fabric generators
===================================

Build a fat-tree, a three-tier tree and a level-1 DCell, then look at how far
hosts sit from each other. Only hop counts matter downstream: a chunk's read
latency pays ``hops * per_hop_latency_ms`` on top of the server's own latency.
"""

import numpy as np

from dcnplace import TopologySpec, build_topology, shortest_hops

# A k=4 fat-tree: 4 pods, 16 hosts, 20 switches.
fat = build_topology(TopologySpec("fat_tree", fat_tree_k=4))
print(fat.describe())
print()

# Hosts under the same edge switch are 2 hops apart, same pod 4, across pods 6.
h = fat.host_ids
print("hops host0 -> host1 :", shortest_hops(fat, h[0], h[1]))
print("hops host0 -> host2 :", shortest_hops(fat, h[0], h[2]))
print("hops host0 -> host15:", shortest_hops(fat, h[0], h[15]))
print()

# The classic three-tier tree: edges are dual-homed to a pair of aggregation switches.
tree = build_topology(TopologySpec("three_tier", core_count=2, agg_count=4, edge_count=4, hosts_per_edge=3))
print(tree.describe())
print()

# DCell_1 with n=4: five cells of four hosts, cells wired host-to-host.
dcell = build_topology(TopologySpec("dcell", dcell_n=4, dcell_level=1))
print(dcell.describe())

# The host-to-host hop matrix is what the scenario generator reads.
m = dcell.host_hop_matrix()
print("\nDCell mean host distance: %.2f hops" % m[np.triu_indices_from(m, 1)].mean())
