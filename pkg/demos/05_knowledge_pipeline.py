"""
Chunk, route, retrieve, formulate
=================================

Ingest two tiny corpora, route a query to the closer one, fetch the nearest
chunks, measure how long fetching them takes under a placement, and assemble a
formulation prompt with the offline mock backend.
"""

import numpy as np

from dcnplace import ChunkStore, FormulationRequest, formulate, retrieve_top_k, route
from dcnplace.env import EnvState, Placement, ServerProfile
from dcnplace.knowledge import retrieval_latency_ms

store = ChunkStore(embedding_dim=256)
store.ingest("fabric.txt", "network",
             "Fat-tree fabrics connect edge, aggregation and core switches. Hosts under one edge switch "
             "are two hops apart. Oversubscription at the core raises tail latency.", window=12, overlap=3)
store.ingest("storage.txt", "storage",
             "Solid state drives serve reads quickly but writes wear the flash. Replicas spread load. "
             "A busy server queues requests and every chunk it holds gets slower.", window=12, overlap=3)
print(f"{len(store)} chunks in {sorted(store.corpus_centroids)}")

query = "why does a busy server make chunk reads slower"
corpus = route(query, store)
hits = retrieve_top_k(store, query, 3, corpus=corpus)
print(f"\nrouted to {corpus!r}; top chunks:")
for c in hits:
    print(f"  [{c.chunk_id}] {c.text}")

# Two servers; chunk id k sits in placement slot k.
env = EnvState(
    servers=(ServerProfile(0, 10.0, 20.0, 2), ServerProfile(1, 25.0, 40.0, 2)),
    chunk_popularity=np.ones(len(store)), chunk_write_freq=np.ones(len(store)),
    load_factor_alpha=0.5,
)
ids = [c.chunk_id for c in hits]
for name, assignment in [("all on fast server", [0] * len(store)), ("alternating", [i % 2 for i in range(len(store))])]:
    print(f"fetch latency, {name}: {retrieval_latency_ms(store, env, Placement(assignment), ids):.2f} ms")

print("\n" + formulate(FormulationRequest(query, tuple(c.text for c in hits))).text)
