"""Knowledge-chunk store for the RAG side: chunking, hashed embeddings, retrieval, routing.

Also holds the formulation client: a deterministic mock and a remote
chat-completion backend behind the same ``formulate`` call.
"""

from __future__ import annotations

import hashlib
import json
import os
import string
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import EnvState, Placement, chunk_latencies

DEFAULT_DIM = 256
STORE_HEADER = "#dcnplace-store v1"
_PUNCT = string.punctuation


class StoreError(ValueError):
    pass


class RemoteLLMError(RuntimeError):
    def __init__(self, message: str, status: int | None = None):
        super().__init__(message if status is None else f"{message} (status {status})")
        self.status = status


def tokenize(text: str) -> list[str]:
    out = []
    for w in text.lower().split():
        w = w.strip(_PUNCT)
        if w:
            out.append(w)
    return out


def _token_hash(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "big")


def embed(text: str, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Signed hashed bag-of-words, L2-normalized. Empty input gives the zero vector."""
    v = np.zeros(dim)
    for tok in tokenize(text):
        h = _token_hash(tok)
        v[h % dim] += -1.0 if h >> 63 else 1.0
    norm = np.linalg.norm(v)
    return v / norm if norm > 0 else v


def semantic_distance(u, v) -> float:
    """1 - cosine similarity; a zero vector is at distance 1 from everything."""
    u, v = np.asarray(u, dtype=float), np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 1.0
    return float(np.clip(1.0 - (u @ v) / (nu * nv), 0.0, 2.0))


@dataclass(eq=False)
class Chunk:
    chunk_id: int
    doc_id: str
    corpus: str
    text: str
    embedding: np.ndarray
    server_index: int | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("chunk text must be nonempty")


def chunk_document(doc_id: str, corpus: str, text: str, window: int = 64, overlap: int = 16,
                   dim: int = DEFAULT_DIM, start_id: int = 0) -> list[Chunk]:
    if window < 1 or not 0 <= overlap < window:
        raise ValueError("need window >= 1 and 0 <= overlap < window")
    words = tokenize(text)
    # a chunk starts every stride words; a text that fits in one window stays one chunk
    starts = range(0, len(words), window - overlap) if len(words) > window else range(min(len(words), 1))
    chunks = []
    for start in starts:
        piece = " ".join(words[start:start + window])
        chunks.append(Chunk(start_id + len(chunks), doc_id, corpus, piece, embed(piece, dim)))
    return chunks


@dataclass
class ChunkStore:
    embedding_dim: int = DEFAULT_DIM
    chunks: list[Chunk] = field(default_factory=list)

    def __post_init__(self):
        self._refresh()

    def _refresh(self) -> None:
        ids = [c.chunk_id for c in self.chunks]
        if len(set(ids)) != len(ids):
            raise StoreError("duplicate chunk ids")
        for c in self.chunks:
            if c.embedding.shape != (self.embedding_dim,):
                raise StoreError(f"chunk {c.chunk_id} has embedding dim {c.embedding.shape}, store uses {self.embedding_dim}")
        self._by_id = {c.chunk_id: c for c in self.chunks}
        groups: dict[str, list[np.ndarray]] = {}
        for c in self.chunks:
            groups.setdefault(c.corpus, []).append(c.embedding)
        self.corpus_centroids = {k: np.mean(v, axis=0) for k, v in sorted(groups.items())}

    def __len__(self) -> int:
        return len(self.chunks)

    @property
    def next_id(self) -> int:
        return max(self._by_id, default=-1) + 1

    def get(self, chunk_id: int) -> Chunk:
        try:
            return self._by_id[chunk_id]
        except KeyError:
            raise StoreError(f"unknown chunk id {chunk_id}") from None

    def add(self, chunks) -> None:
        self.chunks.extend(chunks)
        self._refresh()

    def ingest(self, doc_id: str, corpus: str, text: str, window: int = 64, overlap: int = 16) -> list[Chunk]:
        new = chunk_document(doc_id, corpus, text, window, overlap, self.embedding_dim, self.next_id)
        self.add(new)
        return new

    def assign_servers(self, placement: Placement) -> None:
        """Snapshot a placement into the chunks (chunk id k gets placement.assignment[k])."""
        for c in self.chunks:
            c.server_index = placement.assignment[c.chunk_id] if c.chunk_id < len(placement.assignment) else None

    def distances(self, query_vec: np.ndarray) -> np.ndarray:
        q = np.asarray(query_vec, dtype=float)
        if q.shape != (self.embedding_dim,):
            raise ValueError(f"query dim {q.shape} != store dim {self.embedding_dim}")
        # per-chunk rather than one matmul, so equal distances tie exactly and ids decide
        return np.array([semantic_distance(q, c.embedding) for c in self.chunks])

    def save(self, path) -> None:
        lines = [f"{STORE_HEADER} dim={self.embedding_dim}"]
        for c in self.chunks:
            for name in ("doc_id", "corpus"):
                if any(ch in getattr(c, name) for ch in "\t\n\r"):
                    raise StoreError(f"{name} of chunk {c.chunk_id} contains a tab or newline")
            emb = " ".join(repr(float(x)) for x in c.embedding)
            server = -1 if c.server_index is None else c.server_index
            lines.append(f"{c.chunk_id}\t{c.doc_id}\t{c.corpus}\t{server}\t{emb}\t{c.text}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "ChunkStore":
        raw = Path(path).read_text(encoding="utf-8").splitlines()
        if not raw or not raw[0].startswith(STORE_HEADER + " dim="):
            raise StoreError(f"{path}: missing or unsupported store header")
        dim = int(raw[0].split("dim=", 1)[1])
        chunks = []
        for lineno, line in enumerate(raw[1:], start=2):
            if not line:
                continue
            parts = line.split("\t", 5)
            if len(parts) != 6:
                raise StoreError(f"{path}:{lineno}: expected 6 tab-separated fields")
            cid, doc, corpus, server, emb, text = parts
            vec = np.array([float(x) for x in emb.split()])
            chunks.append(Chunk(int(cid), doc, corpus, text, vec, None if int(server) < 0 else int(server)))
        return cls(dim, chunks)


def retrieve_top_k(store: ChunkStore, query: str, k: int, corpus: str | None = None) -> list[Chunk]:
    """The k nearest chunks by semantic distance, ties broken by chunk id.

    ``corpus`` restricts the search to one corpus (e.g. the one ``route`` picked).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not len(store):
        return []
    d = store.distances(embed(query, store.embedding_dim))
    ids = np.array([c.chunk_id for c in store.chunks])
    order = np.lexsort((ids, d))
    if corpus is not None:
        order = [i for i in order if store.chunks[i].corpus == corpus]
    return [store.chunks[i] for i in order[:k]]


def route(query: str, store: ChunkStore) -> str:
    """Corpus whose centroid is nearest the query; ties go to the smallest corpus id."""
    if not store.corpus_centroids:
        raise StoreError("store is empty")
    q = embed(query, store.embedding_dim)
    return min(store.corpus_centroids, key=lambda name: (semantic_distance(q, store.corpus_centroids[name]), name))


def retrieval_latency_ms(store: ChunkStore, env: EnvState, placement: Placement, chunk_ids) -> float:
    """Unweighted mean read latency of the fetched chunks; chunk id k is placement slot k."""
    chunk_ids = list(chunk_ids)
    if not chunk_ids:
        raise ValueError("no chunks fetched")
    for cid in chunk_ids:
        store.get(cid)
        if not 0 <= cid < env.n_chunks:
            raise StoreError(f"chunk id {cid} has no placement slot (K={env.n_chunks})")
    read, _, _ = chunk_latencies(env, placement)
    return float(np.mean(read[chunk_ids]))


OBJECTIVE_SKELETON = "maximize w_r/L_read + w_w/L_write subject to assignment constraints"
NO_KNOWLEDGE = "(no external knowledge retrieved)"


@dataclass(frozen=True)
class FormulationRequest:
    description: str
    retrieved: tuple[str, ...] = ()


@dataclass(frozen=True)
class FormulationResult:
    text: str
    backend: str


def build_prompt(req: FormulationRequest) -> str:
    lines = ["Operator request:", req.description.strip(), "", "External knowledge:"]
    if req.retrieved:
        lines += [f"[{i}] {t}" for i, t in enumerate(req.retrieved, start=1)]
    else:
        lines.append(NO_KNOWLEDGE)
    lines += ["", "Formulate the optimization problem: objective, decision variables, constraints, "
              "and every factor that affects read and write latency."]
    return "\n".join(lines)


def _mock(req: FormulationRequest) -> str:
    return "\n".join([
        f"Objective: {OBJECTIVE_SKELETON}",
        "Decision variable: x[k] in {0..N-1}, the server holding knowledge chunk k.",
        "",
        build_prompt(req),
    ])


def _remote(req: FormulationRequest, cfg) -> str:
    url = os.environ.get(cfg.url_env)
    if not url:
        raise RemoteLLMError(f"endpoint not configured: set {cfg.url_env}")
    body = json.dumps({
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": "You formulate data-center network optimization problems."},
            {"role": "user", "content": build_prompt(req)},
        ],
    }).encode()
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(cfg.key_env)
    if key:
        headers["Authorization"] = f"Bearer {key}"
    request = urllib.request.Request(url, data=body, headers=headers, method="POST")
    try:
        with urllib.request.urlopen(request, timeout=cfg.timeout_s) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as e:
        raise RemoteLLMError("remote backend rejected the request", e.code) from None
    except (urllib.error.URLError, OSError) as e:
        raise RemoteLLMError(f"remote backend unreachable: {e}") from None
    except json.JSONDecodeError:
        raise RemoteLLMError("remote backend returned invalid JSON") from None
    try:
        return payload["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        raise RemoteLLMError("remote response has no choices[0].message.content") from None


def formulate(req: FormulationRequest, backend_cfg=None) -> FormulationResult:
    from .config import LLMConfig

    cfg = backend_cfg or LLMConfig()
    if cfg.backend == "mock":
        return FormulationResult(_mock(req), "mock")
    if cfg.backend == "remote":
        return FormulationResult(_remote(req, cfg), "remote")
    raise ValueError(f"unknown backend {cfg.backend!r}")
