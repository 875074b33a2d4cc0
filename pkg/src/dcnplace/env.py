"""Knowledge-chunk placement problem: latency model, reward, baselines."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .topology import Topology, shortest_hops

BRUTE_FORCE_LIMIT = 10**6


class InstanceTooLargeError(ValueError):
    pass


class InvalidConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ServerProfile:
    server_id: int
    base_read_ms: float
    base_write_ms: float
    capacity: int
    gateway_hops: int = 0

    def __post_init__(self):
        if not (self.base_read_ms > 0 and self.base_write_ms > 0):
            raise ValueError("base latencies must be positive")
        if self.capacity < 1:
            raise ValueError("capacity must be >= 1")
        if self.gateway_hops < 0:
            raise ValueError("gateway_hops must be >= 0")


@dataclass(frozen=True, eq=False)
class EnvState:
    servers: tuple[ServerProfile, ...]
    chunk_popularity: tuple[float, ...]
    chunk_write_freq: tuple[float, ...]
    reward_weights: tuple[float, float] = (0.5, 0.5)
    load_factor_alpha: float = 1.0
    per_hop_latency_ms: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "servers", tuple(self.servers))
        object.__setattr__(self, "chunk_popularity", tuple(float(x) for x in self.chunk_popularity))
        object.__setattr__(self, "chunk_write_freq", tuple(float(x) for x in self.chunk_write_freq))
        object.__setattr__(self, "reward_weights", tuple(float(x) for x in self.reward_weights))
        if not self.servers or not self.chunk_popularity:
            raise ValueError("need at least one server and one chunk")
        if len(self.chunk_write_freq) != len(self.chunk_popularity):
            raise ValueError("chunk_write_freq and chunk_popularity lengths differ")
        if min(self.chunk_popularity) <= 0 or min(self.chunk_write_freq) <= 0:
            raise ValueError("chunk frequencies must be positive")
        w_r, w_w = self.reward_weights
        if w_r < 0 or w_w < 0 or abs(w_r + w_w - 1.0) > 1e-9:
            raise ValueError("reward weights must be nonnegative and sum to 1")
        if self.load_factor_alpha < 0 or self.per_hop_latency_ms < 0:
            raise ValueError("alpha and per-hop latency must be nonnegative")

    @property
    def n_servers(self) -> int:
        return len(self.servers)

    @property
    def n_chunks(self) -> int:
        return len(self.chunk_popularity)

    def arrays(self) -> dict[str, np.ndarray]:
        s = self.servers
        return {
            "read": np.array([x.base_read_ms for x in s]),
            "write": np.array([x.base_write_ms for x in s]),
            "capacity": np.array([x.capacity for x in s], dtype=float),
            "path": np.array([x.gateway_hops for x in s], dtype=float) * self.per_hop_latency_ms,
            "pop": np.array(self.chunk_popularity),
            "wf": np.array(self.chunk_write_freq),
        }

    def __eq__(self, other):
        if not isinstance(other, EnvState):
            return NotImplemented
        return (self.servers, self.chunk_popularity, self.chunk_write_freq, self.reward_weights,
                self.load_factor_alpha, self.per_hop_latency_ms) == (
            other.servers, other.chunk_popularity, other.chunk_write_freq, other.reward_weights,
            other.load_factor_alpha, other.per_hop_latency_ms)


@dataclass(frozen=True)
class Placement:
    assignment: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))

    def check(self, env: EnvState) -> None:
        if len(self.assignment) != env.n_chunks:
            raise ValueError(f"placement has {len(self.assignment)} chunks, env has {env.n_chunks}")
        if any(i < 0 or i >= env.n_servers for i in self.assignment):
            raise ValueError("server index out of range")


@dataclass(frozen=True)
class PlacementOutcome:
    mean_read_ms: float
    mean_write_ms: float
    reward: float
    per_server_load: tuple[int, ...] = field(default=())


def chunk_latencies(env: EnvState, p: Placement) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-chunk read and write latency under load coupling, plus server loads."""
    p.check(env)
    a = env.arrays()
    idx = np.asarray(p.assignment, dtype=np.int64)
    load = np.bincount(idx, minlength=env.n_servers)
    congestion = 1.0 + env.load_factor_alpha * load / a["capacity"]
    read = (a["read"] * congestion + a["path"])[idx]
    write = (a["write"] * congestion + a["path"])[idx]
    return read, write, load


def evaluate_placement(env: EnvState, p: Placement) -> PlacementOutcome:
    read, write, load = chunk_latencies(env, p)
    pop = np.asarray(env.chunk_popularity)
    wf = np.asarray(env.chunk_write_freq)
    mean_read = float(pop @ read / pop.sum())
    mean_write = float(wf @ write / wf.sum())
    w_r, w_w = env.reward_weights
    # one rounded division instead of two; the worked examples then come out exact
    reward = (w_r * mean_write + w_w * mean_read) / (mean_read * mean_write)
    return PlacementOutcome(mean_read, mean_write, reward, tuple(int(x) for x in load))


def random_placement(env: EnvState, rng: np.random.Generator) -> Placement:
    return Placement(rng.integers(0, env.n_servers, size=env.n_chunks))


def greedy_placement(env: EnvState) -> Placement:
    """Everything on the server with the lowest unloaded read cost (gateway path included)."""
    a = env.arrays()
    best = int(np.argmin(a["read"] + a["path"]))  # argmin takes the first index on ties
    return Placement((best,) * env.n_chunks)


def brute_force_optimal(env: EnvState) -> tuple[Placement, PlacementOutcome]:
    n, k = env.n_servers, env.n_chunks
    if n**k > BRUTE_FORCE_LIMIT:
        raise InstanceTooLargeError(f"{n}^{k} placements exceeds the limit of {BRUTE_FORCE_LIMIT}")
    best = None
    # product() yields assignments in lexicographic order; strict > keeps the first maximum
    for assignment in itertools.product(range(n), repeat=k):
        p = Placement(assignment)
        out = evaluate_placement(env, p)
        if best is None or out.reward > best[1].reward:
            best = (p, out)
    return best


@dataclass(frozen=True)
class ScenarioConfig:
    """Ranges that episodes are drawn from.

    With ``heterogeneity="tiered"`` server i gets its own latency range: a nominal
    value interpolated across ``read_ms``/``write_ms`` by server index, widened by
    ``±jitter``. With ``"iid"`` every server draws from the full range.
    """

    n_servers: int = 8
    n_chunks: int = 16
    read_ms: tuple[float, float] = (8.0, 40.0)
    write_ms: tuple[float, float] = (16.0, 80.0)
    heterogeneity: str = "tiered"
    jitter: float = 0.1
    capacity: tuple[int, int] = (4, 4)
    alpha: tuple[float, float] = (0.35, 0.45)
    write_freq: tuple[float, float] = (0.5, 1.5)
    zipf_s: float = 1.0
    w_read: float = 0.5
    gateway_host: int = 0

    def validate(self) -> None:
        if self.n_servers < 1 or self.n_chunks < 1:
            raise InvalidConfigError("n_servers and n_chunks must be >= 1")
        for name in ("read_ms", "write_ms", "capacity", "alpha", "write_freq"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise InvalidConfigError(f"{name}: empty range [{lo}, {hi}]")
        if self.read_ms[0] <= 0 or self.write_ms[0] <= 0:
            raise InvalidConfigError("latency ranges must be positive")
        if self.heterogeneity not in ("tiered", "iid"):
            raise InvalidConfigError(f"heterogeneity must be 'tiered' or 'iid', got {self.heterogeneity!r}")
        if not 0.0 <= self.jitter < 1.0:
            raise InvalidConfigError("jitter must lie in [0, 1)")
        if self.write_freq[0] <= 0:
            raise InvalidConfigError("write_freq range must be positive")
        if self.capacity[0] < 1:
            raise InvalidConfigError("capacity range must be >= 1")
        if self.alpha[0] < 0:
            raise InvalidConfigError("alpha range must be nonnegative")
        if self.zipf_s < 0:
            raise InvalidConfigError("zipf_s must be nonnegative")
        if not 0.0 <= self.w_read <= 1.0:
            raise InvalidConfigError("w_read must lie in [0, 1]")

    def latency_ranges(self, which: str) -> np.ndarray:
        """Per-server (lo, hi) rows for ``which`` in {"read", "write"}."""
        lo, hi = self.read_ms if which == "read" else self.write_ms
        n = self.n_servers
        if self.heterogeneity == "iid":
            return np.tile([lo, hi], (n, 1)).astype(float)
        nominal = np.linspace(lo, hi, n) if n > 1 else np.array([(lo + hi) / 2.0])
        return np.stack([nominal * (1 - self.jitter), nominal * (1 + self.jitter)], axis=1)


def server_hosts(topology: Topology, cfg: ScenarioConfig) -> tuple[int, list[int]]:
    """Gateway host and the hosts that act as storage servers (the next N hosts after it)."""
    hosts = list(topology.host_ids)
    if not 0 <= cfg.gateway_host < len(hosts):
        raise InvalidConfigError(f"gateway_host {cfg.gateway_host} out of range")
    gateway = hosts[cfg.gateway_host]
    others = [h for h in hosts if h != gateway]
    if cfg.n_servers > len(others):
        if cfg.n_servers > len(hosts):
            raise InvalidConfigError(f"topology has only {len(hosts)} hosts for {cfg.n_servers} servers")
        others = hosts  # the gateway may itself store chunks
    return gateway, others[: cfg.n_servers]


def zipf_popularity(k: int, s: float) -> np.ndarray:
    ranks = np.arange(1, k + 1, dtype=float)
    w = ranks ** (-s)
    return w / w.sum()


def sample_scenario(cfg: ScenarioConfig, topology: Topology, rng: np.random.Generator) -> EnvState:
    cfg.validate()
    gateway, hosts = server_hosts(topology, cfg)
    n = cfg.n_servers
    rr, wr = cfg.latency_ranges("read"), cfg.latency_ranges("write")
    read = rng.uniform(rr[:, 0], rr[:, 1])
    write = rng.uniform(wr[:, 0], wr[:, 1])
    cap = rng.integers(cfg.capacity[0], cfg.capacity[1] + 1, size=n)
    alpha = float(rng.uniform(*cfg.alpha))
    wf = rng.uniform(*cfg.write_freq, size=cfg.n_chunks)
    servers = tuple(
        ServerProfile(h, float(read[i]), float(write[i]), int(cap[i]), shortest_hops(topology, gateway, h))
        for i, h in enumerate(hosts)
    )
    return EnvState(
        servers=servers,
        chunk_popularity=tuple(zipf_popularity(cfg.n_chunks, cfg.zipf_s)),
        chunk_write_freq=tuple(wf),
        reward_weights=(cfg.w_read, 1.0 - cfg.w_read),
        load_factor_alpha=alpha,
        per_hop_latency_ms=topology.spec.per_hop_latency_ms,
    )


class FeatureScaler:
    """Standardizes EnvState vectors using the fixed statistics of the scenario ranges.

    Layout: base_read (N) | base_write (N) | capacity (N) | gateway path ms (N)
    | popularity (K) | write freq (K) | alpha | w_read.
    """

    def __init__(self, cfg: ScenarioConfig, per_hop_latency_ms: float = 0.0, max_hops: int = 6):
        def uniform(lo, hi):
            lo, hi = np.asarray(lo, float), np.asarray(hi, float)
            sd = (hi - lo) / np.sqrt(12.0)
            return (lo + hi) / 2.0, np.where(sd > 0, sd, 1.0)

        n, k = cfg.n_servers, cfg.n_chunks
        rr, wr = cfg.latency_ranges("read"), cfg.latency_ranges("write")
        path_scale = per_hop_latency_ms * max_hops / 2.0 or 1.0
        parts = [
            uniform(rr[:, 0], rr[:, 1]),
            uniform(wr[:, 0], wr[:, 1]),
            uniform(*([v] * n for v in cfg.capacity)),
            (np.zeros(n), np.full(n, path_scale)),
            (np.full(k, 1.0 / k), np.full(k, 1.0 / k)),
            uniform(*([v] * k for v in cfg.write_freq)),
            uniform([cfg.alpha[0]], [cfg.alpha[1]]),
            (np.array([0.5]), np.array([0.5])),
        ]
        self.mean = np.concatenate([mu for mu, _ in parts])
        self.scale = np.concatenate([sd for _, sd in parts])
        self.dim = len(self.mean)

    def __call__(self, env: EnvState) -> np.ndarray:
        a = env.arrays()
        raw = np.concatenate([
            a["read"], a["write"], a["capacity"], a["path"], a["pop"] / a["pop"].sum(), a["wf"],
            [env.load_factor_alpha, env.reward_weights[0]],
        ])
        if raw.shape != self.mean.shape:
            raise ValueError(f"env does not match scaler layout ({raw.size} vs {self.dim})")
        return (raw - self.mean) / self.scale
