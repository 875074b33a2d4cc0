"""Diffusion actor: a state-conditioned denoiser turning Gaussian noise into placement logits.

Steps are 1-indexed (t = 1..T) to match the usual DDPM notation; index t-1
into the schedule arrays.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import Placement
from .nn import ACTIVATIONS, MLP


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    betas: np.ndarray
    alphas: np.ndarray = field(init=False)
    alpha_bars: np.ndarray = field(init=False)
    posterior_sigmas: np.ndarray = field(init=False)

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=float)
        if betas.ndim != 1 or betas.size == 0:
            raise ValueError("betas must be a nonempty 1-d sequence")
        if not ((betas > 0) & (betas < 1)).all() or (np.diff(betas) < 0).any():
            raise ValueError("betas must be nondecreasing and lie in (0, 1)")
        alphas = 1.0 - betas
        alpha_bars = np.cumprod(alphas)
        prev = np.concatenate([[1.0], alpha_bars[:-1]])
        sigmas = np.sqrt(betas * (1.0 - prev) / (1.0 - alpha_bars))
        object.__setattr__(self, "betas", betas)
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "alpha_bars", alpha_bars)
        object.__setattr__(self, "posterior_sigmas", sigmas)

    @property
    def T(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        return 1.0 if t == 0 else float(self.alpha_bars[t - 1])


def make_schedule(T: int = 5, beta_min: float = 0.1, beta_max: float = 0.5) -> NoiseSchedule:
    if T < 1:
        raise ValueError("T must be >= 1")
    if not 0 < beta_min <= beta_max < 1:
        raise ValueError(f"need 0 < beta_min <= beta_max < 1, got {beta_min}, {beta_max}")
    return NoiseSchedule(np.linspace(beta_min, beta_max, T))


def _check_step(t: int, s: NoiseSchedule, allow_zero: bool = False) -> None:
    if not (0 if allow_zero else 1) <= t <= s.T:
        raise ValueError(f"step {t} outside [1, {s.T}]")


def forward_noise(x0: np.ndarray, t: int, s: NoiseSchedule, rng: np.random.Generator) -> np.ndarray:
    """Sample x_t ~ q(x_t | x_0) in closed form. t=0 returns x0 unchanged."""
    _check_step(t, s, allow_zero=True)
    x0 = np.asarray(x0, dtype=float)
    if t == 0:
        return x0.copy()
    ab = s.alpha_bar(t)
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * rng.standard_normal(x0.shape)


def time_embedding(t: int, dim: int) -> np.ndarray:
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half, 1))
    emb = np.concatenate([np.sin(t * freqs), np.cos(t * freqs)])
    return np.pad(emb, (0, dim - emb.size))


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Epsilon-prediction network over inputs [action | state | time embedding]."""

    denoiser: MLP
    n_chunks: int
    n_servers: int
    state_dim: int
    time_dim: int = 16

    def __post_init__(self):
        want = self.action_dim + self.state_dim + self.time_dim
        if self.denoiser.in_dim != want or self.denoiser.out_dim != self.action_dim:
            raise ValueError(
                f"denoiser maps {self.denoiser.in_dim}->{self.denoiser.out_dim}, expected {want}->{self.action_dim}")

    @property
    def action_dim(self) -> int:
        return self.n_chunks * self.n_servers

    def with_denoiser(self, denoiser: MLP) -> "PolicyParams":
        return PolicyParams(denoiser, self.n_chunks, self.n_servers, self.state_dim, self.time_dim)


def init_policy(n_chunks: int, n_servers: int, state_dim: int, rng: np.random.Generator,
                hidden=(128, 128), time_dim: int = 16, activation: str = "silu") -> PolicyParams:
    a = n_chunks * n_servers
    net = MLP.init((a + state_dim + time_dim, *hidden, a), rng, activation)
    return PolicyParams(net, n_chunks, n_servers, state_dim, time_dim)


def zero_policy(n_chunks: int, n_servers: int, state_dim: int, hidden=(8,), time_dim: int = 16) -> PolicyParams:
    a = n_chunks * n_servers
    return PolicyParams(MLP.zeros((a + state_dim + time_dim, *hidden, a)), n_chunks, n_servers, state_dim, time_dim)


def _as_batch(state: np.ndarray, p: PolicyParams) -> np.ndarray:
    state = np.atleast_2d(np.asarray(state, dtype=float))
    if state.shape[1] != p.state_dim:
        raise ValueError(f"state has {state.shape[1]} features, policy expects {p.state_dim}")
    return state


def _predict_eps(x_flat, t, state, p: PolicyParams):
    temb = np.broadcast_to(time_embedding(t, p.time_dim), (len(x_flat), p.time_dim))
    return p.denoiser.forward(np.concatenate([x_flat, state, temb], axis=1))


def _step(x_flat, t, state, p, s: NoiseSchedule, z):
    eps, cache = _predict_eps(x_flat, t, state, p)
    c1 = 1.0 / np.sqrt(s.alphas[t - 1])
    c2 = s.betas[t - 1] / np.sqrt(1.0 - s.alpha_bars[t - 1])
    x_prev = c1 * (x_flat - c2 * eps)
    if z is not None:
        x_prev = x_prev + s.posterior_sigmas[t - 1] * z
    return x_prev, cache


def denoise_step(x_t: np.ndarray, t: int, state: np.ndarray, p: PolicyParams, s: NoiseSchedule,
                 rng: np.random.Generator | None = None, stochastic: bool = False) -> np.ndarray:
    """One reverse step x_t -> x_{t-1}. Accepts a single (K, N) action or a batch (B, K, N)."""
    _check_step(t, s)
    x_t = np.asarray(x_t, dtype=float)
    single = x_t.ndim == 2
    xb = x_t.reshape(1 if single else x_t.shape[0], -1)
    if xb.shape[1] != p.action_dim:
        raise ValueError(f"action has {xb.shape[1]} entries, policy expects {p.action_dim}")
    state = _as_batch(state, p)
    if len(state) != len(xb):
        raise ValueError("state and action batch sizes differ")
    z = rng.standard_normal(xb.shape) if stochastic and t > 1 else None
    out, _ = _step(xb, t, state, p, s, z)
    out = out.reshape(-1, p.n_chunks, p.n_servers)
    return out[0] if single else out


@dataclass
class Chain:
    """Recorded reverse chain: enough to backpropagate from x_0 to denoiser weights."""

    caches: list  # caches[j] belongs to step t = T - j
    x0: np.ndarray
    bound: float | None = None


def _run_chain(state, p: PolicyParams, s: NoiseSchedule, rng, stochastic, record):
    b = len(state)
    x = rng.standard_normal((b, p.action_dim))
    caches = []
    for t in range(s.T, 0, -1):
        z = rng.standard_normal(x.shape) if stochastic and t > 1 else None
        x, cache = _step(x, t, state, p, s, z)
        if record:
            caches.append(cache)
    return x, (Chain(caches, x) if record else None)


def sample_action(state: np.ndarray, p: PolicyParams, s: NoiseSchedule, rng: np.random.Generator,
                  stochastic: bool = False, record: bool = False, bound: float | None = None):
    """Draw x_T ~ N(0, I) and denoise down to x_0.

    A 1-d state gives (K, N) logits; a (B, S) batch gives (B, K, N). With
    ``record=True`` returns ``(logits, Chain)`` for ``chain_backward``.
    ``bound`` squashes the result to ``bound * tanh(x_0 / bound)``; row argmax is unchanged
    but softmax sampling can no longer saturate.
    """
    single = np.ndim(state) == 1
    sb = _as_batch(state, p)
    x0, chain = _run_chain(sb, p, s, rng, stochastic, record)
    if bound is not None:
        if chain is not None:
            chain.bound = bound
        x0 = bound * np.tanh(x0 / bound)
    logits = x0.reshape(-1, p.n_chunks, p.n_servers)
    if single:
        logits = logits[0]
    return (logits, chain) if record else logits


def chain_backward(p: PolicyParams, s: NoiseSchedule, chain: Chain, d_x0: np.ndarray):
    """Gradient of a scalar objective w.r.t. denoiser params, given dL/dx_0.

    Each step is x_{t-1} = c1 (x_t - c2 eps(x_t)) + sigma z, so
    dL/dx_t = c1 g - c1 c2 J_eps^T g and the weights collect -c1 c2 J_eps^T g.
    """
    g = np.asarray(d_x0, dtype=float).reshape(chain.x0.shape)
    if chain.bound is not None:
        g = g * (1.0 - np.tanh(chain.x0 / chain.bound) ** 2)
    a = p.action_dim
    total = None
    for j in range(len(chain.caches) - 1, -1, -1):
        cache, t = chain.caches[j], s.T - j
        c1 = 1.0 / np.sqrt(s.alphas[t - 1])
        c2 = s.betas[t - 1] / np.sqrt(1.0 - s.alpha_bars[t - 1])
        grads, d_in = p.denoiser.backward(cache, -c1 * c2 * g)
        total = grads if total is None else [u + v for u, v in zip(total, grads)]
        g = c1 * g + d_in[:, :a]
    return total


def logits_to_placement(logits: np.ndarray, mode: str = "argmax", rng: np.random.Generator | None = None) -> Placement:
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 2:
        raise ValueError("logits must be a (K, N) matrix")
    if mode == "argmax":
        return Placement(np.argmax(logits, axis=1))
    if mode == "softmax_sample":
        if rng is None:
            raise ValueError("softmax_sample needs an rng")
        z = logits - logits.max(axis=1, keepdims=True)
        probs = np.exp(z)
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(len(probs))
        picks = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
        return Placement(np.minimum(picks, logits.shape[1] - 1))
    raise ValueError(f"unknown mode {mode!r}")


_MAGIC = b"DCNPOLICY\x00"
_VERSION = 1


def save_policy(path, p: PolicyParams, s: NoiseSchedule) -> None:
    """Binary checkpoint: header, schedule, then each layer's shape and row-major float64 weights."""
    net = p.denoiser
    act = net.activation.encode()
    out = [_MAGIC, struct.pack("<I", _VERSION), struct.pack("<I", s.T), s.betas.astype("<f8").tobytes(),
           struct.pack("<IIIIB", p.n_chunks, p.n_servers, p.state_dim, p.time_dim, len(act)), act,
           struct.pack("<I", len(net.weights))]
    for w, b in zip(net.weights, net.biases):
        out.append(struct.pack("<II", *w.shape))
        out.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        out.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    Path(path).write_bytes(b"".join(out))


def load_policy(path) -> tuple[PolicyParams, NoiseSchedule]:
    buf = memoryview(Path(path).read_bytes())
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ValueError("truncated policy checkpoint")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if bytes(take(len(_MAGIC))) != _MAGIC:
        raise ValueError("not a policy checkpoint")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (T,) = struct.unpack("<I", take(4))
    betas = np.frombuffer(take(8 * T), dtype="<f8").astype(float)
    k, n, sd, td, alen = struct.unpack("<IIIIB", take(17))
    act = bytes(take(alen)).decode()
    if act not in ACTIVATIONS:
        raise ValueError(f"unknown activation {act!r} in checkpoint")
    (layers,) = struct.unpack("<I", take(4))
    ws, bs = [], []
    for _ in range(layers):
        r, c = struct.unpack("<II", take(8))
        ws.append(np.frombuffer(take(8 * r * c), dtype="<f8").reshape(r, c).astype(float))
        bs.append(np.frombuffer(take(8 * c), dtype="<f8").astype(float))
    if pos != len(buf):
        raise ValueError("trailing bytes in policy checkpoint")
    return PolicyParams(MLP(tuple(ws), tuple(bs), act), k, n, sd, td), NoiseSchedule(betas)
