"""Actor-critic training for the diffusion placement policy.

Episodes are one-shot: a scenario is drawn, one placement is chosen, one
reward comes back. The critic regresses Q(state, logits) onto that reward and
the actor ascends Q by backpropagating through the whole reverse chain.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .diffusion import (NoiseSchedule, PolicyParams, chain_backward, init_policy, logits_to_placement,
                        make_schedule, sample_action)
from .env import (EnvState, FeatureScaler, Placement, evaluate_placement, greedy_placement, random_placement,
                  sample_scenario)
from .nn import MLP, Adam
from .topology import build_topology

POLICIES = ("diffusion", "diffusion_explore", "greedy", "random")


def _softmax_rows(a: np.ndarray) -> np.ndarray:
    z = a - a.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True, eq=False)
class CriticParams:
    """Q(state, logits) as an MLP over [transformed action | state].

    With ``action_transform="softmax"`` each logit row is turned into server
    probabilities first, so the critic sees expected loads rather than raw logits.
    The output is ``q_scale * net(x)``: rewards are O(1e-2), and a fixed scale keeps
    Adam's absolute step size from swamping differences between placements.
    """

    net: MLP
    n_chunks: int
    n_servers: int
    state_dim: int
    action_transform: str = "softmax"
    q_scale: float = 1.0

    def __post_init__(self):
        if self.net.in_dim != self.n_chunks * self.n_servers + self.state_dim or self.net.out_dim != 1:
            raise ValueError("critic network shape does not match action/state dims")
        if self.action_transform not in ("softmax", "identity"):
            raise ValueError(f"unknown action transform {self.action_transform!r}")

    def with_net(self, net: MLP) -> "CriticParams":
        return CriticParams(net, self.n_chunks, self.n_servers, self.state_dim, self.action_transform, self.q_scale)

    def _inputs(self, states, actions, transformed=False):
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.asarray(actions, dtype=float).reshape(len(states), -1)
        if states.shape[1] != self.state_dim or actions.shape[1] != self.n_chunks * self.n_servers:
            raise ValueError("state/action shape mismatch with critic")
        a = actions.reshape(-1, self.n_chunks, self.n_servers)
        if self.action_transform == "softmax" and not transformed:
            a = _softmax_rows(a)
        return np.concatenate([a.reshape(len(states), -1), states], axis=1), a

    def forward(self, states, actions, transformed: bool = False):
        """``transformed=True`` means ``actions`` are already server probabilities."""
        x, probs = self._inputs(states, actions, transformed)
        q, cache = self.net.forward(x)
        return self.q_scale * q[:, 0], (cache, probs)

    def backward(self, ctx, dq: np.ndarray):
        """Param grads and dQ/d(logits) for upstream dq of shape (B,)."""
        cache, probs = ctx
        grads, d_in = self.net.backward(cache, self.q_scale * dq[:, None])
        d_a = d_in[:, : self.n_chunks * self.n_servers].reshape(probs.shape)
        if self.action_transform == "softmax":
            d_a = probs * (d_a - (d_a * probs).sum(axis=-1, keepdims=True))
        return grads, d_a

    def value_and_grad(self, states, actions):
        q, ctx = self.forward(states, actions)
        _, d_a = self.backward(ctx, np.ones_like(q))
        return q, d_a


def init_critic(n_chunks: int, n_servers: int, state_dim: int, rng: np.random.Generator,
                hidden=(128, 128), activation: str = "silu", action_transform: str = "softmax",
                q_scale: float = 1.0) -> CriticParams:
    net = MLP.init((n_chunks * n_servers + state_dim, *hidden, 1), rng, activation)
    return CriticParams(net, n_chunks, n_servers, state_dim, action_transform, q_scale)


def critic_eval(c: CriticParams, state, action) -> float:
    q, _ = c.forward(state, action)
    return float(q[0])


@dataclass(frozen=True, eq=False)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    seed: int = 0
    placement: tuple[int, ...] | None = None  # what was actually executed


class ReplayBuffer:
    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[Transition] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, tr: Transition) -> None:
        self._items.append(tr)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if not self._items:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def _stack(batch):
    states = np.stack([t.state for t in batch])
    actions = np.stack([t.action for t in batch])
    rewards = np.array([t.reward for t in batch], dtype=float)
    return states, actions, rewards


def critic_loss_and_grad(c: CriticParams, batch):
    """MSE to observed rewards. A softmax critic is fit on the one-hot of the executed
    placement when transitions carry one, so each reward is credited to its own action."""
    states, actions, rewards = _stack(batch)
    executed = c.action_transform == "softmax" and all(t.placement is not None for t in batch)
    if executed:
        idx = np.array([t.placement for t in batch])
        actions = np.eye(c.n_servers)[idx]
    q, ctx = c.forward(states, actions, transformed=executed)
    err = q - rewards
    grads, _ = c.backward(ctx, 2.0 * err / len(batch))
    return float(np.mean(err**2)), grads


def critic_update(batch, c: CriticParams, opt: Adam) -> tuple[CriticParams, float]:
    """One Adam step on the mean squared error to observed rewards; returns the pre-step loss."""
    if not batch:
        raise ValueError("empty batch")
    loss, grads = critic_loss_and_grad(c, batch)
    return c.with_net(c.net.with_params(opt.step(c.net.params(), grads))), loss


def actor_objective_and_grad(states, p: PolicyParams, critic, s: NoiseSchedule, rng: np.random.Generator,
                             stochastic: bool = True, bound: float | None = None):
    """Mean Q over a batch of sampled actions and its gradient w.r.t. denoiser params.

    ``critic`` needs ``value_and_grad(states, actions) -> (q, dq/dactions)``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    actions, chain = sample_action(states, p, s, rng, stochastic=stochastic, record=True, bound=bound)
    q, dq_da = critic.value_and_grad(states, actions)
    grads = chain_backward(p, s, chain, np.asarray(dq_da).reshape(len(states), -1) / len(states))
    return float(np.mean(q)), grads


def actor_update(states, p: PolicyParams, critic, s: NoiseSchedule, opt: Adam, rng: np.random.Generator,
                 stochastic: bool = True, bound: float | None = None) -> tuple[PolicyParams, float]:
    """One Adam ascent step on mean Q with the critic frozen; returns the pre-step mean Q."""
    mean_q, grads = actor_objective_and_grad(states, p, critic, s, rng, stochastic, bound)
    new = opt.step(p.denoiser.params(), [-g for g in grads])
    return p.with_denoiser(p.denoiser.with_params(new)), mean_q


def finite_diff_check(f, params, epsilon: float = 1e-5) -> float:
    """Max relative error between ``f``'s analytic gradient and central differences.

    ``f(params) -> (value, grads)`` where grads mirrors the list of arrays in params.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    params = [np.array(p, dtype=float) for p in params]
    _, analytic = f(params)
    worst = 0.0
    for i, p in enumerate(params):
        for j in np.ndindex(p.shape):
            orig = p[j]
            p[j] = orig + epsilon
            up = f(params)[0]
            p[j] = orig - epsilon
            down = f(params)[0]
            p[j] = orig
            num = (up - down) / (2 * epsilon)
            ana = float(np.asarray(analytic[i])[j])
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


@dataclass
class TrainingReport:
    seed: int
    episodes: int
    reward: dict[str, np.ndarray]
    mean_read_ms: dict[str, np.ndarray]
    mean_write_ms: dict[str, np.ndarray]
    critic_loss: np.ndarray
    mean_q: np.ndarray
    wall_clock_s: float = 0.0
    config: dict = field(default_factory=dict)
    policy: PolicyParams | None = None
    schedule: NoiseSchedule | None = None
    critic: CriticParams | None = None

    def moving_average(self, policy: str, window: int = 100) -> np.ndarray:
        r = self.reward[policy]
        if len(r) == 0:
            return r.copy()
        out = np.empty_like(r)
        for i in range(len(r)):
            seg = r[max(0, i - window + 1): i + 1]
            seg = seg[~np.isnan(seg)]
            out[i] = seg.mean() if seg.size else np.nan
        return out

    def final_stats(self, window: int = 100) -> dict[str, tuple[float, float]]:
        stats = {}
        for name, r in self.reward.items():
            tail = r[-window:]
            tail = tail[~np.isnan(tail)]
            stats[name] = (float(tail.mean()), float(tail.std())) if tail.size else (float("nan"), float("nan"))
        return stats


def _empty(n):
    return np.full(n, np.nan)


def train(cfg: ExperimentConfig, seed: int | None = None, fixed_env: EnvState | None = None,
          progress=None) -> TrainingReport:
    """Run the actor-critic loop and score Random/Greedy on the identical scenario stream.

    ``fixed_env`` replaces the sampled scenario with the same EnvState every episode.
    """
    from .config import to_dict

    cfg.validate()
    seed = cfg.seed if seed is None else seed
    pc, n_ep = cfg.policy, cfg.run.episodes
    topo = build_topology(cfg.topology)
    scen = cfg.scenario
    if fixed_env is not None and (fixed_env.n_servers != scen.n_servers or fixed_env.n_chunks != scen.n_chunks):
        raise ValueError("fixed_env dimensions differ from the scenario config")
    max_hops = int(topo.host_hop_matrix().max()) or 1
    scaler = FeatureScaler(scen, cfg.topology.per_hop_latency_ms, max_hops)
    k, n = scen.n_chunks, scen.n_servers

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(7)]
    scen_rng, act_rng, rand_rng, replay_rng, eval_rng, update_rng, init_rng = streams

    sched = make_schedule(pc.T, pc.beta_min, pc.beta_max)
    policy = init_policy(k, n, scaler.dim, init_rng, pc.hidden, pc.time_dim, pc.activation)
    critic = init_critic(k, n, scaler.dim, init_rng, pc.critic_hidden, pc.activation, pc.critic_action_transform,
                         pc.q_scale)
    actor_opt, critic_opt = Adam(pc.actor_lr), Adam(pc.critic_lr)
    buffer = ReplayBuffer(pc.buffer_capacity)
    bound = pc.action_bound or None

    reward = {p: _empty(n_ep) for p in POLICIES}
    reads = {p: _empty(n_ep) for p in POLICIES}
    writes = {p: _empty(n_ep) for p in POLICIES}
    closs, mq = _empty(n_ep), _empty(n_ep)

    def record(name, ep, out):
        reward[name][ep] = out.reward
        reads[name][ep] = out.mean_read_ms
        writes[name][ep] = out.mean_write_ms

    start = time.perf_counter()
    for ep in range(n_ep):
        env = fixed_env if fixed_env is not None else sample_scenario(scen, topo, scen_rng)
        feats = scaler(env)

        logits = sample_action(feats, policy, sched, act_rng, stochastic=True, bound=bound)
        placed = np.array(logits_to_placement(logits, "softmax_sample", act_rng).assignment)
        if pc.explore_eps > 0:
            swap = act_rng.random(k) < pc.explore_eps
            placed = np.where(swap, act_rng.integers(0, n, size=k), placed)
        placed = Placement(placed)
        out = evaluate_placement(env, placed)
        record("diffusion_explore", ep, out)
        buffer.add(Transition(feats, logits, out.reward, seed, placed.assignment))

        record("random", ep, evaluate_placement(env, random_placement(env, rand_rng)))
        record("greedy", ep, evaluate_placement(env, greedy_placement(env)))
        if ep % cfg.run.eval_interval == 0:
            det = sample_action(feats, policy, sched, eval_rng, stochastic=False)
            record("diffusion", ep, evaluate_placement(env, logits_to_placement(det, "argmax")))

        if len(buffer) >= pc.warmup:
            batch = buffer.sample(pc.batch_size, replay_rng)
            critic, closs[ep] = critic_update(batch, critic, critic_opt)
            states = np.stack([t.state for t in batch])
            policy, mq[ep] = actor_update(states, policy, critic, sched, actor_opt, update_rng, bound=bound)
        if progress is not None:
            progress(ep, reward)

    return TrainingReport(
        seed=seed, episodes=n_ep, reward=reward, mean_read_ms=reads, mean_write_ms=writes,
        critic_loss=closs, mean_q=mq, wall_clock_s=time.perf_counter() - start,
        config=to_dict(cfg), policy=policy, schedule=sched, critic=critic,
    )
