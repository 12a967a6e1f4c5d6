"""Adaptive device selection: fitness scores and the TD3 threshold agent.

Each UAV ranks its covered devices by a convex mix of model-difference,
distance and compute-frequency scores, then picks the selection threshold
beta with a small twin-critic actor-critic controller.  The controller's
state is the UAV model's (loss, accuracy) on the global probe set, its
action the threshold, and its reward the training improvement minus a
growing quadratic penalty on round-deadline violations.

One controller step runs per UAV per global round; within the step the
agent proposes `t_step` candidate thresholds, scores each on a lightweight
surrogate rollout supplied by the caller, stores all transitions and trains
on replay.  A warmup phase of uniformly random thresholds fills the buffer
before the policy drives actions (offline pretrain, online finetune).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .nn import MLP

__all__ = [
    "FitnessWeights",
    "fitness",
    "select_by_threshold",
    "resolve_overlaps",
    "shaped_reward",
    "Td3Config",
    "Td3Agent",
    "episode_step",
]


@dataclass(frozen=True)
class FitnessWeights:
    lambda1: float
    lambda2: float
    lambda3: float

    def __post_init__(self) -> None:
        vals = (self.lambda1, self.lambda2, self.lambda3)
        if any(not 0.0 <= v <= 1.0 for v in vals):
            raise ValueError("fitness weights must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ValueError("fitness weights must sum to 1")


def fitness(kld, dist, freq, weights: FitnessWeights) -> np.ndarray:
    """Per-device scores: similarity, proximity and frequency, normalized to
    the covered set's extrema and mixed by the three weights.

    Divergence is scored *up*: a larger model difference is worth more
    (those devices carry data the UAV model has not absorbed).  When every
    divergence is zero the similarity score degenerates to 1 for all.
    """
    r = np.asarray(kld, dtype=float)
    d = np.asarray(dist, dtype=float)
    f = np.asarray(freq, dtype=float)
    if r.size == 0:
        raise ValueError("fitness needs a non-empty covered set")
    if np.any(d <= 0) or np.any(f <= 0) or np.any(r < 0):
        raise ValueError("need dist > 0, freq > 0, kld >= 0")
    r_max = r.max()
    s_sim = r / r_max if r_max > 0 else np.ones_like(r)
    s_dis = d.min() / d
    s_fre = f / f.max()
    return weights.lambda1 * s_sim + weights.lambda2 * s_dis + weights.lambda3 * s_fre


def select_by_threshold(alphas, beta: float) -> np.ndarray:
    """Indices of devices whose fitness meets the threshold (inclusive)."""
    if not 0.0 <= beta <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return np.flatnonzero(np.asarray(alphas, dtype=float) >= beta)


def resolve_overlaps(candidates: dict[int, dict[int, float]]) -> dict[int, set[int]]:
    """Make per-UAV selections disjoint: a device claimed by several UAVs
    goes to the one scoring it highest, ties to the lowest UAV id."""
    winner: dict[int, tuple[float, int]] = {}
    for uav_id in sorted(candidates):
        for dev_id, alpha in candidates[uav_id].items():
            cur = winner.get(dev_id)
            if cur is None or alpha > cur[0] or (alpha == cur[0] and uav_id < cur[1]):
                winner[dev_id] = (alpha, uav_id)
    out: dict[int, set[int]] = {uav_id: set() for uav_id in candidates}
    for dev_id, (_, uav_id) in winner.items():
        out[uav_id].add(dev_id)
    return out


def shaped_reward(
    w1: float,
    w2: float,
    lambda6: float,
    lambda7: float,
    alpha_pen: float,
    t_dev: float,
    t_max: float,
) -> float:
    """Training-progress reward minus the quadratic deadline penalty.

    `t_dev` is the worst selected device's round time; only the part beyond
    `t_max` is penalized.
    """
    return lambda6 * w1 + lambda7 * w2 - alpha_pen * max(t_dev - t_max, 0.0) ** 2


@dataclass(frozen=True)
class Td3Config:
    state_dim: int = 2
    hidden: int = 64
    gamma: float = 0.99
    tau: float = 0.005
    policy_delay: int = 2
    noise_sigma: float = 0.1
    noise_clip: float = 0.25
    buffer_cap: int = 10_000
    batch_size: int = 64
    alpha_pen0: float = 1.0
    d_alpha_pen: float = 0.5
    lr_actor: float = 0.01
    lr_critic: float = 0.02
    warmup: int = 200
    t_step: int = 4

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.policy_delay < 1 or self.batch_size < 1 or self.buffer_cap < 1:
            raise ValueError("invalid agent sizes")
        if self.d_alpha_pen <= 0:
            raise ValueError("penalty increment must be positive")


class SurrogateEnv(Protocol):
    """What episode_step needs from the caller: the current state and a
    cheap evaluation of a candidate threshold."""

    def state(self) -> np.ndarray: ...

    def evaluate(self, action: float) -> tuple[float, np.ndarray]: ...


class Td3Agent:
    """Twin-delayed actor-critic over a 1-D action in [0, 1]."""

    def __init__(self, cfg: Td3Config, gen: np.random.Generator):
        self.cfg = cfg
        self.gen = gen
        s, h = cfg.state_dim, cfg.hidden
        self.actor = MLP((s, h, h, 1), out_act="sigmoid", gen=gen)
        self.critic1 = MLP((s + 1, h, h, 1), out_act="linear", gen=gen)
        self.critic2 = MLP((s + 1, h, h, 1), out_act="linear", gen=gen)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone()
        self.buffer: list[tuple[np.ndarray, float, float, np.ndarray]] = []
        self._buf_pos = 0
        self.t = 0  # critic update counter
        self.alpha_pen = cfg.alpha_pen0
        self.warmup_left = cfg.warmup

    # -- acting ---------------------------------------------------------------

    def act(self, state, noisy: bool = True) -> float:
        """Policy output plus clipped Gaussian exploration, clamped to [0,1].

        During warmup the action is uniform random instead.
        """
        if self.warmup_left > 0:
            return float(self.gen.random())
        s = np.asarray(state, dtype=float).reshape(1, -1)
        a = float(self.actor.forward(s)[0, 0])
        if noisy and self.cfg.noise_sigma > 0:
            eps = float(
                np.clip(
                    self.gen.normal(0.0, self.cfg.noise_sigma),
                    -self.cfg.noise_clip,
                    self.cfg.noise_clip,
                )
            )
            a += eps
        return float(np.clip(a, 0.0, 1.0))

    # -- replay ---------------------------------------------------------------

    def store(self, state, action: float, reward: float, next_state) -> None:
        item = (
            np.asarray(state, dtype=float).copy(),
            float(np.clip(action, 0.0, 1.0)),
            float(reward),
            np.asarray(next_state, dtype=float).copy(),
        )
        if len(self.buffer) < self.cfg.buffer_cap:
            self.buffer.append(item)
        else:  # FIFO eviction
            self.buffer[self._buf_pos] = item
            self._buf_pos = (self._buf_pos + 1) % self.cfg.buffer_cap
        if self.warmup_left > 0:
            self.warmup_left -= 1

    def _sample(self):
        idx = self.gen.integers(0, len(self.buffer), size=self.cfg.batch_size)
        s = np.stack([self.buffer[i][0] for i in idx])
        a = np.array([self.buffer[i][1] for i in idx])[:, None]
        r = np.array([self.buffer[i][2] for i in idx])[:, None]
        s2 = np.stack([self.buffer[i][3] for i in idx])
        return s, a, r, s2

    # -- learning -------------------------------------------------------------

    def critic_target(self, r: np.ndarray, s_next: np.ndarray) -> np.ndarray:
        """Bootstrapped target: smoothed target action, min of twin targets."""
        a_next = self.actor_target.forward(s_next)
        noise = np.clip(
            self.gen.normal(0.0, self.cfg.noise_sigma, size=a_next.shape),
            -self.cfg.noise_clip,
            self.cfg.noise_clip,
        )
        a_next = np.clip(a_next + noise, 0.0, 1.0)
        sa = np.concatenate([s_next, a_next], axis=1)
        q1 = self.critic1_target.forward(sa)
        q2 = self.critic2_target.forward(sa)
        return r + self.cfg.gamma * np.minimum(q1, q2)

    def update_critics(self, s, a, r, s_next) -> float:
        z = self.critic_target(r, s_next)
        sa = np.concatenate([s, a], axis=1)
        total = 0.0
        for critic in (self.critic1, self.critic2):
            q, cache = critic.forward_cache(sa)
            err = q - z
            total += float(np.mean(err**2))
            gw, gb, _ = critic.backward(cache, 2.0 * err / len(err))
            critic.sgd_step(gw, gb, self.cfg.lr_critic)
        return total / 2.0

    def update_actor(self, s) -> None:
        a, cache_a = self.actor.forward_cache(s)
        sa = np.concatenate([s, a], axis=1)
        _, cache_q = self.critic1.forward_cache(sa)
        # dQ/d(input) of critic1, restricted to the action column
        _, _, dsa = self.critic1.backward(cache_q, np.full((len(s), 1), 1.0 / len(s)))
        da = dsa[:, self.cfg.state_dim :]
        gw, gb, _ = self.actor.backward(cache_a, da)
        self.actor.sgd_step(gw, gb, self.cfg.lr_actor, ascend=True)

    def soft_update(self, tau: float | None = None) -> None:
        tau = self.cfg.tau if tau is None else tau
        if not 0.0 < tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        for net, target in (
            (self.actor, self.actor_target),
            (self.critic1, self.critic1_target),
            (self.critic2, self.critic2_target),
        ):
            target.set_flat(tau * net.get_flat() + (1.0 - tau) * target.get_flat())

    def train_step(self) -> float | None:
        """One replay update: critics always, actor/penalty/targets delayed."""
        if len(self.buffer) < self.cfg.batch_size:
            return None
        s, a, r, s2 = self._sample()
        loss = self.update_critics(s, a, r, s2)
        self.t += 1
        if self.t % self.cfg.policy_delay == 0:
            self.update_actor(s)
            self.alpha_pen = update_penalty(
                self.alpha_pen, self.t, self.cfg.policy_delay, self.cfg.d_alpha_pen
            )
            self.soft_update()
        return loss

    # -- persistence ------------------------------------------------------------

    def _nets(self):
        return (
            self.actor,
            self.critic1,
            self.critic2,
            self.actor_target,
            self.critic1_target,
            self.critic2_target,
        )

    def save(self, path_bin, path_meta) -> None:
        """Weights as one flat little-endian float64 blob + JSON sidecar."""
        flat = np.concatenate([net.get_flat() for net in self._nets()])
        with open(path_bin, "wb") as fh:
            fh.write(flat.astype("<f8").tobytes())
        meta = {
            "cfg": self.cfg.__dict__,
            "t": self.t,
            "alpha_pen": self.alpha_pen,
            "warmup_left": self.warmup_left,
            "sections": [net.n_params for net in self._nets()],
        }
        with open(path_meta, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path_bin, path_meta, gen: np.random.Generator) -> "Td3Agent":
        with open(path_meta) as fh:
            meta = json.load(fh)
        agent = cls(Td3Config(**meta["cfg"]), gen)
        with open(path_bin, "rb") as fh:
            flat = np.frombuffer(fh.read(), dtype="<f8")
        if flat.size != sum(meta["sections"]):
            raise ValueError("checkpoint size mismatch")
        i = 0
        for net, size in zip(agent._nets(), meta["sections"]):
            net.set_flat(flat[i : i + size])
            i += size
        agent.t = int(meta["t"])
        agent.alpha_pen = float(meta["alpha_pen"])
        agent.warmup_left = int(meta["warmup_left"])
        return agent


def update_penalty(alpha_pen: float, t: int, d: int, delta: float = 0.5) -> float:
    """Raise the deadline penalty on every d-th update step."""
    if delta <= 0:
        raise ValueError("penalty increment must be positive")
    return alpha_pen + delta if t % d == 0 else alpha_pen


def episode_step(agent: Td3Agent, env: SurrogateEnv, t_step: int | None = None):
    """One control round: probe t_step candidate thresholds, train on all of
    them, and return (best threshold, [(action, reward), ...])."""
    t_step = agent.cfg.t_step if t_step is None else t_step
    if t_step < 1:
        raise ValueError("need at least one candidate action")
    s = np.asarray(env.state(), dtype=float)
    tried: list[tuple[float, float]] = []
    for _ in range(t_step):
        a = agent.act(s)
        r, s_next = env.evaluate(a)
        agent.store(s, a, r, s_next)
        agent.train_step()
        tried.append((a, float(r)))
    best_action = max(tried, key=lambda ar: ar[1])[0]
    return best_action, tried
