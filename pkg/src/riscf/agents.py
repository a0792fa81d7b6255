"""Actor-critic agents for power control and reflection-phase beamforming.

The twin-critic agent implements clipped double-Q targets with smoothed
target actions, delayed actor updates, and soft target tracking; the
single-critic variant ("ddpg") drops the second critic, the smoothing
noise, and the delay, and is otherwise identical plumbing.

Both agents read the same max-abs normalized state (previous SINRs,
powers, phases) and emit actions in [-1, 1]; the maps to watts/radians are
structural, so the power and phase constraints always hold.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import serialization
from .config import SystemConfig
from .nets import Adam, Mlp
from .twin import AgentState

TWO_PI = 2.0 * np.pi


def map_actions(a_p: np.ndarray, a_r: np.ndarray, p_max: float):
    """[-1,1] actions to watts and radians: p = (a+1)/2 * p_max,
    phi = (a+1) * pi wrapped into [0, 2*pi)."""
    a_p = np.clip(np.asarray(a_p, dtype=float), -1.0, 1.0)
    a_r = np.clip(np.asarray(a_r, dtype=float), -1.0, 1.0)
    p = (a_p + 1.0) / 2.0 * p_max
    phi = np.mod((a_r + 1.0) * np.pi, TWO_PI)
    return p, phi


def normalize_state(raw: AgentState, running_max_alpha: float, p_max: float):
    """Max-abs normalization per block; the alpha divisor is the running
    max of |alpha| seen so far, updated before use.  Returns (vector,
    updated running max)."""
    if running_max_alpha <= 0.0:
        raise ValueError("running_max_alpha must be > 0")
    new_max = running_max_alpha
    if raw.alpha.size:
        new_max = max(new_max, float(np.abs(raw.alpha).max()))
    vec = np.concatenate([raw.alpha / new_max, raw.p / p_max, raw.phi / TWO_PI])
    return vec.astype(np.float64), new_max


class StateNormalizer:
    """Stateful wrapper around normalize_state; disabled = raw pass-through."""

    def __init__(self, p_max: float, enabled: bool = True):
        self.p_max = p_max
        self.enabled = enabled
        self.running_max_alpha = 1.0

    def __call__(self, raw: AgentState) -> np.ndarray:
        if not self.enabled:
            return raw.vector()
        vec, self.running_max_alpha = normalize_state(
            raw, self.running_max_alpha, self.p_max)
        return vec


@dataclass
class AgentHyper:
    learning_rate: float = 5e-5
    gamma: float = 0.997
    soft_update: float = 0.001
    actor_delay: int = 5
    smooth_sigma: float = 0.5
    smooth_clip: float = 1.0
    explore_prob: float = 0.9
    explore_sigma: float = 0.1
    explore_decay: float = 0.999
    hidden: tuple = (128, 128)
    variant: str = "td3"  # "td3" | "ddpg"

    @classmethod
    def from_config(cls, config: SystemConfig, variant: str = "td3") -> "AgentHyper":
        return cls(learning_rate=config.learning_rate, gamma=config.gamma,
                   soft_update=config.soft_update, actor_delay=config.actor_delay,
                   smooth_sigma=config.smooth_sigma, smooth_clip=config.smooth_clip,
                   explore_prob=config.explore_prob,
                   explore_sigma=config.explore_sigma,
                   explore_decay=config.explore_decay,
                   hidden=(config.hidden_units,) * config.hidden_layers,
                   variant=variant)


class Td3Agent:
    """Six networks (four for the single-critic variant) plus optimizers."""

    def __init__(self, state_dim: int, action_dim: int, hyper: AgentHyper,
                 rng: np.random.Generator):
        if action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hyper = hyper
        self.explore_sigma = hyper.explore_sigma
        h = list(hyper.hidden)
        self.actor = Mlp([state_dim] + h + [action_dim], out_act="tanh",
                         rng=rng, final_scale=1e-3)
        self.critic1 = Mlp([state_dim + action_dim] + h + [1], rng=rng)
        self.critic2 = (Mlp([state_dim + action_dim] + h + [1], rng=rng)
                        if hyper.variant == "td3" else None)
        self.actor_target = self.actor.clone()
        self.critic1_target = self.critic1.clone()
        self.critic2_target = self.critic2.clone() if self.critic2 else None
        self.opt_actor = Adam(self.actor, hyper.learning_rate)
        self.opt_critic1 = Adam(self.critic1, hyper.learning_rate)
        self.opt_critic2 = (Adam(self.critic2, hyper.learning_rate)
                            if self.critic2 else None)

    # ------------------------------------------------------------------
    def act(self, state_vec: np.ndarray, explore: bool,
            rng: np.random.Generator) -> np.ndarray:
        """Deterministic policy output; exploration noise fires with the
        configured probability, the result is clamped to [-1, 1]."""
        a = self.actor.forward(state_vec)
        if explore and rng.random() < self.hyper.explore_prob:
            a = a + rng.normal(0.0, self.explore_sigma, size=a.shape)
        return np.clip(a, -1.0, 1.0)

    def decay_exploration(self) -> None:
        self.explore_sigma *= self.hyper.explore_decay

    # ------------------------------------------------------------------
    def target_q(self, batch, rng: np.random.Generator) -> np.ndarray:
        """Bootstrapped targets y = r + gamma * Q'(s', a~).

        Twin-critic variant: a~ is the smoothed clipped target action and
        Q' the minimum of the two target critics; single-critic variant
        uses the plain target action and its one critic.
        """
        _, _, r, s2 = batch
        a2 = self.actor_target.forward(s2)
        if self.hyper.variant == "td3":
            eps = rng.normal(0.0, self.hyper.smooth_sigma, size=a2.shape)
            eps = np.clip(eps, -self.hyper.smooth_clip, self.hyper.smooth_clip)
            a2 = np.clip(a2 + eps, -1.0, 1.0)
            x2 = np.concatenate([s2, a2], axis=1)
            q1 = self.critic1_target.forward(x2)[:, 0]
            q2 = self.critic2_target.forward(x2)[:, 0]
            qmin = np.minimum(q1, q2)
        else:
            x2 = np.concatenate([s2, a2], axis=1)
            qmin = self.critic1_target.forward(x2)[:, 0]
        return r + self.hyper.gamma * qmin

    def critic_update(self, batch, y: np.ndarray) -> float:
        """One optimizer step per critic on the mean squared target error."""
        s, a, _, _ = batch
        x = np.concatenate([s, a], axis=1)
        n = x.shape[0]
        losses = []
        critics = [(self.critic1, self.opt_critic1)]
        if self.critic2 is not None:
            critics.append((self.critic2, self.opt_critic2))
        for net, opt in critics:
            acts = net.forward_cached(x)
            err = acts[-1][:, 0] - y
            losses.append(float(np.mean(err ** 2)))
            upstream = (2.0 / n) * err[:, None]
            dws, dbs, _ = net.backward(acts, upstream)
            opt.step(net, dws, dbs)
        return float(np.mean(losses))

    def actor_and_target_update(self, batch) -> None:
        """Deterministic policy-gradient ascent on critic 1, then soft
        target tracking for every target network."""
        s, _, _, _ = batch
        n = s.shape[0]
        acts_a = self.actor.forward_cached(s)
        a = acts_a[-1]
        x = np.concatenate([s, a], axis=1)
        ones = np.full((n, 1), 1.0 / n)
        _, _, dx = self.critic1.gradients(x, ones)
        g_action = dx[:, self.state_dim:]
        dws, dbs, _ = self.actor.backward(acts_a, -g_action)
        self.opt_actor.step(self.actor, dws, dbs)
        self.soft_update_targets()

    def soft_update_targets(self) -> None:
        chi = self.hyper.soft_update
        pairs = [(self.actor_target, self.actor),
                 (self.critic1_target, self.critic1)]
        if self.critic2 is not None:
            pairs.append((self.critic2_target, self.critic2))
        for target, net in pairs:
            for pt, p in zip(target.parameters(), net.parameters()):
                pt *= (1.0 - chi)
                pt += chi * p

    def update(self, batch, global_step: int, rng: np.random.Generator) -> float:
        """One training step: critics every call, actor every actor_delay."""
        y = self.target_q(batch, rng)
        loss = self.critic_update(batch, y)
        if global_step % self.hyper.actor_delay == 0:
            self.actor_and_target_update(batch)
        return loss

    # ------------------------------------------------------------------
    def save(self, path) -> None:
        meta = {"kind": "agent-checkpoint", "variant": self.hyper.variant,
                "state_dim": self.state_dim, "action_dim": self.action_dim,
                "hidden": " ".join(str(h) for h in self.hyper.hidden),
                "explore_sigma": self.explore_sigma}
        arrays = {}

        def put(prefix, net, opt=None):
            for i, (w, b) in enumerate(zip(net.ws, net.bs)):
                arrays[f"{prefix}.w{i}"] = w
                arrays[f"{prefix}.b{i}"] = b
            if opt is not None:
                meta[f"{prefix}.t"] = opt.t
                for i, (m, v) in enumerate(zip(opt.m, opt.v)):
                    arrays[f"{prefix}.m{i}"] = m
                    arrays[f"{prefix}.v{i}"] = v

        put("actor", self.actor, self.opt_actor)
        put("actor_target", self.actor_target)
        put("critic1", self.critic1, self.opt_critic1)
        put("critic1_target", self.critic1_target)
        if self.critic2 is not None:
            put("critic2", self.critic2, self.opt_critic2)
            put("critic2_target", self.critic2_target)
        serialization.save_archive(path, meta, arrays)

    def load(self, path) -> None:
        meta, arrays = serialization.load_archive(path)
        if meta.get("kind") != "agent-checkpoint":
            raise ValueError(f"{path}: not an agent checkpoint")
        if (meta["state_dim"], meta["action_dim"]) != (self.state_dim, self.action_dim):
            raise ValueError("checkpoint dimensions do not match this agent")
        self.explore_sigma = meta["explore_sigma"]

        def take(prefix, net, opt=None):
            for i in range(len(net.ws)):
                net.ws[i] = arrays[f"{prefix}.w{i}"].copy()
                net.bs[i] = arrays[f"{prefix}.b{i}"].copy()
            if opt is not None:
                opt.t = meta[f"{prefix}.t"]
                opt.m = [arrays[f"{prefix}.m{i}"].copy() for i in range(len(opt.m))]
                opt.v = [arrays[f"{prefix}.v{i}"].copy() for i in range(len(opt.v))]

        take("actor", self.actor, self.opt_actor)
        take("actor_target", self.actor_target)
        take("critic1", self.critic1, self.opt_critic1)
        take("critic1_target", self.critic1_target)
        if self.critic2 is not None:
            take("critic2", self.critic2, self.opt_critic2)
            take("critic2_target", self.critic2_target)
