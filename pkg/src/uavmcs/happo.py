"""Heterogeneous-agent PPO: GAE, sequential advantage cascade and updates.

Every agent owns an actor and a critic.  In each update round the agents
are visited in a fresh random order; agent ``i`` optimises the clipped
surrogate with the advantage multiplied by the product of the policy ratios
of the agents updated before it in that round.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import ExperimentConfig
from .nn import Actor, Critic, ParameterSet, adam_step
from .nn.policy import gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grads


class CascadeOrderError(RuntimeError):
    pass


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_values=None):
    """Generalised advantage estimates along axis 0 (time).

    ``dones[t] = 1`` ends the episode after step ``t``: nothing is
    bootstrapped across it.  ``last_values`` bootstraps the step after the
    final one (0 by default).  Returns ``(advantages, returns)`` with
    ``returns = advantages + values``.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if rewards.shape != values.shape or rewards.shape[0] != dones.shape[0]:
        raise ValueError(f"length mismatch: rewards {rewards.shape}, values {values.shape}, "
                         f"dones {dones.shape}")
    if dones.ndim < rewards.ndim:
        dones = dones.reshape(dones.shape + (1,) * (rewards.ndim - dones.ndim))
    T = rewards.shape[0]
    next_value = np.zeros(rewards.shape[1:]) if last_values is None else np.asarray(last_values, float)
    adv = np.zeros_like(rewards)
    running = np.zeros(rewards.shape[1:])
    for t in range(T - 1, -1, -1):
        keep = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * keep - values[t]
        running = delta + gamma * lam * keep * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def normalize_advantages(adv, eps: float = 1e-8) -> np.ndarray:
    adv = np.asarray(adv, dtype=np.float64)
    if adv.size == 0:
        raise ValueError("cannot normalise an empty batch")
    return (adv - adv.mean()) / max(adv.std(), eps)


class Cascade:
    """Running product of the policy ratios of already-updated agents.

    ``advantage(adv)`` returns the cascaded advantage for the next agent in
    the order; ``update(agent, ratio)`` must be called for the agents in
    exactly that order.
    """

    def __init__(self, size: int, order):
        self.factor = np.ones(size)
        self.order = [int(i) for i in order]
        self.position = 0

    @property
    def next_agent(self) -> int | None:
        return self.order[self.position] if self.position < len(self.order) else None

    def advantage(self, adv: np.ndarray, index=None) -> np.ndarray:
        f = self.factor if index is None else self.factor[index]
        return f * adv

    def update(self, agent: int, ratio: np.ndarray) -> None:
        if agent != self.next_agent:
            raise CascadeOrderError(f"expected agent {self.next_agent}, got {agent}")
        ratio = np.asarray(ratio, dtype=np.float64)
        if ratio.shape != self.factor.shape:
            raise ValueError(f"ratio shape {ratio.shape} != cascade shape {self.factor.shape}")
        self.factor = self.factor * ratio
        self.position += 1


@dataclass
class Agent:
    index: int
    kind: str  # "user" or "uav"
    actor: Actor
    critic: Critic
    actor_params: ParameterSet
    critic_params: ParameterSet


@dataclass
class AgentBatch:
    obs: np.ndarray       # (T, obs_dim)
    u: np.ndarray         # (T, act_dim) pre-squash actions
    logp: np.ndarray      # (T,) behaviour log-probabilities
    rewards: np.ndarray   # (T,)
    values: np.ndarray    # (T,)
    dones: np.ndarray     # (T,)
    advantages: np.ndarray = field(default=None)
    returns: np.ndarray = field(default=None)


@dataclass
class RolloutBuffer:
    """Transitions of all agents, aligned on a common time index."""

    states: np.ndarray           # (T, state_dim)
    agents: list[AgentBatch]

    def __post_init__(self) -> None:
        T = self.states.shape[0]
        for b in self.agents:
            for name in ("obs", "u", "logp", "rewards", "values", "dones"):
                if getattr(b, name).shape[0] != T:
                    raise ValueError(f"buffer field {name} has length "
                                     f"{getattr(b, name).shape[0]}, expected {T}")

    def __len__(self) -> int:
        return self.states.shape[0]


def actor_loss(actor: Actor, params: ParameterSet, obs, u, old_logp, adv, eps_clip: float,
               psi: float, backward: bool = True):
    """Negated clipped surrogate plus entropy bonus, ``adv`` being the cascaded advantage.

    With ``backward=True`` the gradient is accumulated into ``params.grads``.
    Returns ``(loss, stats)``.
    """
    mean, log_std, cache = actor.forward(params, obs)
    if u.shape != mean.shape or old_logp.shape != (mean.shape[0],) or adv.shape != old_logp.shape:
        raise ValueError("actor batch shape mismatch")
    logp = gaussian_log_prob(mean, log_std, u)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1.0 - eps_clip, 1.0 + eps_clip)
    surr1 = ratio * adv
    surr2 = clipped * adv
    entropy = gaussian_entropy(log_std)
    n = len(ratio)
    loss = -(float(np.mean(np.minimum(surr1, surr2))) + psi * entropy)
    if backward:
        active = surr1 <= surr2
        d_logp = np.where(active, -ratio * adv / n, 0.0)
        g_mean, g_log_std = gaussian_log_prob_grads(mean, log_std, u)
        d_mean = d_logp[:, None] * g_mean
        d_log_std = np.sum(d_logp[:, None] * g_log_std, axis=0) - psi
        actor.backward(params, cache, d_mean, d_log_std)
    stats = {
        "ratio": float(np.mean(ratio)),
        "clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps_clip)),
        "entropy": entropy,
    }
    return loss, stats


def critic_loss(critic: Critic, params: ParameterSet, states, targets, backward: bool = True) -> float:
    """``0.5 * mean((target - V(s))^2)``, accumulating gradients if requested."""
    v, caches = critic.forward(params, states)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != v.shape:
        raise ValueError(f"target shape {targets.shape} != value shape {v.shape}")
    err = v - targets
    if backward:
        critic.backward(params, caches, err / len(err))
    return float(0.5 * np.mean(err * err))


def policy_log_prob(actor: Actor, params: ParameterSet, obs, u) -> np.ndarray:
    mean, log_std, _ = actor.forward(params, obs)
    return gaussian_log_prob(mean, log_std, u)


def _minibatches(rng: np.random.Generator, size: int, n: int):
    idx = rng.permutation(size)
    return [chunk for chunk in np.array_split(idx, min(n, size)) if len(chunk)]


def sequential_update_round(agents: list[Agent], buffer: RolloutBuffer, cfg: ExperimentConfig,
                            perm_rng: np.random.Generator, batch_rng: np.random.Generator):
    """One update round over all agents in a random order.

    Every agent runs ``ppo_epochs`` passes of minibatch actor steps with the
    current cascade, then folds its new/old policy ratio into the cascade.
    Critics are fitted afterwards.  Returns per-agent statistics.
    """
    if len(buffer) == 0:
        raise ValueError("empty rollout buffer")
    sim = cfg.sim
    order = perm_rng.permutation(len(agents))
    cascade = Cascade(len(buffer), order)
    stats: dict[int, dict[str, float]] = {}
    for i in order:
        agent, batch = agents[i], buffer.agents[i]
        adv = normalize_advantages(batch.advantages)
        losses, infos = [], []
        for _ in range(cfg.ppo_epochs):
            for mb in _minibatches(batch_rng, len(buffer), cfg.n_minibatches):
                agent.actor_params.zero_grad()
                loss, info = actor_loss(agent.actor, agent.actor_params, batch.obs[mb], batch.u[mb],
                                        batch.logp[mb], cascade.advantage(adv[mb], mb),
                                        sim.epsilon_clip, sim.psi_entropy)
                agent.actor_params.clip_grad_norm(cfg.max_grad_norm)
                adam_step(agent.actor_params, sim.l_a)
                losses.append(loss)
                infos.append(info)
        new_logp = policy_log_prob(agent.actor, agent.actor_params, batch.obs, batch.u)
        ratio = np.exp(new_logp - batch.logp)
        cascade.update(int(i), ratio)
        stats[int(i)] = {
            "actor_loss": float(np.mean(losses)),
            "ratio": float(np.mean(ratio)),
            "clip_frac": float(np.mean([s["clip_frac"] for s in infos])),
            "entropy": infos[-1]["entropy"],
        }
    for i, agent in enumerate(agents):
        batch = buffer.agents[i]
        closs = []
        for _ in range(cfg.ppo_epochs):
            for mb in _minibatches(batch_rng, len(buffer), cfg.n_minibatches):
                agent.critic_params.zero_grad()
                closs.append(critic_loss(agent.critic, agent.critic_params, buffer.states[mb],
                                         batch.returns[mb]))
                agent.critic_params.clip_grad_norm(cfg.max_grad_norm)
                adam_step(agent.critic_params, sim.l_c)
        stats[i]["critic_loss"] = float(np.mean(closs))
        stats[i]["mean_reward"] = float(np.mean(batch.rewards))
    return stats
