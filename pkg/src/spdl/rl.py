"""A small clipped-surrogate policy-gradient learner.

Policy and value function are separate tanh networks. The policy is a
Gaussian with a network mean and a state-independent log standard deviation.
Advantages come from generalized advantage estimation and are standardised
per batch before the update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from spdl import nn

log = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class PolicyParams:
    policy: list
    log_std: np.ndarray
    value: list

    @classmethod
    def init(cls, rng: np.random.Generator, obs_dim: int, action_dim: int,
             hidden=(21, 21), init_log_std: float = 0.0) -> PolicyParams:
        sizes = [obs_dim, *hidden]
        policy = nn.init_mlp(rng, sizes + [action_dim], out_gain=0.01)
        value = nn.init_mlp(rng, sizes + [1], out_gain=1.0)
        return cls(policy, np.full(action_dim, float(init_log_std)), value)

    @property
    def obs_dim(self) -> int:
        return self.policy[0].shape[1]

    @property
    def action_dim(self) -> int:
        return self.log_std.size

    def copy(self) -> PolicyParams:
        return PolicyParams([p.copy() for p in self.policy], self.log_std.copy(),
                            [p.copy() for p in self.value])

    def mean_action(self, obs) -> np.ndarray:
        out, _ = nn.forward(self.policy, obs)
        return out[0] if np.ndim(obs) == 1 else out

    def values(self, obs) -> np.ndarray:
        out, _ = nn.forward(self.value, obs)
        return out[:, 0]

    def policy_vector(self) -> np.ndarray:
        return np.concatenate([nn.flatten(self.policy), self.log_std])

    def value_vector(self) -> np.ndarray:
        return nn.flatten(self.value)

    def with_policy_vector(self, vec) -> PolicyParams:
        n = vec.size - self.log_std.size
        return PolicyParams(nn.unflatten(vec[:n], self.policy), vec[n:].copy(),
                            [p.copy() for p in self.value])

    def with_value_vector(self, vec) -> PolicyParams:
        return PolicyParams([p.copy() for p in self.policy], self.log_std.copy(),
                            nn.unflatten(vec, self.value))

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.policy_vector())) and np.all(np.isfinite(self.value_vector())))


@dataclass(frozen=True)
class GaeConfig:
    """Learner hyperparameters.

    ``gamma``/``lam``/``epochs``/``minibatches`` and a zero entropy bonus follow
    the point-mass setup; clip ratio, step size and gradient-norm clipping are
    conventional defaults.
    """

    gamma: float = 0.95
    lam: float = 0.99
    clip: float = 0.2
    epochs: int = 8
    minibatches: int = 32
    step_size: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-5
    max_grad_norm: float = 0.5
    hidden: tuple = (21, 21)

    def __post_init__(self):
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.clip <= 0 or self.epochs < 1 or self.minibatches < 1 or self.step_size <= 0:
            raise ValueError("clip, epochs, minibatches and step_size must be positive")


def gaussian_log_prob(mean, log_std, actions) -> np.ndarray:
    z = (actions - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std, axis=-1) - 0.5 * mean.shape[-1] * LOG_2PI


def policy_act(params: PolicyParams, observation, rng: np.random.Generator | None = None,
               deterministic: bool = False) -> np.ndarray:
    obs = np.asarray(observation, dtype=float)
    if obs.shape != (params.obs_dim,):
        raise ValueError(f"observation shape {obs.shape} != ({params.obs_dim},)")
    if not np.all(np.isfinite(obs)):
        raise ValueError("non-finite observation")
    mean = params.mean_action(obs)
    if deterministic:
        return mean
    return mean + np.exp(params.log_std) * rng.standard_normal(mean.shape)


def value_estimate(params: PolicyParams, s0, c) -> np.ndarray | float:
    """Value-network output at ``s0`` concatenated with ``c`` (batched over rows)."""
    s0 = np.asarray(s0, dtype=float)
    c = np.asarray(c, dtype=float)
    obs = np.concatenate([s0, c], axis=-1)
    v = params.values(np.atleast_2d(obs))
    return float(v[0]) if obs.ndim == 1 else v


def gae_advantages(rewards, values, gamma: float, lam: float):
    """Generalized advantage estimates and value targets for one episode.

    ``values`` carries one more entry than ``rewards``: the bootstrap value of
    the state after the last reward (0 at a terminal).
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    if v.shape != (r.size + 1,):
        raise ValueError(f"need {r.size + 1} values for {r.size} rewards, got {v.size}")
    deltas = r + gamma * v[1:] - v[:-1]
    adv = np.empty_like(r)
    acc = 0.0
    for t in range(r.size - 1, -1, -1):
        acc = deltas[t] + gamma * lam * acc
        adv[t] = acc
    return adv, adv + v[:-1]


@dataclass
class RolloutBatch:
    """Transitions from ``K`` episodes plus the per-episode curriculum data.

    ``value_estimates`` holds ``V(s0^k, c^k)`` from the value network after
    the policy update; it is ``None`` until :func:`ppo_update` has run.
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    contexts: np.ndarray
    returns: np.ndarray
    initial_observations: np.ndarray
    episode_rewards: list = field(repr=False, default_factory=list)
    value_estimates: np.ndarray | None = None

    @property
    def n_steps(self) -> int:
        return len(self.observations)

    @property
    def n_episodes(self) -> int:
        return len(self.contexts)


def build_batch(params: PolicyParams, trajectories, config: GaeConfig) -> RolloutBatch:
    obs = np.concatenate([t.observations for t in trajectories])
    actions = np.concatenate([t.actions for t in trajectories])
    mean = params.mean_action(obs)
    log_probs = gaussian_log_prob(mean, params.log_std, actions)
    all_values = params.values(obs)
    finals = params.values(np.stack([t.final_observation for t in trajectories]))
    advs, targets = [], []
    i = 0
    for k, t in enumerate(trajectories):
        n = len(t)
        bootstrap = 0.0 if t.terminal else finals[k]
        v = np.append(all_values[i:i + n], bootstrap)
        a, tg = gae_advantages(t.rewards, v, config.gamma, config.lam)
        advs.append(a)
        targets.append(tg)
        i += n
    return RolloutBatch(
        observations=obs,
        actions=actions,
        log_probs=log_probs,
        advantages=np.concatenate(advs),
        value_targets=np.concatenate(targets),
        contexts=np.stack([t.context for t in trajectories]),
        returns=np.array([t.discounted_return for t in trajectories]),
        initial_observations=np.stack([t.initial_observation for t in trajectories]),
        episode_rewards=[t.rewards for t in trajectories],
    )


def collect_batch(env, params: PolicyParams, sample_context, n_step: int,
                  rng: np.random.Generator, config: GaeConfig) -> RolloutBatch:
    """Roll out whole episodes until at least ``n_step`` steps are collected.

    ``sample_context()`` returns the context for the next episode.
    """
    trajectories, steps = [], 0
    while steps < n_step:
        traj = env.rollout(params, sample_context(), rng)
        trajectories.append(traj)
        steps += len(traj)
    return build_batch(params, trajectories, config)


def surrogate_loss_and_grad(params: PolicyParams, obs, actions, old_log_probs, advantages, clip: float):
    """Clipped surrogate loss (to minimise) and its gradient.

    Returns ``(loss, grads, new_log_probs)`` with ``grads`` a flat vector
    ordered like :meth:`PolicyParams.policy_vector`.
    """
    mean, cache = nn.forward(params.policy, obs)
    log_std = params.log_std
    inv_std = np.exp(-log_std)
    z = (actions - mean) * inv_std
    logp = np.sum(-0.5 * z * z - log_std, axis=-1) - 0.5 * mean.shape[-1] * LOG_2PI
    ratio = np.exp(logp - old_log_probs)
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    n = len(advantages)
    loss = -np.mean(np.minimum(unclipped, clipped))

    active = unclipped <= clipped
    d_logp = np.where(active, -advantages * ratio / n, 0.0)
    d_mean = d_logp[:, None] * z * inv_std
    d_log_std = np.sum(d_logp[:, None] * (z * z - 1.0), axis=0)
    grads = nn.backward(params.policy, cache, d_mean)
    return float(loss), np.concatenate([nn.flatten(grads), d_log_std]), logp


def value_loss_and_grad(params: PolicyParams, obs, targets):
    """Half mean squared error of the value network and its flat gradient."""
    out, cache = nn.forward(params.value, obs)
    err = out[:, 0] - targets
    loss = 0.5 * np.mean(err * err)
    grads = nn.backward(params.value, cache, (err / len(err))[:, None])
    return float(loss), nn.flatten(grads)


class Adam:
    def __init__(self, size: int, config: GaeConfig):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.config = config

    def step(self, x, grad):
        c = self.config
        norm = np.linalg.norm(grad)
        if c.max_grad_norm and norm > c.max_grad_norm:
            grad = grad * (c.max_grad_norm / norm)
        self.t += 1
        self.m = c.beta1 * self.m + (1 - c.beta1) * grad
        self.v = c.beta2 * self.v + (1 - c.beta2) * grad * grad
        m_hat = self.m / (1 - c.beta1**self.t)
        v_hat = self.v / (1 - c.beta2**self.t)
        return x - c.step_size * m_hat / (np.sqrt(v_hat) + c.adam_eps)


@dataclass
class Optimizers:
    policy: Adam
    value: Adam

    @classmethod
    def for_params(cls, params: PolicyParams, config: GaeConfig) -> Optimizers:
        return cls(Adam(params.policy_vector().size, config), Adam(params.value_vector().size, config))


def standardize(x) -> np.ndarray:
    std = x.std()
    return (x - x.mean()) / (std if std > 1e-8 else 1.0)


def ppo_update(params: PolicyParams, batch: RolloutBatch, config: GaeConfig,
               rng: np.random.Generator, optimizers: Optimizers | None = None):
    """Minibatch Adam epochs on the clipped surrogate and the value MSE.

    Returns ``(new_params, diagnostics)``. On a non-finite loss the update is
    abandoned: the input parameters come back with ``diagnostics["error"]``
    set. The batch's ``value_estimates`` are filled in from the returned
    parameters.
    """
    if batch.n_steps == 0:
        raise ValueError("empty batch")
    if optimizers is None:
        optimizers = Optimizers.for_params(params, config)
    adv = standardize(batch.advantages)
    theta = params.policy_vector()
    phi = params.value_vector()
    current = params
    pg_losses, v_losses = [], []
    n = batch.n_steps
    n_mb = min(config.minibatches, n)
    for _ in range(config.epochs):
        for idx in np.array_split(rng.permutation(n), n_mb):
            pg_loss, g_pol, _ = surrogate_loss_and_grad(
                current, batch.observations[idx], batch.actions[idx],
                batch.log_probs[idx], adv[idx], config.clip)
            v_loss, g_val = value_loss_and_grad(current, batch.observations[idx], batch.value_targets[idx])
            if not (np.isfinite(pg_loss) and np.isfinite(v_loss)
                    and np.all(np.isfinite(g_pol)) and np.all(np.isfinite(g_val))):
                log.warning("non-finite loss in ppo_update; keeping previous parameters")
                batch.value_estimates = _initial_values(params, batch)
                return params, {"error": True, "policy_loss": pg_loss, "value_loss": v_loss,
                                "approx_kl": float("nan")}
            theta = optimizers.policy.step(theta, g_pol)
            phi = optimizers.value.step(phi, g_val)
            current = params.with_policy_vector(theta).with_value_vector(phi)
            pg_losses.append(pg_loss)
            v_losses.append(v_loss)

    new_logp = gaussian_log_prob(current.mean_action(batch.observations), current.log_std, batch.actions)
    batch.value_estimates = _initial_values(current, batch)
    diagnostics = {
        "error": False,
        "policy_loss": float(np.mean(pg_losses)),
        "value_loss": float(np.mean(v_losses)),
        "approx_kl": float(np.mean(batch.log_probs - new_logp)),
    }
    return current, diagnostics


def _initial_values(params: PolicyParams, batch: RolloutBatch) -> np.ndarray:
    return params.values(batch.initial_observations)


__all__ = [
    "Adam",
    "GaeConfig",
    "Optimizers",
    "PolicyParams",
    "RolloutBatch",
    "build_batch",
    "collect_batch",
    "gae_advantages",
    "gaussian_log_prob",
    "policy_act",
    "ppo_update",
    "surrogate_loss_and_grad",
    "value_estimate",
    "value_loss_and_grad",
]
