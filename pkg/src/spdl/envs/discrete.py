"""Finite contextual MDPs with exact trajectory enumeration and dynamic programming."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class EnumerationBudgetError(RuntimeError):
    """Raised when a CMDP has too many trajectories to enumerate."""


@dataclass
class DiscreteCMDP:
    """Tabular CMDP indexed by an integer context.

    Arrays are ``transitions[c, s, a, s']``, ``rewards[c, s, a]`` and
    ``initial[c, s]``. ``horizon=None`` means infinite horizon (only for
    dynamic programming). ``eta`` is the temperature of the optimality
    transform ``exp(R / eta)``.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    initial: np.ndarray
    horizon: int | None = 3
    gamma: float = 0.9
    eta: float = 1.0
    budget: int = field(default=100_000, repr=False)

    def __post_init__(self):
        self.transitions = np.asarray(self.transitions, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        self.initial = np.asarray(self.initial, dtype=float)
        c, s, a, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != (c, s, a) or self.initial.shape != (c, s):
            raise ValueError("inconsistent CMDP array shapes")
        if np.any(self.transitions < 0) or not np.allclose(self.transitions.sum(-1), 1.0, atol=1e-12):
            raise ValueError("transition rows must be probability vectors")
        if np.any(self.initial < 0) or not np.allclose(self.initial.sum(-1), 1.0, atol=1e-12):
            raise ValueError("initial distributions must be probability vectors")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    @property
    def n_contexts(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_states(self) -> int:
        return self.transitions.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[2]

    @classmethod
    def random(cls, rng: np.random.Generator, n_contexts=3, n_states=3, n_actions=2,
               horizon: int | None = 3, gamma=0.9, eta=1.0, sparsity=0.0) -> DiscreteCMDP:
        """Random CMDP; ``sparsity`` zeroes that fraction of transition entries."""
        p = rng.random((n_contexts, n_states, n_actions, n_states))
        if sparsity > 0:
            mask = rng.random(p.shape) < sparsity
            keep = np.argmax(p, axis=-1)
            mask[np.arange(n_contexts)[:, None, None], np.arange(n_states)[None, :, None],
                 np.arange(n_actions)[None, None, :], keep] = False
            p[mask] = 0.0
        p /= p.sum(-1, keepdims=True)
        r = rng.uniform(-1.0, 1.0, (n_contexts, n_states, n_actions))
        init = rng.random((n_contexts, n_states))
        init /= init.sum(-1, keepdims=True)
        return cls(p, r, init, horizon=horizon, gamma=gamma, eta=eta)

    def random_policy(self, rng: np.random.Generator) -> np.ndarray:
        pi = rng.random((self.n_contexts, self.n_states, self.n_actions)) + 0.05
        return pi / pi.sum(-1, keepdims=True)

    def uniform_policy(self) -> np.ndarray:
        return np.full((self.n_contexts, self.n_states, self.n_actions), 1.0 / self.n_actions)


def _context_policy(cmdp: DiscreteCMDP, policy, context: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    if pi.ndim == 3:
        pi = pi[context]
    if pi.shape != (cmdp.n_states, cmdp.n_actions):
        raise ValueError(f"policy table has shape {pi.shape}")
    return pi


def count_trajectories(cmdp: DiscreteCMDP) -> int:
    if cmdp.horizon is None:
        raise EnumerationBudgetError("cannot enumerate an infinite-horizon CMDP")
    s, a = cmdp.n_states, cmdp.n_actions
    return s * a * (s * a) ** (cmdp.horizon - 1) if cmdp.horizon > 0 else 1


def enumerate_trajectories(cmdp: DiscreteCMDP, policy, context: int, discount: float = 1.0):
    """All trajectories ``(s0, a0, ..., s_{T-1}, a_{T-1})`` with nonzero probability.

    Returns a list of ``(trajectory, probability, return)`` where the return is
    ``sum_t discount**t * r_t`` (undiscounted by default).
    """
    worst = count_trajectories(cmdp)
    if worst > cmdp.budget:
        raise EnumerationBudgetError(f"{worst} trajectories exceed budget {cmdp.budget}")
    pi = _context_policy(cmdp, policy, context)
    P = cmdp.transitions[context]
    R = cmdp.rewards[context]
    T = cmdp.horizon
    out = []

    def expand(prefix, state, prob, ret, t):
        for a in range(cmdp.n_actions):
            pa = prob * pi[state, a]
            if pa == 0.0:
                continue
            r = ret + discount**t * R[state, a]
            traj = prefix + (state, a)
            if t == T - 1:
                out.append((traj, pa, r))
                continue
            for s2 in range(cmdp.n_states):
                ps = pa * P[state, a, s2]
                if ps > 0.0:
                    expand(traj, s2, ps, r, t + 1)

    if T == 0:
        return [((), 1.0, 0.0)]
    for s0 in range(cmdp.n_states):
        if cmdp.initial[context, s0] > 0.0:
            expand((), s0, cmdp.initial[context, s0], 0.0, 0)
    return out


def state_values(transitions, rewards, policy, gamma: float, horizon: int | None) -> np.ndarray:
    """Exact policy evaluation for one MDP; ``transitions[s, a, s']``."""
    r_pi = np.einsum("sa,sa->s", policy, rewards)
    P_pi = np.einsum("sa,sat->st", policy, transitions)
    if horizon is None:
        if gamma >= 1.0:
            raise ValueError("infinite-horizon evaluation needs gamma < 1")
        return np.linalg.solve(np.eye(len(r_pi)) - gamma * P_pi, r_pi)
    v = np.zeros_like(r_pi)
    for _ in range(horizon):
        v = r_pi + gamma * P_pi @ v
    return v


def discounted_value(cmdp: DiscreteCMDP, policy, context: int, horizon="cmdp") -> float:
    """Exact ``E[sum_t gamma**t r_t]`` from the initial distribution.

    ``horizon`` defaults to the CMDP's own horizon; pass ``None`` for the
    infinite-horizon value.
    """
    h = cmdp.horizon if horizon == "cmdp" else horizon
    pi = _context_policy(cmdp, policy, context)
    v = state_values(cmdp.transitions[context], cmdp.rewards[context], pi, cmdp.gamma, h)
    return float(cmdp.initial[context] @ v)
