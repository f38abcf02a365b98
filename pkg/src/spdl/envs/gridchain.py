"""A cheap one-dimensional contextual chain.

The agent walks on integer cells ``0..length`` starting at cell 0; the scalar
context is the goal location. The continuous action is rounded to a move in
``{-1, 0, +1}`` and the reward is ``exp(-|cell - goal|)``. Used for smoke runs
of the curriculum loop where the point mass would be too slow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from spdl.envs.base import Trajectory


@dataclass(frozen=True)
class GridChainEnv:
    length: int = 10
    max_steps: int = 20
    gamma: float = 0.95

    name = "gridchain"
    context_dim = 1
    action_dim = 1

    @property
    def context_bounds(self) -> np.ndarray:
        return np.array([[0.0, float(self.length)]])

    @property
    def obs_dim(self) -> int:
        return 2

    def reset(self, context) -> np.ndarray:
        return np.array([0.0])

    def step(self, state, action, context):
        move = float(np.clip(np.rint(np.asarray(action, dtype=float)[0]), -1.0, 1.0))
        pos = float(np.clip(state[0] + move, 0.0, self.length))
        reward = float(np.exp(-abs(pos - float(context[0]))))
        return np.array([pos]), reward

    def rollout(self, policy, context, rng: np.random.Generator | None = None,
                deterministic: bool = False, max_steps: int | None = None) -> Trajectory:
        context = np.asarray(context, dtype=float).reshape(1)
        steps = self.max_steps if max_steps is None else max_steps
        noise = np.zeros((steps, 1)) if deterministic else rng.standard_normal((steps, 1))
        std = np.exp(policy.log_std)
        state = self.reset(context)
        obs = np.empty((steps, 2))
        actions = np.empty((steps, 1))
        rewards = np.empty(steps)
        for t in range(steps):
            obs[t] = np.concatenate([state, context])
            actions[t] = policy.mean_action(obs[t]) + std * noise[t]
            state, rewards[t] = self.step(state, actions[t], context)
        final_obs = np.concatenate([state, context])
        return Trajectory(context, obs, actions, rewards, False, final_obs, self.gamma)
