"""Point mass that must pass through a gate in a wall to reach a goal.

Context is ``[gate_pos, gate_width, friction]``; the 2D variant drops the
friction coordinate and fixes it to zero. Observations are the state
``[x, x_dot, y, y_dot]`` followed by the (possibly 2D) context.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from spdl import kernels
from spdl.envs.base import Trajectory

CONTEXT_BOUNDS_3D = np.array([[-4.0, 4.0], [0.5, 8.0], [0.0, 4.0]])
INITIAL_STATE = (0.0, 0.0, 3.0, 0.0)


class StepResult(NamedTuple):
    next_state: np.ndarray
    reward: float
    terminal: bool
    crash: bool


@dataclass(frozen=True)
class PointMassEnv:
    context_dim: int = 3
    dt: float = 0.05
    action_limit: float = 10.0
    max_steps: int = 100
    gamma: float = 0.95
    backend: str | None = None

    def __post_init__(self):
        if self.context_dim not in (2, 3):
            raise ValueError("point mass supports 2 or 3 context dimensions")
        if self.dt <= 0 or self.action_limit <= 0 or self.max_steps < 1:
            raise ValueError("dt, action_limit and max_steps must be positive")

    @property
    def name(self) -> str:
        return f"pointmass{self.context_dim}d"

    @property
    def context_bounds(self) -> np.ndarray:
        return CONTEXT_BOUNDS_3D[: self.context_dim].copy()

    @property
    def obs_dim(self) -> int:
        return 4 + self.context_dim

    @property
    def action_dim(self) -> int:
        return 2

    def _kernels(self):
        return kernels if self.backend is None else kernels.get_backend(self.backend)

    def physical_context(self, context) -> tuple[float, float, float]:
        c = np.asarray(context, dtype=float)
        if c.shape != (self.context_dim,):
            raise ValueError(f"expected context of shape ({self.context_dim},), got {c.shape}")
        friction = float(c[2]) if self.context_dim == 3 else 0.0
        return float(c[0]), float(c[1]), friction

    def reset(self, context) -> np.ndarray:
        self.physical_context(context)
        return np.array(INITIAL_STATE)

    def observe(self, state, context) -> np.ndarray:
        return np.concatenate([np.asarray(state, dtype=float), np.asarray(context, dtype=float)])

    def step(self, state, action, context) -> StepResult:
        gate_pos, gate_width, friction = self.physical_context(context)
        nxt, reward, crash = self._kernels().pointmass_step(
            np.asarray(state, dtype=float), np.asarray(action, dtype=float),
            gate_pos, gate_width, friction, self.dt, self.action_limit,
        )
        return StepResult(nxt, reward, crash, crash)

    def rollout(self, policy, context, rng: np.random.Generator | None = None,
                deterministic: bool = False, max_steps: int | None = None) -> Trajectory:
        """Run ``policy`` (a :class:`~spdl.rl.PolicyParams`) for one episode."""
        context = np.asarray(context, dtype=float)
        gate_pos, gate_width, friction = self.physical_context(context)
        steps = self.max_steps if max_steps is None else max_steps
        if deterministic:
            noise = np.zeros((steps, 2))
        else:
            noise = rng.standard_normal((steps, 2))
        obs, actions, rewards, crashed, final_obs = self._kernels().pointmass_rollout(
            policy.policy, policy.log_std, context, gate_pos, gate_width, friction,
            noise, self.dt, self.action_limit, deterministic,
        )
        return Trajectory(context, obs, actions, rewards, crashed, final_obs, self.gamma)
