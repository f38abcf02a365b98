from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Trajectory:
    """One episode in a fixed context.

    ``observations[t]`` is the observation the action ``actions[t]`` was taken
    in; ``final_observation`` follows the last action. ``terminal`` is true when
    the episode ended in an absorbing event (crash) rather than the step limit.
    """

    context: np.ndarray
    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: bool
    final_observation: np.ndarray
    gamma: float

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def discounted_return(self) -> float:
        discounts = self.gamma ** np.arange(len(self.rewards))
        return float(discounts @ self.rewards)

    @property
    def initial_observation(self) -> np.ndarray:
        return self.observations[0]
