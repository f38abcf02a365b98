from spdl.envs.base import Trajectory
from spdl.envs.discrete import (
    DiscreteCMDP,
    EnumerationBudgetError,
    discounted_value,
    enumerate_trajectories,
)
from spdl.envs.gridchain import GridChainEnv
from spdl.envs.pointmass import PointMassEnv, StepResult

ENV_NAMES = ("pointmass2d", "pointmass3d", "gridchain")


def make_env(name: str, **kwargs):
    if name == "pointmass2d":
        return PointMassEnv(context_dim=2, **kwargs)
    if name == "pointmass3d":
        return PointMassEnv(context_dim=3, **kwargs)
    if name == "gridchain":
        return GridChainEnv(**kwargs)
    raise ValueError(f"unknown environment {name!r}; choose from {ENV_NAMES}")


__all__ = [
    "DiscreteCMDP",
    "ENV_NAMES",
    "EnumerationBudgetError",
    "GridChainEnv",
    "PointMassEnv",
    "StepResult",
    "Trajectory",
    "discounted_value",
    "enumerate_trajectories",
    "make_env",
]
