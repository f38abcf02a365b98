"""The shared curriculum training loop.

Random streams are derived from one seed with :class:`numpy.random.SeedSequence`
spawning, in this fixed order: context sampling, policy initialisation,
rollouts (including minibatch shuffling), evaluation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from spdl.gaussian import kl_divergence
from spdl.rl import GaeConfig, Optimizers, PolicyParams, collect_batch, ppo_update


class Streams(NamedTuple):
    context: np.random.Generator
    init: np.random.Generator
    rollout: np.random.Generator
    evaluation: np.random.Generator


def make_streams(seed) -> Streams:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return Streams(*(np.random.default_rng(s) for s in ss.spawn(4)))


@dataclass
class TrainingResult:
    records: list = field(default_factory=list)
    params: PolicyParams | None = None
    curriculum: object = None

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def iterate_training(env, curriculum, learner_config: GaeConfig, iterations: int, seed=0,
                     n_step: int = 2048, callback=None, streams: Streams | None = None,
                     result: TrainingResult | None = None):
    """Generator form of :func:`train`; yields each record as it completes."""
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    streams = streams or make_streams(seed)
    params = PolicyParams.init(streams.init, env.obs_dim, env.action_dim, learner_config.hidden)
    optimizers = Optimizers.for_params(params, learner_config)
    if result is not None:
        result.params, result.curriculum = params, curriculum

    def sample_context():
        return curriculum.sample(streams.context)

    for i in range(1, iterations + 1):
        start = time.perf_counter()
        batch = collect_batch(env, params, sample_context, n_step, streams.rollout, learner_config)
        params, diagnostics = ppo_update(params, batch, learner_config, streams.rollout, optimizers)
        info = curriculum.update(i, batch)
        mean, std, kl = curriculum.summary()
        record = {
            "iteration": i,
            "train_return_mean": float(np.mean(batch.returns)),
            "kl_to_target": kl,
            "alpha": float(info.get("alpha", 0.0)),
            "ctx_mean": mean,
            "ctx_std": std,
            "context_update_ok": bool(info.get("success", True)),
            "n_steps": batch.n_steps,
            "n_episodes": batch.n_episodes,
            **diagnostics,
        }
        if "previous" in info:
            record["kl_step"] = kl_divergence(curriculum.distribution, info["previous"])
        if callback is not None:
            callback(i, params, record)
        record["seconds"] = time.perf_counter() - start
        if result is not None:
            result.records.append(record)
            result.params = params
        yield record


def train(env, curriculum, learner_config: GaeConfig, iterations: int, seed=0,
          n_step: int = 2048, callback=None, streams: Streams | None = None) -> TrainingResult:
    """Run ``iterations`` rounds of rollouts, policy update and curriculum update.

    Each record holds the iteration number, mean discounted training return,
    ``alpha``, the curriculum's distribution summary after the update and the
    learner diagnostics. ``callback(iteration, params, record)`` may add
    fields (the harness adds target evaluations) before timing is recorded.
    """
    result = TrainingResult()
    for _ in iterate_training(env, curriculum, learner_config, iterations, seed, n_step,
                              callback, streams, result):
        pass
    if result.curriculum is None:
        result.curriculum = curriculum
    return result
