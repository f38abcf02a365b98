"""Self-paced context-distribution updates.

Each update maximises an importance-weighted estimate of the expected
initial-state value under a candidate Gaussian, minus ``alpha`` times its KL
divergence to the target distribution, subject to a KL trust region around
the current distribution. The penalty weight ``alpha`` is kept in proportion
``zeta`` to the average episode return.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from spdl.gaussian import ContextDistribution, kl_divergence, kl_divergence_grad

log = logging.getLogger(__name__)

LOG_RATIO_CLAMP = 20.0


class CurriculumConverged(Exception):
    """The context distribution already matches the target."""


@dataclass(frozen=True)
class CurriculumConfig:
    """Schedule constants.

    ``epsilon`` (the trust-region radius) is not reported for the original
    method; 0.25 is this package's default. ``std_lower_bound`` and
    ``kl_lower_bound`` enable the standard-deviation floor while the KL to
    the target exceeds ``kl_lower_bound``.
    """

    zeta: float = 1.4
    n_alpha: float = 10
    n_offset: int = 5
    epsilon: float = 0.25
    std_lower_bound: tuple | None = None
    kl_lower_bound: float | None = None
    max_iterations: int = 200

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.zeta < 0 or self.n_alpha < 0 or self.n_offset < 0:
            raise ValueError("zeta, n_alpha and n_offset must be nonnegative")
        if (self.std_lower_bound is None) != (self.kl_lower_bound is None):
            raise ValueError("std_lower_bound and kl_lower_bound go together")


@dataclass
class CurriculumState:
    iteration: int
    distribution: ContextDistribution
    alpha: float
    config: CurriculumConfig


@dataclass(frozen=True)
class ContextSampleSet:
    contexts: np.ndarray
    log_p_old: np.ndarray
    values: np.ndarray
    returns: np.ndarray

    def __post_init__(self):
        k = len(self.contexts)
        if k < 2:
            raise ValueError("need at least two context samples")
        if not (len(self.log_p_old) == len(self.values) == len(self.returns) == k):
            raise ValueError("sample arrays must have equal length")

    @classmethod
    def from_batch(cls, batch, distribution: ContextDistribution) -> ContextSampleSet:
        return cls(
            contexts=np.asarray(batch.contexts, dtype=float),
            log_p_old=distribution.log_pdf(batch.contexts),
            values=np.asarray(batch.value_estimates, dtype=float),
            returns=np.asarray(batch.returns, dtype=float),
        )


def _importance_weights(candidate: ContextDistribution, samples: ContextSampleSet):
    raw = candidate.log_pdf(samples.contexts) - samples.log_p_old
    clipped = np.clip(raw, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    return np.exp(clipped), np.abs(raw) < LOG_RATIO_CLAMP


def objective_eval(candidate: ContextDistribution, samples: ContextSampleSet,
                   target: ContextDistribution, alpha: float) -> float:
    w, _ = _importance_weights(candidate, samples)
    value = float(np.mean(w * samples.values))
    if alpha != 0.0:
        value -= alpha * kl_divergence(candidate, target)
    if not np.isfinite(value):
        raise FloatingPointError("non-finite curriculum objective")
    return value


def objective_gradient(candidate: ContextDistribution, samples: ContextSampleSet,
                       target: ContextDistribution, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """Gradient of :func:`objective_eval` w.r.t. ``(mean, log_std)``."""
    w, inside = _importance_weights(candidate, samples)
    coef = w * samples.values * inside / len(w)
    z = (samples.contexts - candidate.mean) / candidate.std
    g_mean = coef @ (z / candidate.std)
    g_log_std = coef @ (z * z - 1.0)
    if alpha != 0.0:
        k_mean, k_log_std = kl_divergence_grad(candidate, target)
        g_mean = g_mean - alpha * k_mean
        g_log_std = g_log_std - alpha * k_log_std
    if not (np.all(np.isfinite(g_mean)) and np.all(np.isfinite(g_log_std))):
        raise FloatingPointError("non-finite curriculum gradient")
    return g_mean, g_log_std


def std_clamp(distribution: ContextDistribution, target: ContextDistribution,
              std_lower_bound, kl_lower_bound: float) -> ContextDistribution:
    """Floor the standard deviations while ``KL(distribution || target)`` is large."""
    if kl_divergence(distribution, target) <= kl_lower_bound:
        return distribution
    floor = np.asarray(std_lower_bound, dtype=float)
    if np.any(floor <= 0):
        raise ValueError("std lower bound must be positive")
    return distribution.with_params(std=np.maximum(distribution.std, floor))


def compute_alpha(state: CurriculumState, samples: ContextSampleSet,
                  target: ContextDistribution) -> float:
    """Penalty weight ``zeta * mean_return / KL(current || target)``.

    Zero during the first ``n_alpha`` iterations and for negative average
    returns. Raises :class:`CurriculumConverged` once the KL is below 1e-10.
    """
    if state.iteration <= state.config.n_alpha:
        return 0.0
    kl = kl_divergence(state.distribution, target)
    if kl < 1e-10:
        raise CurriculumConverged(f"KL to target is {kl:.3g}")
    mean_return = float(np.mean(samples.returns))
    return max(0.0, state.config.zeta * mean_return / kl)


class ContextUpdate(NamedTuple):
    distribution: ContextDistribution
    success: bool
    iterations: int
    message: str = ""


def _to_dist(x, like: ContextDistribution) -> ContextDistribution:
    d = like.dim
    return ContextDistribution(x[:d], np.exp(x[d:]), like.bounds)


def _pack(dist: ContextDistribution) -> np.ndarray:
    return np.concatenate([dist.mean, dist.log_std])


def _pull_into_trust_region(x, x0, old: ContextDistribution, epsilon: float) -> np.ndarray:
    """Largest point on the segment ``x0 -> x`` with ``KL(. || old) <= epsilon``.

    The KL is monotone along such segments in (mean, log-std) coordinates, so
    bisection finds the boundary crossing.
    """
    if kl_divergence(_to_dist(x, old), old) <= epsilon:
        return x
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if kl_divergence(_to_dist(x0 + mid * (x - x0), old), old) <= epsilon:
            lo = mid
        else:
            hi = mid
    return x0 + lo * (x - x0)


def maximize_in_trust_region(samples: ContextSampleSet, current: ContextDistribution,
                             target: ContextDistribution, alpha: float, epsilon: float,
                             max_iterations: int = 200, tol: float = 1e-12) -> ContextUpdate:
    """Projected natural-gradient ascent of the curriculum objective.

    Steps follow the Fisher-preconditioned gradient with an initial length
    that would use the whole KL budget, backtracking until the objective
    improves; infeasible candidates are pulled back onto the trust-region
    boundary along the segment from ``current``.
    """
    x0 = _pack(current)
    x = x0.copy()
    best = objective_eval(current, samples, target, alpha)
    it = 0
    for it in range(1, max_iterations + 1):
        dist = _to_dist(x, current)
        g_mean, g_log_std = objective_gradient(dist, samples, target, alpha)
        direction = np.concatenate([dist.variance * g_mean, 0.5 * g_log_std])
        quad = float(np.concatenate([g_mean, g_log_std]) @ direction)
        if not quad > 0.0:
            break
        step = np.sqrt(2.0 * epsilon / quad)
        improved = False
        for _ in range(40):
            cand = _pull_into_trust_region(x + step * direction, x0, current, epsilon)
            value = objective_eval(_to_dist(cand, current), samples, target, alpha)
            if value > best + tol * max(1.0, abs(best)):
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = value - best
        x, best = cand, value
        if gain <= 1e-10 * max(1.0, abs(best)):
            break
    return ContextUpdate(_to_dist(x, current), True, it)


def update_context(state: CurriculumState, samples: ContextSampleSet,
                   target: ContextDistribution) -> ContextUpdate:
    """One trust-region step of the context distribution.

    The result never lowers the objective at the current distribution and
    stays within ``epsilon`` KL of it. The standard-deviation floor is then
    applied; if that pushes the result outside the trust region it is pulled
    back along the segment from the current distribution. Optimiser failures
    return the current distribution with ``success=False``.
    """
    cfg = state.config
    current = state.distribution
    try:
        result = maximize_in_trust_region(samples, current, target, state.alpha, cfg.epsilon,
                                          cfg.max_iterations)
    except FloatingPointError as exc:
        log.warning("context update failed: %s", exc)
        return ContextUpdate(current, False, 0, str(exc))
    new = result.distribution
    if cfg.std_lower_bound is not None:
        clamped = std_clamp(new, target, cfg.std_lower_bound, cfg.kl_lower_bound)
        if clamped is not new:
            x = _pull_into_trust_region(_pack(clamped), _pack(current), current, cfg.epsilon)
            new = _to_dist(x, current)
    return ContextUpdate(new, True, result.iterations)


class SelfPacedCurriculum:
    """Stateful driver used by the training loop."""

    name = "spdl"

    def __init__(self, initial: ContextDistribution, target: ContextDistribution,
                 config: CurriculumConfig):
        if initial.dim != target.dim:
            raise ValueError("initial and target distributions differ in dimension")
        self.distribution = initial
        self.target = target
        self.config = config
        self.converged = False

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.distribution.sample(rng)

    def summary(self):
        d = self.distribution
        return d.mean.copy(), d.std.copy(), kl_divergence(d, self.target)

    def update(self, iteration: int, batch) -> dict:
        info = {"alpha": 0.0, "updated": False, "success": True}
        if iteration <= self.config.n_offset or self.converged:
            return info
        samples = ContextSampleSet.from_batch(batch, self.distribution)
        state = CurriculumState(iteration, self.distribution, 0.0, self.config)
        try:
            state.alpha = compute_alpha(state, samples, self.target)
        except CurriculumConverged:
            self.converged = True
            self.distribution = self.target
            return info
        result = update_context(state, samples, self.target)
        info.update(alpha=state.alpha, updated=True, success=result.success,
                    previous=self.distribution)
        self.distribution = result.distribution
        return info


def run_spdl(env, learner_config, curriculum_config: CurriculumConfig,
             target: ContextDistribution, initial: ContextDistribution, iterations: int,
             seed=0, n_step: int = 2048, callback=None):
    """Alternate policy updates and context-distribution updates.

    Returns a :class:`~spdl.training.TrainingResult` holding one log record per
    iteration and the final policy.
    """
    from spdl.training import train

    curriculum = SelfPacedCurriculum(initial, target, curriculum_config)
    return train(env, curriculum, learner_config, iterations, seed=seed, n_step=n_step,
                 callback=callback)
