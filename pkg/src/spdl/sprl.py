"""Episodic self-paced updates with closed-form variational weights.

Samples ``c_k`` drawn from the current distribution ``p`` are reweighted by

    w_k ∝ exp((V_k + eta * alpha * (log mu(c_k) - log p(c_k))) / (eta + eta * alpha))

and a Gaussian is refit to the weighted samples. ``V_k`` is the soft
(episodic) value of context ``c_k``; on continuous environments the value
network's initial-state output stands in for it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from spdl.curriculum import CurriculumConfig, CurriculumConverged, CurriculumState, compute_alpha
from spdl.curriculum import ContextSampleSet, std_clamp
from spdl.gaussian import ContextDistribution, DegenerateFitError, fit_weighted, kl_divergence

log = logging.getLogger(__name__)


class DegenerateTemperatureError(FloatingPointError):
    """The variational weights could not be normalised."""


@dataclass(frozen=True)
class VariationalWeights:
    weights: np.ndarray
    eta: float
    alpha: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")

    @property
    def effective_sample_size(self) -> float:
        return float(1.0 / np.sum(self.weights**2))

    def kl_to_uniform(self) -> float:
        w = self.weights[self.weights > 0]
        return float(np.sum(w * np.log(w * len(self.weights))))


def variational_log_weights(values, log_target, log_current, eta: float, alpha: float,
                            log_base=None) -> np.ndarray:
    """Normalised log-weights; ``log_base`` adds a per-sample log factor.

    Pass ``log_base = log p(c_k)`` when the ``c_k`` enumerate a support
    instead of being drawn from ``p``.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    values = np.asarray(values, dtype=float)
    expo = (values + eta * alpha * (np.asarray(log_target) - np.asarray(log_current))) / (eta + eta * alpha)
    if log_base is not None:
        expo = expo + np.asarray(log_base, dtype=float)
    if not np.all(np.isfinite(expo)):
        raise DegenerateTemperatureError("non-finite variational exponent")
    return expo - logsumexp(expo)


def variational_weights(contexts, values, current, target, eta: float, alpha: float,
                        log_base=None) -> VariationalWeights:
    """Closed-form regularised E-step weights for samples from ``current``.

    ``current`` and ``target`` are anything with a ``log_pdf`` method.
    """
    contexts = np.asarray(contexts)
    logw = variational_log_weights(values, target.log_pdf(contexts), current.log_pdf(contexts),
                                   eta, alpha, log_base)
    w = np.exp(logw)
    if not np.isfinite(w).all() or w.sum() <= 0.0:
        raise DegenerateTemperatureError("all variational weights underflowed")
    return VariationalWeights(w / w.sum(), float(eta), float(alpha))


def sprl_update(current: ContextDistribution, weights: VariationalWeights, contexts,
                target: ContextDistribution | None = None, std_lower_bound=None,
                kl_lower_bound: float | None = None) -> ContextDistribution:
    """Weighted Gaussian refit followed by the standard-deviation floor."""
    new = fit_weighted(contexts, weights.weights, bounds=current.bounds)
    if std_lower_bound is not None:
        if target is None:
            raise ValueError("the std floor needs the target distribution")
        new = std_clamp(new, target, std_lower_bound, kl_lower_bound)
    return new


def temperature_for_kl(contexts, values, current, target, alpha: float, epsilon: float,
                       lo: float = 1e-6, hi: float = 1e6) -> float:
    """Bisect ``eta`` so the weights sit ``epsilon`` (KL to uniform) from the samples.

    Returns ``hi`` when even the flattest weights are within the bound.
    """
    scale = max(float(np.std(values)), 1e-12)
    a, b = np.log(lo * scale), np.log(hi * scale)

    def excess(log_eta):
        return variational_weights(contexts, values, current, target, np.exp(log_eta), alpha).kl_to_uniform() - epsilon

    if excess(b) > 0:
        return float(np.exp(b))
    if excess(a) <= 0:
        return float(np.exp(a))
    for _ in range(60):
        mid = 0.5 * (a + b)
        if excess(mid) > 0:
            a = mid
        else:
            b = mid
    return float(np.exp(b))


class SPRLCurriculum:
    """Curriculum that refits the context Gaussian to variational weights.

    The temperature is chosen each iteration so that the weights stay within
    ``weight_epsilon`` KL of the empirical sample distribution; ``alpha``
    follows the same schedule as the trust-region curriculum.
    """

    name = "sprl"

    def __init__(self, initial: ContextDistribution, target: ContextDistribution,
                 config: CurriculumConfig, weight_epsilon: float = 0.5):
        self.distribution = initial
        self.target = target
        self.config = config
        self.weight_epsilon = weight_epsilon
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
            alpha = compute_alpha(state, samples, self.target)
        except CurriculumConverged:
            self.converged = True
            self.distribution = self.target
            return info
        try:
            eta = temperature_for_kl(samples.contexts, samples.values, self.distribution,
                                     self.target, alpha, self.weight_epsilon)
            weights = variational_weights(samples.contexts, samples.values, self.distribution,
                                          self.target, eta, alpha)
            new = sprl_update(self.distribution, weights, samples.contexts, self.target,
                              self.config.std_lower_bound, self.config.kl_lower_bound)
        except (DegenerateFitError, DegenerateTemperatureError) as exc:
            log.warning("SPRL update skipped: %s", exc)
            info.update(alpha=alpha, success=False)
            return info
        info.update(alpha=alpha, updated=True, eta=eta, previous=self.distribution)
        self.distribution = new
        return info
