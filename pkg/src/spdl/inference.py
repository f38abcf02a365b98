"""Exact checks of the inference view of self-paced curricula on tabular CMDPs.

A trajectory ``tau`` in context ``c`` is "optimal" with likelihood
proportional to ``exp(R(tau, c) / eta)``. Everything here enumerates
trajectories exactly and works with log-likelihoods.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from spdl.envs.discrete import DiscreteCMDP, enumerate_trajectories, state_values


class Categorical:
    """A distribution over the integer contexts ``0..n-1``."""

    def __init__(self, probs):
        p = np.asarray(probs, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must lie on the simplex")
        self.probs = p

    def __len__(self) -> int:
        return self.probs.size

    def log_pdf(self, c):
        with np.errstate(divide="ignore"):
            return np.log(self.probs[np.asarray(c, dtype=int)])

    @classmethod
    def from_logits(cls, logits) -> Categorical:
        logits = np.asarray(logits, dtype=float)
        return cls(np.exp(logits - logsumexp(logits)))


def kl_categorical(p, q) -> float:
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    q = np.asarray(getattr(q, "probs", q), dtype=float)
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


def total_variation(p, q) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass
class OptimalityModel:
    """A CMDP, a fixed policy, a context prior and a target.

    ``cmdp.eta`` selects the transform ``f(R) = exp(R / eta)``.
    """

    cmdp: DiscreteCMDP
    policy: np.ndarray
    prior: Categorical
    target: Categorical
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        n = self.cmdp.n_contexts
        if len(self.prior) != n or len(self.target) != n:
            raise ValueError("prior/target must cover every context")

    @property
    def eta(self) -> float:
        return self.cmdp.eta

    def with_eta(self, eta: float) -> OptimalityModel:
        return OptimalityModel(replace(self.cmdp, eta=eta), self.policy, self.prior, self.target)

    def log_likelihoods(self) -> np.ndarray:
        """``log sum_tau f(R(tau, c)) p(tau | c)`` for every context."""
        if "loglik" not in self._cache:
            self._cache["loglik"] = np.array([
                log_optimality_likelihood(self, c) for c in range(self.cmdp.n_contexts)
            ])
        return self._cache["loglik"]


def log_optimality_likelihood(model: OptimalityModel, context: int) -> float:
    trajs = enumerate_trajectories(model.cmdp, model.policy, context)
    logp = np.log([p for _, p, _ in trajs])
    returns = np.array([r for _, _, r in trajs])
    return float(logsumexp(returns / model.eta + logp))


def optimality_likelihood(model: OptimalityModel, context: int) -> float:
    """Unnormalised ``p(O | c) = sum_tau f(R(tau, c)) p(tau | c)``."""
    return float(np.exp(log_optimality_likelihood(model, context)))


def expected_return(model: OptimalityModel, context: int) -> float:
    trajs = enumerate_trajectories(model.cmdp, model.policy, context)
    return float(sum(p * r for _, p, r in trajs))


def soft_value(model: OptimalityModel, context: int | None = None):
    """Episodic soft value ``eta * log E[exp(R / eta)]``."""
    v = model.eta * model.log_likelihoods()
    return v if context is None else float(v[context])


def tempered_posterior(model: OptimalityModel, alpha: float) -> np.ndarray:
    """``(1/Z) p(c | O)^(1/(1+alpha)) * mu(c)^(alpha/(1+alpha))``."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    c = np.arange(model.cmdp.n_contexts)
    log_post = model.log_likelihoods() + model.prior.log_pdf(c)
    with np.errstate(invalid="ignore"):
        logits = log_post / (1.0 + alpha) + (alpha / (1.0 + alpha)) * model.target.log_pdf(c)
    logits = np.where(np.isnan(logits), -np.inf, logits)
    return np.exp(logits - logsumexp(logits))


def theorem1_objective(model: OptimalityModel, p, alpha: float) -> float:
    """``E_p[log p(O|c)] - KL(p || prior) - alpha * KL(p || target)``."""
    p = np.asarray(p, dtype=float)
    return float(p @ model.log_likelihoods() - kl_categorical(p, model.prior)
                 - alpha * kl_categorical(p, model.target))


def theorem1_residual(model: OptimalityModel, alpha: float, trials) -> float:
    """Spread over ``trials`` of ``(1+alpha) KL(p || q*) + objective(p)``.

    ``q*`` is the tempered posterior; the sum is independent of ``p``, so
    the spread is zero up to rounding.
    """
    trials = [np.asarray(getattr(t, "probs", t), dtype=float) for t in trials]
    if len(trials) < 2:
        raise ValueError("need at least two trial distributions")
    if any(np.any(t <= 0) for t in trials):
        raise ValueError("trial distributions need full support")
    q = tempered_posterior(model, alpha)
    g = [(1.0 + alpha) * kl_categorical(t, q) + theorem1_objective(model, t, alpha) for t in trials]
    return float(max(g) - min(g))


def theorem2_weights(model: OptimalityModel, alpha: float) -> np.ndarray:
    """``q(c) ∝ p(c) exp((V(c) + eta alpha (log mu - log p)) / (eta + eta alpha))``."""
    c = np.arange(model.cmdp.n_contexts)
    eta = model.eta
    log_p = model.prior.log_pdf(c)
    expo = log_p + (soft_value(model) + eta * alpha * (model.target.log_pdf(c) - log_p)) / (eta + eta * alpha)
    return np.exp(expo - logsumexp(expo))


def theorem2_check(model: OptimalityModel, eta: float, alpha: float) -> float:
    """Largest pointwise gap between the closed form and the tempered posterior."""
    m = model.with_eta(eta)
    return float(np.max(np.abs(theorem2_weights(m, alpha) - tempered_posterior(m, alpha))))


def augment_with_termination(cmdp: DiscreteCMDP, gamma: float | None = None) -> DiscreteCMDP:
    """Replace discounting by a ``1 - gamma`` chance of entering an absorbing zero-reward state.

    The returned CMDP has one extra state (the last index) and ``gamma = 1``.
    """
    g = cmdp.gamma if gamma is None else gamma
    C, S, A = cmdp.rewards.shape
    P = np.zeros((C, S + 1, A, S + 1))
    P[:, :S, :, :S] = g * cmdp.transitions
    P[:, :S, :, S] = 1.0 - g
    P[:, S, :, S] = 1.0
    R = np.zeros((C, S + 1, A))
    R[:, :S] = cmdp.rewards
    init = np.zeros((C, S + 1))
    init[:, :S] = cmdp.initial
    return DiscreteCMDP(P, R, init, horizon=cmdp.horizon, gamma=1.0, eta=cmdp.eta, budget=cmdp.budget)


def _augmented_policy(policy, n_actions: int) -> np.ndarray:
    pi = np.asarray(policy, dtype=float)
    pad = np.full(pi.shape[:-2] + (1, n_actions), 1.0 / n_actions)
    return np.concatenate([pi, pad], axis=-2)


def absorbing_value(cmdp: DiscreteCMDP, policy, context: int, horizon: int | None) -> float:
    """Undiscounted value of a CMDP whose last state is absorbing with zero reward."""
    pi = policy[context] if np.ndim(policy) == 3 else policy
    P = cmdp.transitions[context]
    R = cmdp.rewards[context]
    if horizon is not None:
        v = state_values(P, R, pi, 1.0, horizon)
    else:
        r_pi = np.einsum("sa,sa->s", pi, R)[:-1]
        P_pi = np.einsum("sa,sat->st", pi, P)[:-1, :-1]
        v = np.append(np.linalg.solve(np.eye(len(r_pi)) - P_pi, r_pi), 0.0)
    return float(cmdp.initial[context] @ v)


def discount_termination_check(cmdp: DiscreteCMDP, policy, gamma: float, context: int = 0,
                               horizon="cmdp") -> tuple[float, float]:
    """Discounted value vs. the undiscounted value under the terminating dynamics."""
    h = cmdp.horizon if horizon == "cmdp" else horizon
    pi = policy[context] if np.ndim(policy) == 3 else np.asarray(policy)
    discounted = float(cmdp.initial[context] @ state_values(
        cmdp.transitions[context], cmdp.rewards[context], pi, gamma, h))
    aug = augment_with_termination(cmdp, gamma)
    undiscounted = absorbing_value(aug, _augmented_policy(pi, cmdp.n_actions), context, h)
    return discounted, undiscounted


def random_model(rng: np.random.Generator, n_contexts: int = 3, n_states: int = 3,
                 n_actions: int = 2, horizon: int = 3, eta: float = 1.0) -> OptimalityModel:
    cmdp = DiscreteCMDP.random(rng, n_contexts, n_states, n_actions, horizon=horizon, eta=eta)
    prior = Categorical(rng.dirichlet(np.ones(n_contexts)))
    target = Categorical(rng.dirichlet(np.ones(n_contexts)))
    return OptimalityModel(cmdp, cmdp.random_policy(rng), prior, target)


def run_suite(seed: int = 0, n_models: int = 50) -> list[tuple[str, bool, float]]:
    """Randomised verification of every identity; ``(name, passed, worst)`` rows."""
    rng = np.random.default_rng(seed)
    rows = []

    worst = 0.0
    for _ in range(n_models):
        m = random_model(rng, n_contexts=int(rng.integers(2, 5)), horizon=int(rng.integers(1, 4)))
        n = m.cmdp.n_contexts
        trials = [m.prior, m.target, np.full(n, 1.0 / n)] + [rng.dirichlet(np.ones(n)) for _ in range(5)]
        for alpha in (0.0, 0.5, 1.0, 5.0, 100.0):
            worst = max(worst, theorem1_residual(m, alpha, trials))
    rows.append(("theorem1_residual < 1e-8", worst < 1e-8, worst))

    worst = 0.0
    for _ in range(n_models):
        m = random_model(rng)
        for c in range(m.cmdp.n_contexts):
            gap = log_optimality_likelihood(m, c) - expected_return(m, c)
            worst = min(worst, gap)
    rows.append(("jensen bound log p(O|c) >= E[R]", worst >= -1e-12, worst))

    worst = 0.0
    for eta in (0.1, 0.5, 1.0, 2.0, 10.0):
        for alpha in (0.0, 0.5, 1.0, 5.0, 100.0):
            m = random_model(rng)
            worst = max(worst, theorem2_check(m, eta, alpha))
    rows.append(("theorem2_check < 1e-10", worst < 1e-10, worst))

    worst = 0.0
    for i in range(20):
        gamma = (0.0, 0.5, 0.8, 0.95)[i % 4]
        cmdp = DiscreteCMDP.random(rng, n_contexts=2, n_states=4, n_actions=2,
                                   horizon=None if i % 2 else 5, gamma=gamma)
        pol = cmdp.random_policy(rng)
        for c in range(cmdp.n_contexts):
            a, b = discount_termination_check(cmdp, pol, gamma, c)
            worst = max(worst, abs(a - b))
    rows.append(("discount_termination_check < 1e-10", worst < 1e-10, worst))
    return rows
