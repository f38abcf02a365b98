import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from spdl.curriculum import (
    ContextSampleSet,
    CurriculumConfig,
    CurriculumConverged,
    CurriculumState,
    SelfPacedCurriculum,
    compute_alpha,
    objective_eval,
    objective_gradient,
    run_spdl,
    std_clamp,
    update_context,
)
from spdl.envs import GridChainEnv
from spdl.gaussian import ContextDistribution, kl_divergence
from spdl.rl import GaeConfig

from oracles import objective_gradient_error, random_sample_set


def N(m, s):
    return ContextDistribution(np.atleast_1d(m).astype(float), np.atleast_1d(s).astype(float))


def samples_from(dist, contexts, values, returns=None):
    c = np.asarray(contexts, dtype=float).reshape(len(values), -1)
    v = np.asarray(values, dtype=float)
    return ContextSampleSet(c, dist.log_pdf(c), v, v if returns is None else np.asarray(returns, dtype=float))


def state(dist, alpha=0.0, iteration=20, **cfg):
    return CurriculumState(iteration, dist, alpha, CurriculumConfig(**cfg))


def test_objective_identity_weights(rng):
    old, s = random_sample_set(rng)
    target = N(np.zeros(2), np.ones(2))
    assert objective_eval(old, s, target, 0.0) == pytest.approx(s.values.mean(), rel=1e-14)
    assert objective_eval(target, s, target, 3.0) == pytest.approx(objective_eval(target, s, target, 0.0))


def test_objective_hand_computed():
    s = samples_from(N(0, 1), [0.0, 1.0], [1.0, 2.0])
    expected = 0.5 * (np.exp(-0.5) * 1 + np.exp(0.5) * 2)
    assert objective_eval(N(1, 1), s, N(0, 1), 0.0) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(1.951987, abs=1e-6)


def test_objective_gradient_finite_differences():
    rng = np.random.default_rng(0)
    assert max(objective_gradient_error(rng) for _ in range(25)) < 1e-5


def test_gradient_vanishes_at_grid_argmax():
    # With few samples the estimate rewards collapsing onto one context, so the
    # oracle uses a dense sample cloud and a penalty strong enough to give an
    # interior maximum inside the grid.
    rng = np.random.default_rng(3)
    old = N(0, 1)
    c = old.sample(rng, 400)
    s = samples_from(old, c, 1.0 + np.tanh(c[:, 0]))
    target, alpha = N(0.7, 0.5), 2.0
    f = lambda x: objective_eval(ContextDistribution([x[0]], [np.exp(x[1])]), s, target, alpha)
    m_grid, l_grid = np.meshgrid(np.linspace(-1, 2, 151), np.linspace(-1.5, 0.5, 101), indexing="ij")
    vals = np.vectorize(lambda m, l: f([m, l]))(m_grid, l_grid)
    i, j = np.unravel_index(np.argmax(vals), vals.shape)
    assert 0 < i < 150 and 0 < j < 100
    res = minimize(lambda x: -f(x), [m_grid[i, j], l_grid[i, j]], method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 5000})
    g_m, g_l = objective_gradient(ContextDistribution([res.x[0]], [np.exp(res.x[1])]), s, target, alpha)
    assert np.hypot(g_m[0], g_l[0]) < 1e-4


def test_huge_alpha_follows_kl_gradient(rng):
    old, s = random_sample_set(rng)
    cand = N(old.mean + 0.2, old.std)
    target = N([1.0, -1.0], [0.3, 0.4])
    g = np.concatenate(objective_gradient(cand, s, target, 1e9))
    from spdl.gaussian import kl_divergence_grad

    k = -np.concatenate(kl_divergence_grad(cand, target))
    assert g @ k / (np.linalg.norm(g) * np.linalg.norm(k)) > 0.999


def test_compute_alpha_examples():
    target = N(0, 1)
    dist = N(np.sqrt(10.0), 1)
    s = samples_from(dist, [0.0, 1.0], [0.0, 0.0], returns=[10.0, 10.0])
    assert compute_alpha(state(dist, zeta=1.4, n_alpha=10, iteration=11), s, target) == pytest.approx(2.8)
    assert compute_alpha(state(dist, zeta=1.4, n_alpha=10, iteration=10), s, target) == 0.0
    zero = samples_from(dist, [0.0, 1.0], [0.0, 0.0], returns=[0.0, 0.0])
    assert compute_alpha(state(dist, iteration=50), zero, target) == 0.0
    negative = samples_from(dist, [0.0, 1.0], [0.0, 0.0], returns=[-3.0, -1.0])
    assert compute_alpha(state(dist, iteration=50), negative, target) == 0.0
    with pytest.raises(CurriculumConverged):
        compute_alpha(state(target, iteration=50), s, target)


def test_std_clamp_examples():
    target = N([2.5, 0.5, 0.0], [0.004, 0.00375, 0.002])
    floor = (0.2, 0.1875, 0.1)
    far = N([0.0, 4.0, 2.0], [0.1, 0.1, 0.05])
    assert kl_divergence(far, target) > 8000
    np.testing.assert_array_equal(std_clamp(far, target, floor, 8000).std, [0.2, 0.1875, 0.1])
    near = N([2.5, 0.5, 0.0], [0.1, 0.1, 0.05])
    assert kl_divergence(near, target) < 8000
    assert std_clamp(near, target, floor, 8000) is near
    wide = N([0.0, 4.0, 2.0], [1.0, 1.0, 1.0])
    np.testing.assert_array_equal(std_clamp(wide, target, floor, 8000).std, wide.std)


def test_flat_objective_stays_feasible():
    old = N(0.0, 1.0)
    s = samples_from(old, np.linspace(-2, 2, 5), np.ones(5))
    res = update_context(state(old, epsilon=0.05), s, N(3, 1))
    assert kl_divergence(res.distribution, old) <= 0.05 + 1e-12
    # The sample estimate is not flat in the candidate, so only the one-sided contract applies.
    assert objective_eval(res.distribution, s, N(3, 1), 0.0) >= objective_eval(old, s, N(3, 1), 0.0) - 1e-9


def feasible_grid_best(s, old, target, alpha, eps):
    best = -np.inf
    for m in np.linspace(old.mean[0] - 1, old.mean[0] + 1, 401):
        for ls in np.linspace(old.log_std[0] - 0.6, old.log_std[0] + 0.6, 241):
            cand = ContextDistribution([m], [np.exp(ls)])
            if kl_divergence(cand, old) <= eps:
                best = max(best, objective_eval(cand, s, target, alpha))
    return best


def test_linear_values_move_mean_up_and_beat_grid():
    old = N(0.0, 1.0)
    c = np.arange(-2.0, 3.0)
    s = samples_from(old, c, c + 3.0)
    res = update_context(state(old, epsilon=0.05), s, N(0, 1))
    assert res.distribution.mean[0] > 0.0
    best = feasible_grid_best(s, old, N(0, 1), 0.0, 0.05)
    assert objective_eval(res.distribution, s, N(0, 1), 0.0) >= best - 1e-6


def test_penalty_dominant_step_approaches_target():
    old = N(0.0, 1.0)
    target = N(2.0, 0.3)
    s = samples_from(old, np.linspace(-2, 2, 5), np.linspace(0, 1, 5))
    res = update_context(state(old, alpha=1e6, epsilon=0.1), s, target)
    assert kl_divergence(res.distribution, target) < kl_divergence(old, target)
    assert kl_divergence(res.distribution, old) <= 0.1 + 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.5, 5.0]), st.sampled_from([0.01, 0.25, 1.0]))
def test_trust_region_and_monotone_improvement(seed, alpha, eps):
    rng = np.random.default_rng(seed)
    old, s = random_sample_set(rng, dim=int(rng.integers(1, 4)))
    target = N(rng.normal(size=old.dim), rng.uniform(0.05, 1.0, old.dim))
    res = update_context(state(old, alpha=alpha, epsilon=eps), s, target)
    assert res.success
    assert kl_divergence(res.distribution, old) <= eps + 1e-6
    assert objective_eval(res.distribution, s, target, alpha) >= objective_eval(old, s, target, alpha) - 1e-9


def test_std_floor_respects_trust_region():
    old = N([0.0, 0.0], [0.05, 0.05])
    target = N([3.0, 3.0], [0.001, 0.001])
    s = samples_from(old, old.sample(np.random.default_rng(0), 6), np.ones(6))
    st_ = state(old, epsilon=0.25, std_lower_bound=(1.0, 1.0), kl_lower_bound=10.0)
    res = update_context(st_, s, target)
    assert kl_divergence(res.distribution, old) <= 0.25 + 1e-9
    assert np.all(res.distribution.std > old.std)


def test_repeated_penalty_steps_converge_1d():
    old = N(3.0, 2.0)
    target = N(-1.0, 0.2)
    eps = 0.25
    budget = int(np.ceil(kl_divergence(old, target) / eps)) + 50
    dist = old
    kls = [kl_divergence(dist, target)]
    rng = np.random.default_rng(0)
    for _ in range(budget):
        c = dist.sample(rng, 10)
        s = samples_from(dist, c, np.ones(10))
        dist = update_context(state(dist, alpha=1e4, epsilon=eps), s, target).distribution
        kls.append(kl_divergence(dist, target))
        if kls[-1] < 1e-3:
            break
    assert kls[-1] < 1e-3
    assert all(b <= a + 1e-12 for a, b in zip(kls, kls[1:]))


def test_alpha_zero_climbs_values():
    # With no penalty the curriculum keeps moving toward higher-value contexts.
    dist = N(0.0, 1.0)
    rng = np.random.default_rng(1)
    means = [0.0]
    for _ in range(10):
        c = dist.sample(rng, 40)
        s = samples_from(dist, c, np.exp(0.5 * c[:, 0]))
        dist = update_context(state(dist, epsilon=0.1), s, N(-5, 1)).distribution
        means.append(dist.mean[0])
    assert means[-1] > 1.0
    assert np.all(np.diff(means) > 0)


def test_curriculum_offset_and_converged_freeze():
    env = GridChainEnv()
    target = ContextDistribution([9.0], [0.05], env.context_bounds)
    cur = SelfPacedCurriculum(target, target, CurriculumConfig(n_offset=0, n_alpha=0))
    from types import SimpleNamespace

    batch = SimpleNamespace(contexts=np.array([[9.0], [9.1]]), value_estimates=np.ones(2), returns=np.ones(2))
    info = cur.update(1, batch)
    assert cur.converged and not info["updated"]
    cur2 = SelfPacedCurriculum(N(1, 1), target, CurriculumConfig(n_offset=5))
    assert cur2.update(5, batch)["updated"] is False


def test_run_spdl_zero_iterations_and_determinism():
    env = GridChainEnv()
    b = env.context_bounds
    init, target = ContextDistribution([1.0], [1.0], b), ContextDistribution([9.0], [0.05], b)
    cfg = CurriculumConfig(n_alpha=2, n_offset=1)
    empty = run_spdl(env, GaeConfig(), cfg, target, init, 0, seed=0, n_step=100)
    assert len(empty) == 0 and empty.curriculum.distribution is init
    a = run_spdl(env, GaeConfig(), cfg, target, init, 6, seed=3, n_step=100)
    b2 = run_spdl(env, GaeConfig(), cfg, target, init, 6, seed=3, n_step=100)
    strip = lambda recs: [{k: v for k, v in r.items() if k != "seconds"} for r in recs]
    for r1, r2 in zip(strip(a), strip(b2)):
        assert r1.keys() == r2.keys()
        for k in r1:
            np.testing.assert_array_equal(r1[k], r2[k])
    assert [r["alpha"] for r in a][:2] == [0.0, 0.0]


def test_config_validation():
    with pytest.raises(ValueError):
        CurriculumConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        CurriculumConfig(std_lower_bound=(0.1,))
