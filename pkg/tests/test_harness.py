import json
import warnings

import numpy as np
import pytest
from scipy import integrate

from spdl.envs import GridChainEnv
from spdl.gaussian import ContextDistribution
from spdl.harness import (
    DefaultCurriculum,
    ExperimentConfig,
    RandomCurriculum,
    aggregate,
    check_invariants,
    csv_body_without_timing,
    csv_columns,
    evaluate_target,
    load_config,
    meta_path,
    read_csv,
    run_experiment,
    trust_region_steps,
    uniform_kl_to_gaussian,
    welch_p_value,
)
from spdl.rl import PolicyParams


def quick(**kw):
    base = dict(env="gridchain", iterations=4, n_step=60, eval_episodes=3)
    return ExperimentConfig.create(**{**base, **kw})


def test_pointmass_defaults_follow_tables():
    c3 = ExperimentConfig.create(env="pointmass3d")
    assert c3.init_mean == (0.0, 4.25, 2.0) and c3.init_std == (2.0, 1.875, 1.0)
    assert c3.target_mean == (2.5, 0.5, 0.0) and c3.target_std == (0.004, 0.00375, 0.002)
    assert c3.std_lower_bound == (0.2, 0.1875, 0.1) and c3.kl_lower_bound == 8000.0
    assert (c3.zeta, c3.n_alpha, c3.n_offset, c3.n_step) == (1.4, 10, 5, 2048)
    c2 = ExperimentConfig.create()
    assert c2.env == "pointmass2d" and c2.target_mean == (2.5, 0.5)


@pytest.mark.parametrize("bad", [dict(iterations=-1), dict(epsilon=0.0), dict(eval_episodes=1),
                                 dict(curriculum="alp"), dict(init_mean=(0.0,)), dict(target_mean=(9.0, 0.5)),
                                 dict(hidden=(0, 3)), dict(gamma=1.5), dict(foo=1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ExperimentConfig.create(**bad)


def test_yaml_config(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("env: gridchain\nzeta: 2.5\nhidden: [8, 8]\n")
    cfg = load_config(p, seed=4, iterations=None)
    assert cfg.zeta == 2.5 and cfg.hidden == (8, 8) and cfg.seed == 4
    p.write_text("zeta: 2.5\nzetta: 1\n")
    with pytest.raises(ValueError, match="zetta"):
        load_config(p)
    p.write_text("learner:\n  lam: 0.9\n")
    with pytest.raises(ValueError):
        load_config(p)


def test_zero_iterations_header_only(tmp_path):
    out = tmp_path / "r.csv"
    res = run_experiment(quick(iterations=0), out)
    assert res.rows == []
    assert out.read_text().strip().split(",") == csv_columns(1)
    assert json.loads(meta_path(out).read_text())["curriculum"] == "spdl"


def test_default_curriculum_is_fixed(tmp_path):
    cfg = quick(curriculum="default")
    res = run_experiment(cfg, tmp_path / "d.csv")
    for r in res.rows:
        assert r["kl_to_target"] == 0.0
        assert r["ctx_mean_0"] == cfg.target_mean[0] and r["ctx_std_0"] == cfg.target_std[0]
    assert check_invariants(cfg, read_csv(tmp_path / "d.csv")) == []


def test_random_curriculum_box_and_kl(rng):
    bounds = np.array([[-4.0, 4.0], [0.5, 8.0]])
    target = ContextDistribution([2.5, 0.5], [0.3, 0.4])
    cur = RandomCurriculum(bounds, target)
    draws = np.array([cur.sample(rng) for _ in range(2000)])
    assert np.all(draws >= bounds[:, 0]) and np.all(draws <= bounds[:, 1])
    # Quadrature reference for KL(uniform || Gaussian), one dimension at a time.
    ref = 0.0
    for (lo, hi), m, s in zip(bounds, target.mean, target.std):
        f = lambda x: (1 / (hi - lo)) * (-np.log(hi - lo) - ContextDistribution([m], [s]).log_pdf([x]))
        ref += integrate.quad(f, lo, hi)[0]
    assert uniform_kl_to_gaussian(bounds, target) == pytest.approx(ref, rel=1e-10)
    with pytest.raises(ValueError):
        RandomCurriculum(np.array([[0.0, np.inf]]), ContextDistribution([0.0], [1.0]))


def test_evaluate_target_examples(rng):
    class ZeroEnv:
        def rollout(self, policy, context, deterministic=False):
            from types import SimpleNamespace
            return SimpleNamespace(discounted_return=0.0)

    target = ContextDistribution([1.0], [0.1])
    assert evaluate_target(ZeroEnv(), None, target, 5, rng) == (0.0, 0.0)
    env = GridChainEnv()
    p = PolicyParams.init(rng, 2, 1, (4,))
    narrow = ContextDistribution([6.0], [1e-9], env.context_bounds)
    mean, se = evaluate_target(env, p, narrow, 2, rng)
    assert se < 1e-6
    with pytest.raises(ValueError):
        evaluate_target(env, p, narrow, 1, rng)


def test_determinism_and_invariants(tmp_path):
    for cur in ("spdl", "sprl", "random"):
        cfg = quick(curriculum=cur, iterations=8, n_alpha=3, n_offset=1)
        run_experiment(cfg, tmp_path / f"{cur}_a.csv")
        run_experiment(cfg, tmp_path / f"{cur}_b.csv")
        assert csv_body_without_timing(tmp_path / f"{cur}_a.csv") == csv_body_without_timing(tmp_path / f"{cur}_b.csv")
        rows = read_csv(tmp_path / f"{cur}_a.csv")
        assert check_invariants(cfg, rows) == []
        assert all(r["alpha"] == 0.0 for r in rows[:3])


def test_csv_round_trips_exactly(tmp_path):
    res = run_experiment(quick(iterations=3), tmp_path / "r.csv")
    for mem, disk in zip(res.rows, read_csv(tmp_path / "r.csv")):
        assert mem == disk


def test_trust_region_steps_from_rows():
    cfg = quick()
    rows = [{"iteration": 1, "ctx_mean_0": 1.0, "ctx_std_0": 1.0},
            {"iteration": 2, "ctx_mean_0": 2.0, "ctx_std_0": 1.0}]
    steps = trust_region_steps(cfg, rows)
    assert steps[0]["kl"] == 0.0 and steps[1]["kl"] == pytest.approx(0.5)


def test_invariant_violations_are_reported():
    cfg = quick(n_alpha=2)
    base = dict(train_return_mean=1.0, eval_return_mean=1.0, eval_return_stderr=0.0, kl_to_target=5.0,
                seconds=0.1, ctx_mean_0=1.0, ctx_std_0=1.0)
    rows = [dict(base, iteration=1, alpha=0.5), dict(base, iteration=2, alpha=0.0, ctx_mean_0=5.0)]
    problems = check_invariants(cfg, rows)
    assert any("before n_alpha" in p for p in problems)
    assert any("exceeds epsilon" in p for p in problems)


def write_run(path, curriculum, finals):
    path.write_text("iteration,eval_return_mean\n" + "".join(f"{i + 1},{v!r}\n" for i, v in enumerate(finals)))
    meta_path(path).write_text(json.dumps({"curriculum": curriculum}))


def test_aggregate_examples(tmp_path):
    write_run(tmp_path / "a1.csv", "spdl", [1.0, 9.0])
    write_run(tmp_path / "a2.csv", "spdl", [1.0, 10.0])
    write_run(tmp_path / "b1.csv", "default", [1.0, 2.0])
    write_run(tmp_path / "b2.csv", "default", [1.0, 3.0])
    rows = {r["curriculum"]: r for r in aggregate(sorted(tmp_path.glob("*.csv")), tmp_path / "summary.out")}
    assert rows["spdl"]["final_mean"] == 9.5 and rows["spdl"]["final_stderr"] == pytest.approx(0.5)
    assert rows["spdl"]["p_vs_default"] < 0.05
    assert rows["spdl"]["p_vs_spdl"] == 1.0
    assert (tmp_path / "summary.out").read_text().startswith("curriculum,n_seeds,iteration,final_mean")


def test_aggregate_identical_seeds(tmp_path):
    write_run(tmp_path / "a1.csv", "spdl", [4.0])
    write_run(tmp_path / "a2.csv", "spdl", [4.0])
    (row,) = aggregate([tmp_path / "a1.csv", tmp_path / "a2.csv"])
    assert row["final_stderr"] == 0.0 and row["p_vs_spdl"] == 1.0


def test_aggregate_errors_and_alignment(tmp_path):
    write_run(tmp_path / "a1.csv", "spdl", [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        aggregate([tmp_path / "a1.csv"])
    write_run(tmp_path / "a2.csv", "spdl", [1.0, 5.0])
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        (row,) = aggregate([tmp_path / "a1.csv", tmp_path / "a2.csv"])
    assert row["iteration"] == 2 and row["final_mean"] == 3.5
    assert any("different lengths" in str(x.message) for x in w)
    (tmp_path / "mystery.csv").write_text("iteration,eval_return_mean\n1,1.0\n")
    with pytest.raises(ValueError, match="sidecar"), warnings.catch_warnings():
        warnings.simplefilter("ignore")
        aggregate([tmp_path / "mystery.csv", tmp_path / "a1.csv"])


def test_aggregate_infers_curriculum_from_name(tmp_path):
    for name in ("random_s0.csv", "random_s1.csv"):
        (tmp_path / name).write_text("iteration,eval_return_mean\n1,1.0\n")
    assert aggregate(sorted(tmp_path.glob("*.csv")))[0]["curriculum"] == "random"


def test_welch_reference():
    from scipy import stats

    a, b = [9.0, 10.0, 11.5], [2.0, 3.0, 2.2]
    assert welch_p_value(a, b) == pytest.approx(stats.ttest_ind(a, b, equal_var=False).pvalue)
    assert welch_p_value([1.0, 1.0], [2.0, 2.0]) == 0.0


def test_baseline_curricula_summaries():
    target = ContextDistribution([1.0], [0.5])
    d = DefaultCurriculum(target)
    assert d.summary()[2] == 0.0 and d.update(3, None)["alpha"] == 0.0
