"""Time the compiled point-mass kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeats 5] [--episodes 200]

Reports the best-of-``repeats`` wall time for ``episodes`` stochastic
rollouts (100 steps each with the standard 2x21 policy) and for 20k single
steps, and checks that both backends produce identical trajectories.
"""

import argparse
import time

import numpy as np

from spdl.envs import PointMassEnv
from spdl.kernels import get_backend
from spdl.rl import PolicyParams


def _rollouts(kern, params, contexts, noises):
    out = []
    for ctx, eps in zip(contexts, noises):
        out.append(kern.pointmass_rollout(params.policy, params.log_std, ctx, ctx[0], ctx[1], 0.0,
                                          eps, 0.05, 10.0, False))
    return out


def _steps(kern, states, actions):
    for s, a in zip(states, actions):
        kern.pointmass_step(s, a, 0.0, 2.0, 0.0, 0.05, 10.0)


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--episodes", type=int, default=200)
    args = p.parse_args()

    rng = np.random.default_rng(0)
    env = PointMassEnv(context_dim=2)
    params = PolicyParams.init(rng, env.obs_dim, env.action_dim)
    lo, hi = env.context_bounds.T
    contexts = rng.uniform(lo, hi, (args.episodes, 2))
    noises = rng.standard_normal((args.episodes, env.max_steps, 2))
    states = rng.uniform(-3, 3, (20000, 4))
    actions = rng.uniform(-12, 12, (20000, 2))

    py = get_backend("python")
    try:
        ext = get_backend("cython")
    except ImportError:
        print("compiled backend unavailable; build with `pip install -e . --no-build-isolation`")
        ext = None

    t_py = best_of(lambda: _rollouts(py, params, contexts, noises), args.repeats)
    s_py = best_of(lambda: _steps(py, states, actions), args.repeats)
    print(f"{'backend':<8} {'rollouts (s)':>14} {'steps (s)':>11}")
    print(f"{'python':<8} {t_py:14.4f} {s_py:11.4f}")
    if ext is None:
        return
    t_ext = best_of(lambda: _rollouts(ext, params, contexts, noises), args.repeats)
    s_ext = best_of(lambda: _steps(ext, states, actions), args.repeats)
    print(f"{'cython':<8} {t_ext:14.4f} {s_ext:11.4f}")
    print(f"speedup: rollouts x{t_py / t_ext:.1f}, steps x{s_py / s_ext:.1f}")

    worst = 0.0
    for a, b in zip(_rollouts(py, params, contexts, noises), _rollouts(ext, params, contexts, noises)):
        if a[3] != b[3] or len(a[0]) != len(b[0]):
            raise SystemExit("backends disagree on episode termination")
        worst = max(worst, max(float(np.max(np.abs(x - y))) for x, y in zip(a[:3], b[:3])))
    print(f"max abs difference between backends: {worst:.3g}")


if __name__ == "__main__":
    main()
