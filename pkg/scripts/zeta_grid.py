"""Grid search over the alpha-schedule ratio for the point-mass SPDL runs.

The published ratio was picked by grid search for a different learner; this
repeats the search for the learner in this package. Tuning seeds are kept
disjoint from the seeds used by the acceptance tests (0..4).

    python scripts/zeta_grid.py --out runs/zeta_grid
"""

import argparse
import itertools
from pathlib import Path

from spdl import harness


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="runs/zeta_grid")
    p.add_argument("--zetas", type=float, nargs="+", default=[1.4, 2.0, 3.0, 4.0])
    p.add_argument("--seeds", type=int, nargs="+", default=[100, 101, 102])
    p.add_argument("--iterations", type=int, default=200)
    args = p.parse_args()
    out = Path(args.out)
    for zeta, seed in itertools.product(args.zetas, args.seeds):
        cfg = harness.ExperimentConfig.create(env="pointmass2d", curriculum="spdl", seed=seed,
                                              iterations=args.iterations, zeta=zeta)
        res = harness.run_experiment(cfg, out / f"spdl_zeta{zeta:g}_seed{seed}.csv")
        last = res.rows[-1]
        kl0 = res.rows[0]["kl_to_target"]
        print(f"zeta={zeta:g} seed={seed} final_eval={last['eval_return_mean']:.3f} "
              f"kl_ratio={last['kl_to_target'] / kl0:.4f}", flush=True)


if __name__ == "__main__":
    main()
