"""Experiment configuration, baseline curricula, CSV logging and aggregation.

Per-run CSV columns, in order::

    iteration, train_return_mean, eval_return_mean, eval_return_stderr,
    kl_to_target, alpha, ctx_mean_0..d-1, ctx_std_0..d-1, seconds

Floats are written with ``repr`` so that rows round-trip exactly. A sidecar
``<name>.meta.json`` next to each CSV records the curriculum and the full
resolved configuration; :func:`aggregate` uses it to group runs.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import stats

from spdl.curriculum import CurriculumConfig, SelfPacedCurriculum
from spdl.envs import ENV_NAMES, make_env
from spdl.gaussian import ContextDistribution, kl_divergence
from spdl.rl import GaeConfig
from spdl.sprl import SPRLCurriculum
from spdl.training import iterate_training, make_streams

log = logging.getLogger(__name__)

CURRICULA = ("spdl", "sprl", "random", "default")
TIMING_COLUMN = "seconds"

# Per-environment defaults. The point-mass values follow the published
# hyperparameter and distribution tables; the 2D variant drops the friction
# dimension. Gridchain values are this package's own.
ENV_DEFAULTS = {
    "pointmass3d": dict(
        init_mean=(0.0, 4.25, 2.0), init_std=(2.0, 1.875, 1.0),
        target_mean=(2.5, 0.5, 0.0), target_std=(0.004, 0.00375, 0.002),
        std_lower_bound=(0.2, 0.1875, 0.1), kl_lower_bound=8000.0, n_step=2048,
    ),
    "pointmass2d": dict(
        init_mean=(0.0, 4.25), init_std=(2.0, 1.875),
        target_mean=(2.5, 0.5), target_std=(0.004, 0.00375),
        std_lower_bound=(0.2, 0.1875), kl_lower_bound=8000.0, n_step=2048,
    ),
    "gridchain": dict(
        init_mean=(1.0,), init_std=(1.0,), target_mean=(9.0,), target_std=(0.05,),
        std_lower_bound=(0.3,), kl_lower_bound=50.0, n_step=400,
    ),
}
_VECTOR_FIELDS = ("init_mean", "init_std", "target_mean", "target_std", "std_lower_bound", "hidden")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one run.

    Fields left as ``None`` are filled from :data:`ENV_DEFAULTS` by
    :meth:`create`; use that constructor rather than the bare dataclass.
    """

    env: str = "pointmass2d"
    curriculum: str = "spdl"
    seed: int = 0
    iterations: int = 200
    n_step: int | None = None
    zeta: float = 1.4
    n_alpha: int = 10
    n_offset: int = 5
    epsilon: float = 0.25
    std_lower_bound: tuple | None = None
    kl_lower_bound: float | None = None
    sprl_epsilon: float = 0.5
    gamma: float = 0.95
    lam: float = 0.99
    clip: float = 0.2
    epochs: int = 8
    minibatches: int = 32
    step_size: float = 3e-4
    max_grad_norm: float = 0.5
    hidden: tuple = (21, 21)
    init_mean: tuple | None = None
    init_std: tuple | None = None
    target_mean: tuple | None = None
    target_std: tuple | None = None
    eval_episodes: int = 20

    @classmethod
    def field_names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in dataclasses.fields(cls))

    @classmethod
    def create(cls, **values) -> ExperimentConfig:
        unknown = set(values) - set(cls.field_names())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        env = values.get("env", cls.env)
        if env not in ENV_DEFAULTS:
            raise ValueError(f"unknown environment {env!r}; choose from {ENV_NAMES}")
        merged = dict(ENV_DEFAULTS[env])
        merged.update({k: v for k, v in values.items() if v is not None})
        for key in _VECTOR_FIELDS:
            if merged.get(key) is not None:
                merged[key] = tuple(np.atleast_1d(np.asarray(merged[key])).tolist())
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def replace(self, **values) -> ExperimentConfig:
        return ExperimentConfig.create(**{**self.to_dict(), **values})

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in dataclasses.asdict(self).items()}

    def validate(self) -> None:
        def need(ok, msg):
            if not ok:
                raise ValueError(msg)

        need(self.curriculum in CURRICULA, f"curriculum must be one of {CURRICULA}")
        need(isinstance(self.seed, int) and self.seed >= 0, "seed must be a nonnegative integer")
        need(isinstance(self.iterations, int) and self.iterations >= 0, "iterations must be >= 0")
        need(isinstance(self.n_step, int) and self.n_step >= 1, "n_step must be >= 1")
        need(self.zeta >= 0 and self.n_alpha >= 0 and self.n_offset >= 0,
             "zeta, n_alpha and n_offset must be nonnegative")
        need(self.epsilon > 0 and self.sprl_epsilon > 0, "trust-region radii must be positive")
        need(0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0, "gamma and lam must lie in [0, 1]")
        need(self.clip > 0 and self.step_size > 0 and self.max_grad_norm > 0,
             "clip, step_size and max_grad_norm must be positive")
        need(self.epochs >= 1 and self.minibatches >= 1, "epochs and minibatches must be >= 1")
        need(all(isinstance(h, int) and h >= 1 for h in self.hidden), "hidden sizes must be positive integers")
        need(self.eval_episodes >= 2, "eval_episodes must be >= 2")
        dim = make_env(self.env).context_bounds.shape[0]
        for key in ("init_mean", "init_std", "target_mean", "target_std", "std_lower_bound"):
            need(len(getattr(self, key)) == dim, f"{key} must have length {dim} for {self.env}")
        for key in ("init_std", "target_std", "std_lower_bound"):
            need(all(v > 0 for v in getattr(self, key)), f"{key} entries must be positive")
        need(self.kl_lower_bound >= 0, "kl_lower_bound must be nonnegative")
        bounds = make_env(self.env).context_bounds
        for key in ("init_mean", "target_mean"):
            m = np.asarray(getattr(self, key))
            need(np.all((m >= bounds[:, 0]) & (m <= bounds[:, 1])), f"{key} lies outside the context box")

    def environment(self):
        return make_env(self.env, gamma=self.gamma)

    def learner(self) -> GaeConfig:
        return GaeConfig(gamma=self.gamma, lam=self.lam, clip=self.clip, epochs=self.epochs,
                         minibatches=self.minibatches, step_size=self.step_size,
                         max_grad_norm=self.max_grad_norm, hidden=self.hidden)

    def curriculum_config(self) -> CurriculumConfig:
        return CurriculumConfig(zeta=self.zeta, n_alpha=self.n_alpha, n_offset=self.n_offset,
                                epsilon=self.epsilon, std_lower_bound=self.std_lower_bound,
                                kl_lower_bound=self.kl_lower_bound)

    def distributions(self, bounds) -> tuple[ContextDistribution, ContextDistribution]:
        return (ContextDistribution(self.init_mean, self.init_std, bounds),
                ContextDistribution(self.target_mean, self.target_std, bounds))


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Read a flat YAML mapping, then apply ``overrides`` (``None`` values ignored)."""
    values = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ValueError(f"{path}: expected a flat key/value mapping")
        nested = [k for k, v in loaded.items() if isinstance(v, dict)]
        if nested:
            raise ValueError(f"{path}: nested sections are not supported ({nested})")
        values.update(loaded)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.create(**values)


class DefaultCurriculum:
    """Train directly on the target distribution."""

    name = "default"

    def __init__(self, target: ContextDistribution):
        self.distribution = target
        self.target = target

    def sample(self, rng):
        return self.target.sample(rng)

    def update(self, iteration, batch) -> dict:
        return {"alpha": 0.0}

    def summary(self):
        return self.target.mean.copy(), self.target.std.copy(), 0.0


def uniform_kl_to_gaussian(bounds, target: ContextDistribution) -> float:
    """``KL(U(box) || target)`` for an axis-aligned box and diagonal Gaussian."""
    lo, hi = np.asarray(bounds, dtype=float).T
    width = hi - lo
    second_moment = width**2 / 12.0 + (0.5 * (lo + hi) - target.mean) ** 2
    cross = -0.5 * np.log(2 * np.pi * target.variance) - 0.5 * second_moment / target.variance
    return float(np.sum(-np.log(width) - cross))


class RandomCurriculum:
    """Contexts drawn uniformly from the context box every episode."""

    name = "random"

    def __init__(self, bounds, target: ContextDistribution):
        self.bounds = np.asarray(bounds, dtype=float)
        if not np.all(np.isfinite(self.bounds)):
            raise ValueError("the random curriculum needs a bounded context space")
        self.target = target
        lo, hi = self.bounds.T
        self._mean = 0.5 * (lo + hi)
        self._std = (hi - lo) / np.sqrt(12.0)
        self._kl = uniform_kl_to_gaussian(self.bounds, target)

    def sample(self, rng):
        c = rng.uniform(self.bounds[:, 0], self.bounds[:, 1])
        if np.any(c < self.bounds[:, 0]) or np.any(c > self.bounds[:, 1]):
            raise AssertionError("uniform context left the context box")
        return c

    def update(self, iteration, batch) -> dict:
        return {"alpha": 0.0}

    def summary(self):
        return self._mean.copy(), self._std.copy(), self._kl


def build_curriculum(config: ExperimentConfig, bounds):
    initial, target = config.distributions(bounds)
    if config.curriculum == "spdl":
        return SelfPacedCurriculum(initial, target, config.curriculum_config())
    if config.curriculum == "sprl":
        return SPRLCurriculum(initial, target, config.curriculum_config(), config.sprl_epsilon)
    if config.curriculum == "random":
        return RandomCurriculum(bounds, target)
    return DefaultCurriculum(target)


def evaluate_target(env, policy, target, episodes: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of the discounted return of the mean action on ``target``."""
    if episodes < 2:
        raise ValueError("need at least two evaluation episodes")
    returns = np.array([
        env.rollout(policy, target.sample(rng), deterministic=True).discounted_return
        for _ in range(episodes)
    ])
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(episodes))


def csv_columns(context_dim: int) -> list[str]:
    return (["iteration", "train_return_mean", "eval_return_mean", "eval_return_stderr",
             "kl_to_target", "alpha"]
            + [f"ctx_mean_{k}" for k in range(context_dim)]
            + [f"ctx_std_{k}" for k in range(context_dim)]
            + [TIMING_COLUMN])


def _row(record: dict) -> dict:
    row = {k: record[k] for k in ("iteration", "train_return_mean", "eval_return_mean",
                                  "eval_return_stderr", "kl_to_target", "alpha", "seconds")}
    for k, v in enumerate(record["ctx_mean"]):
        row[f"ctx_mean_{k}"] = float(v)
    for k, v in enumerate(record["ctx_std"]):
        row[f"ctx_std_{k}"] = float(v)
    return row


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


def meta_path(csv_path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list = field(default_factory=list)
    records: list = field(default_factory=list)
    path: Path | None = None
    params: object = None


def run_experiment(config: ExperimentConfig, out=None, callback=None) -> ExperimentResult:
    """Train with the configured curriculum and evaluate on the target every iteration.

    Rows are appended to ``out`` (when given) as they are produced, so a
    crashed run keeps its completed iterations.
    """
    config.validate()
    env = config.environment()
    bounds = env.context_bounds
    curriculum = build_curriculum(config, bounds)
    _, target = config.distributions(bounds)
    streams = make_streams(config.seed)
    columns = csv_columns(bounds.shape[0])
    result = ExperimentResult(config)

    fh = writer = None
    if out is not None:
        result.path = Path(out)
        result.path.parent.mkdir(parents=True, exist_ok=True)
        meta = {"curriculum": config.curriculum, "env": config.env, "seed": config.seed,
                "config": config.to_dict()}
        meta_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        fh = open(out, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)

    def on_iteration(i, params, record):
        mean, se = evaluate_target(env, params, target, config.eval_episodes, streams.evaluation)
        record["eval_return_mean"] = mean
        record["eval_return_stderr"] = se
        result.params = params
        if callback is not None:
            callback(i, params, record)

    records = iterate_training(env, curriculum, config.learner(), config.iterations,
                               n_step=config.n_step, callback=on_iteration, streams=streams)
    try:
        for record in records:
            row = _row(record)
            bad = [k for k, v in row.items() if not math.isfinite(v)]
            if bad:
                raise FloatingPointError(f"iteration {record['iteration']}: non-finite {bad}")
            result.rows.append(row)
            result.records.append(record)
            if writer is not None:
                writer.writerow([_fmt(row[c]) for c in columns])
                fh.flush()
    finally:
        if fh is not None:
            fh.close()
    return result


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k == "iteration" else float(v)) for k, v in r.items()} for r in rows]


def csv_body_without_timing(path) -> str:
    """CSV text with the timing column removed, for determinism comparisons."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        return ""
    drop = rows[0].index(TIMING_COLUMN)
    return "\n".join(",".join(c for j, c in enumerate(r) if j != drop) for r in rows)


def check_invariants(config: ExperimentConfig, rows: list[dict]) -> list[str]:
    """Contract violations visible in a run's rows; empty when everything holds."""
    problems = []
    d = len(config.target_mean)
    if [r["iteration"] for r in rows] != list(range(1, len(rows) + 1)):
        problems.append("iterations are not 1..N")
    for r in rows:
        if not all(math.isfinite(v) for v in r.values()):
            problems.append(f"iteration {r['iteration']}: non-finite value")
    if config.curriculum == "default":
        for r in rows:
            if r["kl_to_target"] != 0.0:
                problems.append(f"iteration {r['iteration']}: default curriculum KL {r['kl_to_target']}")
            if any(r[f"ctx_mean_{k}"] != config.target_mean[k] or r[f"ctx_std_{k}"] != config.target_std[k]
                   for k in range(d)):
                problems.append(f"iteration {r['iteration']}: default curriculum moved")
    if config.curriculum in ("spdl", "sprl"):
        for r in rows:
            if r["iteration"] <= config.n_alpha and r["alpha"] != 0.0:
                problems.append(f"iteration {r['iteration']}: alpha nonzero before n_alpha")
            if r["alpha"] < 0.0:
                problems.append(f"iteration {r['iteration']}: negative alpha")
    if config.curriculum == "spdl":
        for step in trust_region_steps(config, rows):
            if step["kl"] > config.epsilon + 1e-6:
                problems.append(f"iteration {step['iteration']}: KL step {step['kl']:.6g} exceeds epsilon")
    return problems


def _row_distribution(row, d) -> ContextDistribution:
    return ContextDistribution([row[f"ctx_mean_{k}"] for k in range(d)],
                               [row[f"ctx_std_{k}"] for k in range(d)])


def trust_region_steps(config: ExperimentConfig, rows: list[dict]) -> list[dict]:
    """``KL(nu_i || nu_{i-1})`` for every logged iteration, starting from the initial distribution."""
    d = len(config.init_mean)
    prev = ContextDistribution(config.init_mean, config.init_std)
    out = []
    for r in rows:
        cur = _row_distribution(r, d)
        out.append({"iteration": r["iteration"], "kl": kl_divergence(cur, prev)})
        prev = cur
    return out


def _curriculum_of(path: Path) -> str:
    m = meta_path(path)
    if m.exists():
        return json.loads(m.read_text())["curriculum"]
    head = path.stem.split("_")[0].split("-")[0]
    if head in CURRICULA:
        return head
    raise ValueError(f"{path}: no {m.name} sidecar and no curriculum prefix in the file name")


def welch_p_value(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if np.var(a) == 0.0 and np.var(b) == 0.0:
        return 1.0 if a.mean() == b.mean() else 0.0
    return float(stats.ttest_ind(a, b, equal_var=False).pvalue)


def aggregate(paths, out=None) -> list[dict]:
    """Per-curriculum final evaluation mean, standard error and Welch p-values.

    Runs are compared at the last iteration every input reaches. Output
    columns: curriculum, n_seeds, iteration, final_mean, final_stderr and one
    ``p_vs_<curriculum>`` column per curriculum present.
    """
    paths = [Path(p) for p in paths]
    tables = {p: read_csv(p) for p in paths}
    empty = [str(p) for p, rows in tables.items() if not rows]
    if empty:
        raise ValueError(f"no iterations in {empty}")
    lengths = {rows[-1]["iteration"] for rows in tables.values()}
    final_it = min(lengths)
    if len(lengths) > 1:
        warnings.warn(f"runs have different lengths {sorted(lengths)}; comparing at iteration {final_it}",
                      stacklevel=2)
    groups: dict[str, list[float]] = {}
    for p, rows in tables.items():
        row = next(r for r in rows if r["iteration"] == final_it)
        groups.setdefault(_curriculum_of(p), []).append(row["eval_return_mean"])
    small = [c for c, v in groups.items() if len(v) < 2]
    if small:
        raise ValueError(f"need at least two seeds per curriculum; got one for {small}")
    names = sorted(groups)
    summary = []
    for name in names:
        vals = np.asarray(groups[name])
        row = {"curriculum": name, "n_seeds": len(vals), "iteration": final_it,
               "final_mean": float(vals.mean()),
               "final_stderr": float(vals.std(ddof=1) / np.sqrt(len(vals)))}
        for other in names:
            row[f"p_vs_{other}"] = welch_p_value(vals, groups[other])
        summary.append(row)
    if out is not None:
        cols = list(summary[0])
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in summary:
                w.writerow([r[c] if isinstance(r[c], (str, int)) else repr(r[c]) for c in cols])
    return summary
