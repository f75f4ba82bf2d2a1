"""Episode runner, seeded experiment protocol, aggregation and CSV output."""

from __future__ import annotations

import csv
import logging
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .agents import AgentConfig, ConfigError, TabularAgent
from .envs import make_env
from .presets import ABLATION_ORDER, DISPLAY_NAMES, load_preset

log = logging.getLogger(__name__)

EPISODE_COLUMNS = (
    "episode", "seed", "total_reward", "steps", "falls",
    "illegal_actions", "deliveries", "rollbacks", "reached_goal",
)
METRICS = ("total_reward", "steps", "falls", "illegal_actions", "deliveries", "rollbacks")
SUMMARY_COLUMNS = ("metric", "mean", "std", "ci_low", "ci_high", "n")
COMPARISON_COLUMNS = (
    "metric", "baseline_mean", "baseline_std", "variant_mean", "variant_std",
    "delta_mean", "pct_delta_mean", "delta_std", "pct_delta_std",
)
REPORT_COLUMNS = (
    "agent", "reward_mean", "reward_std", "delta_reward", "pct_delta_reward",
    "failures", "pct_failure_reduction", "rollbacks",
)
SWEEP_COLUMNS = ("parameter", "value", "mean", "std", "ci_low", "ci_high", "n",
                 "failures_mean", "rollbacks_mean")

SWEEP_PARAMETERS = {
    "K": "horizon_k",
    "k": "horizon_k",
    "lambda": "penalty_weight",
    "penalty": "penalty_factor",
    "phi_init": "phi_init",
    "threshold": "threshold",
    "q_init": "q_init",
}

Z_95 = 1.96

EXPERIMENT_FLAGS = ("fresh_tables_per_episode", "charge_rolled_back_steps",
                    "rollback_restores_env", "strict_taxi_dropoff")


@dataclass
class EpisodeStats:
    episode_idx: int
    seed: int
    total_reward: float = 0.0
    steps: int = 0
    falls: int = 0
    illegal_actions: int = 0
    deliveries: int = 0
    rollbacks: int = 0
    reached_goal: bool = False

    def row(self) -> list[str]:
        return [
            str(self.episode_idx), str(self.seed), repr(float(self.total_reward)),
            str(self.steps), str(self.falls), str(self.illegal_actions),
            str(self.deliveries), str(self.rollbacks), str(int(self.reached_goal)),
        ]

    @classmethod
    def from_row(cls, row: dict) -> "EpisodeStats":
        return cls(
            episode_idx=int(row["episode"]), seed=int(row["seed"]),
            total_reward=float(row["total_reward"]), steps=int(row["steps"]),
            falls=int(row["falls"]), illegal_actions=int(row["illegal_actions"]),
            deliveries=int(row["deliveries"]), rollbacks=int(row["rollbacks"]),
            reached_goal=row["reached_goal"] in ("1", "True", "true"),
        )


@dataclass(frozen=True)
class RunSummary:
    mean: float
    std: float
    ci_low: float
    ci_high: float
    n: int


@dataclass
class ExperimentConfig:
    env: str = "cliffwalking"
    agent: AgentConfig = field(default_factory=AgentConfig)
    episodes: int = 100_000
    step_limit: int | None = None
    base_seed: int = 0
    output_path: str | Path | None = None
    # Each episode starts from freshly initialised tables ("independent
    # episodes"). False gives one continual learner across the run.
    fresh_tables_per_episode: bool = True
    # False: a rolled-back step contributes neither reward nor events to the
    # episode statistics (it still consumes a step).
    charge_rolled_back_steps: bool = False
    # False: after a rollback the simulator keeps its post-step state and
    # only the agent's state is reset. True restores both.
    rollback_restores_env: bool = False
    # Taxi only: a dropoff at a non-destination landmark is illegal (-10)
    # rather than relocating the passenger.
    strict_taxi_dropoff: bool = False

    def validate(self) -> "ExperimentConfig":
        if not isinstance(self.env, str):
            raise ConfigError(f"env: expected a string, got {self.env!r}")
        make_env(self.env)
        self.agent.validate()
        if isinstance(self.episodes, bool) or not isinstance(self.episodes, int) or self.episodes < 1:
            raise ConfigError(f"episodes: expected a positive integer, got {self.episodes!r}")
        if self.step_limit is not None and (
            isinstance(self.step_limit, bool) or not isinstance(self.step_limit, int) or self.step_limit < 1
        ):
            raise ConfigError(f"step_limit: expected a positive integer, got {self.step_limit!r}")
        if isinstance(self.base_seed, bool) or not isinstance(self.base_seed, int):
            raise ConfigError(f"base_seed: expected an integer, got {self.base_seed!r}")
        for name in EXPERIMENT_FLAGS:
            if not isinstance(getattr(self, name), bool):
                raise ConfigError(f"{name}: expected a boolean, got {getattr(self, name)!r}")
        return self

    def resolved_step_limit(self) -> int:
        if self.step_limit is not None:
            return self.step_limit
        return make_env(self.env).default_step_limit

    def build_env(self):
        return make_env(self.env, strict_dropoff=self.strict_taxi_dropoff)

    def options(self) -> dict:
        """The protocol flags, for building sibling configs."""
        return {name: getattr(self, name) for name in EXPERIMENT_FLAGS}


# --------------------------------------------------------------------------
# Running
# --------------------------------------------------------------------------

def run_episode(env, agent, step_limit: int, seed: int, *, episode_idx: int = 0,
                charge_rolled_back_steps: bool = False,
                rollback_restores_env: bool = False) -> EpisodeStats:
    """Play one episode with a single RNG seeded by ``seed``.

    The RNG is consumed by the environment reset first, then by the
    agent's exploration draws. Tables are not reset here.

    A rollback always puts the agent back in its pre-step state. Unless
    ``rollback_restores_env`` is set, the simulator stays where the step
    took it, so the next action is executed from there.
    """
    if step_limit < 1:
        raise ValueError(f"step_limit must be >= 1, got {step_limit}")
    rng = random.Random(seed)
    state = sim = env.reset(rng)
    agent.begin_episode(state, rng)
    stats = EpisodeStats(episode_idx=episode_idx, seed=seed)
    total = 0.0
    for t in range(step_limit):
        res = agent.step(env, state, t, rng, sim)
        stats.steps += 1
        state = res.effective_next_state
        sim = state if rollback_restores_env else res.outcome.next_state
        if res.rollback_fired:
            stats.rollbacks += 1
            if not charge_rolled_back_steps:
                continue
        out = res.outcome
        total += out.reward
        stats.falls += out.fell_off_cliff
        stats.illegal_actions += out.illegal_action
        stats.deliveries += out.delivered
        if out.terminated:
            stats.reached_goal = True
            break
    stats.total_reward = total
    return stats


def iter_experiment(cfg: ExperimentConfig, agent: TabularAgent | None = None) -> Iterator[EpisodeStats]:
    """Yield one EpisodeStats per episode; episode i uses seed base_seed + i.

    Pass ``agent`` to keep a handle on the learner (e.g. to dump its tables).
    """
    cfg.validate()
    env = cfg.build_env()
    if agent is None:
        agent = TabularAgent(cfg.agent, env.n_states, env.n_actions)
    limit = cfg.resolved_step_limit()
    for i in range(cfg.episodes):
        if cfg.fresh_tables_per_episode:
            agent.reset_tables()
        yield run_episode(env, agent, limit, cfg.base_seed + i, episode_idx=i,
                          charge_rolled_back_steps=cfg.charge_rolled_back_steps,
                          rollback_restores_env=cfg.rollback_restores_env)


def run_experiment(cfg: ExperimentConfig, agent: TabularAgent | None = None) -> list[EpisodeStats]:
    """Run every episode, writing the per-episode CSV when ``output_path`` is set."""
    if cfg.output_path is None:
        return list(iter_experiment(cfg, agent))
    path = Path(cfg.output_path)
    episodes = []
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPISODE_COLUMNS)
        for ep in iter_experiment(cfg, agent):
            writer.writerow(ep.row())
            episodes.append(ep)
    return episodes


def write_episodes(episodes: Iterable[EpisodeStats], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPISODE_COLUMNS)
        for ep in episodes:
            writer.writerow(ep.row())


def read_episodes(path: str | Path) -> list[EpisodeStats]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != EPISODE_COLUMNS:
            raise ValueError(f"{path}: not a per-episode CSV (header {reader.fieldnames})")
        return [EpisodeStats.from_row(row) for row in reader]


# --------------------------------------------------------------------------
# Statistics
# --------------------------------------------------------------------------

def confidence_interval(mean: float, std: float, n: int) -> tuple[float, float]:
    half = Z_95 * std / math.sqrt(n)
    return mean - half, mean + half


def aggregate(values: Sequence[float]) -> RunSummary:
    """Mean, sample std (N-1) and the normal 95% interval mean +- 1.96 std/sqrt(N)."""
    arr = np.asarray(values, dtype=float)
    n = arr.size
    if n == 0:
        raise ValueError("cannot aggregate an empty sample")
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if n > 1 else 0.0
    lo, hi = confidence_interval(mean, std, n)
    return RunSummary(mean, std, lo, hi, n)


def summarize(episodes: Sequence[EpisodeStats]) -> dict[str, RunSummary]:
    return {m: aggregate([getattr(ep, m) for ep in episodes]) for m in METRICS}


def write_summary(summary: dict[str, RunSummary], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for metric, s in summary.items():
            writer.writerow([metric, repr(s.mean), repr(s.std), repr(s.ci_low), repr(s.ci_high), s.n])


@dataclass(frozen=True)
class ComparisonRow:
    metric: str
    baseline_mean: float
    baseline_std: float
    variant_mean: float
    variant_std: float
    delta_mean: float
    pct_delta_mean: float | None
    delta_std: float
    pct_delta_std: float | None


def _pct(delta: float, reference: float) -> float | None:
    if reference == 0:
        return None
    return delta / abs(reference) * 100.0


def compare(baseline: dict[str, RunSummary], variant: dict[str, RunSummary]) -> list[ComparisonRow]:
    """Per-metric deltas; percentages are relative to |baseline| (None when it is 0)."""
    if set(baseline) != set(variant):
        raise ValueError("baseline and variant summaries cover different metrics")
    rows = []
    for metric, b in baseline.items():
        v = variant[metric]
        dm = v.mean - b.mean
        ds = v.std - b.std
        rows.append(ComparisonRow(metric, b.mean, b.std, v.mean, v.std,
                                  dm, _pct(dm, b.mean), ds, _pct(ds, b.std)))
    return rows


def _fmt(x: float | None) -> str:
    return "n/a" if x is None else repr(float(x))


def write_comparison(rows: Sequence[ComparisonRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COMPARISON_COLUMNS)
        for r in rows:
            writer.writerow([r.metric] + [_fmt(getattr(r, c)) for c in COMPARISON_COLUMNS[1:]])


# --------------------------------------------------------------------------
# Ablation and sweeps
# --------------------------------------------------------------------------

def _run_collect(cfg: ExperimentConfig) -> list[EpisodeStats]:
    return run_experiment(cfg)


def _run_many(configs: Sequence[ExperimentConfig], jobs: int) -> list[list[EpisodeStats]]:
    if jobs <= 1 or len(configs) <= 1:
        return [_run_collect(c) for c in configs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_collect, configs))


@dataclass
class AblationResult:
    env: str
    summaries: dict[str, dict[str, RunSummary]]
    report: list[dict]


def ablation_report(env: str, summaries: dict[str, dict[str, RunSummary]],
                    agents: dict[str, AgentConfig]) -> list[dict]:
    """Table-shaped rows sorted by mean reward, best first."""
    failure = make_env(env).failure_metric
    base = summaries["baseline"]
    base_reward = base["total_reward"].mean
    base_fail = base[failure].mean
    rows = []
    for name, summ in summaries.items():
        reward = summ["total_reward"]
        fails = summ[failure].mean
        rows.append({
            "agent": DISPLAY_NAMES.get(name, name),
            "reward_mean": reward.mean,
            "reward_std": reward.std,
            "delta_reward": reward.mean - base_reward,
            "pct_delta_reward": _pct(reward.mean - base_reward, base_reward),
            "failures": fails,
            "pct_failure_reduction": None if name == "baseline" else _pct(base_fail - fails, base_fail),
            "rollbacks": summ["rollbacks"].mean if agents[name].use_rollback else None,
        })
    rows.sort(key=lambda r: r["reward_mean"], reverse=True)
    return rows


def write_report(rows: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([r["agent"]] + [_fmt(r[c]) for c in REPORT_COLUMNS[1:]])


def run_ablation(env: str, base_seed: int = 0, episodes: int = 100_000, *,
                 out_dir: str | Path | None = None, step_limit: int | None = None,
                 jobs: int = 1, agents: Sequence[str] = ABLATION_ORDER,
                 options: dict | None = None) -> AblationResult:
    """Run the eight preset agents on shared seeds and build the comparison report.

    ``options`` sets ExperimentConfig protocol flags for every agent.
    """
    configs = {name: load_preset(name, env) for name in agents}
    if "baseline" not in configs:
        raise ValueError("the ablation needs the baseline agent as its reference")
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    exps = [
        ExperimentConfig(env=env, agent=cfg, episodes=episodes, step_limit=step_limit,
                         base_seed=base_seed,
                         output_path=None if out is None else out / f"{name}.csv",
                         **(options or {}))
        for name, cfg in configs.items()
    ]
    results = _run_many(exps, jobs)
    summaries = {}
    for name, eps in zip(configs, results):
        summaries[name] = summarize(eps)
        log.info("%s/%s: mean reward %.2f", env, name, summaries[name]["total_reward"].mean)
        if out is not None:
            write_summary(summaries[name], out / f"{name}_summary.csv")
    report = ablation_report(env, summaries, configs)
    if out is not None:
        write_report(report, out / "ablation_report.csv")
    return AblationResult(env, summaries, report)


def sweep_field(parameter: str) -> str:
    name = SWEEP_PARAMETERS.get(parameter, parameter)
    if name not in AgentConfig.field_names() or name in ("algorithm", "tie_break"):
        raise ConfigError(
            f"unknown sweep parameter {parameter!r}; expected one of {sorted(set(SWEEP_PARAMETERS))}"
        )
    return name


def run_sweep(env: str, parameter: str, values: Sequence[float], base_agent: AgentConfig | None = None,
              *, episodes: int = 100_000, base_seed: int = 0, step_limit: int | None = None,
              out_path: str | Path | None = None, jobs: int = 1,
              options: dict | None = None) -> list[dict]:
    """One experiment per value with every other setting held at ``base_agent``
    (default: the environment's FullModel preset)."""
    if not values:
        raise ValueError("sweep needs at least one value")
    name = sweep_field(parameter)
    base = base_agent if base_agent is not None else load_preset("fullmodel", env)
    exps = []
    for v in values:
        if name == "horizon_k":
            v = int(v)
        agent = replace(base, **{name: v}).validate()
        exps.append(ExperimentConfig(env=env, agent=agent, episodes=episodes,
                                     step_limit=step_limit, base_seed=base_seed,
                                     **(options or {})))
    failure = make_env(env).failure_metric
    rows = []
    for v, eps in zip(values, _run_many(exps, jobs)):
        summ = summarize(eps)
        reward = summ["total_reward"]
        rows.append({
            "parameter": parameter, "value": v, "mean": reward.mean, "std": reward.std,
            "ci_low": reward.ci_low, "ci_high": reward.ci_high, "n": reward.n,
            "failures_mean": summ[failure].mean, "rollbacks_mean": summ["rollbacks"].mean,
        })
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SWEEP_COLUMNS)
            for r in rows:
                writer.writerow([r["parameter"], r["value"]] + [
                    r[c] if c == "n" else repr(float(r[c])) for c in SWEEP_COLUMNS[2:]
                ])
    return rows
