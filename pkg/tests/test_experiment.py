import csv
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from revrl.agents import AgentConfig, StepResult, TabularAgent
from revrl.envs import DOWN, RIGHT, UP, CliffWalking, Taxi
from revrl.experiment import (
    EPISODE_COLUMNS, ExperimentConfig, RunSummary, aggregate, compare, read_episodes,
    run_ablation, run_episode, run_experiment, run_sweep, summarize, write_comparison,
)
from revrl.presets import load_preset


class ScriptedAgent:
    """Plays a fixed action list; never rolls back."""

    def __init__(self, actions):
        self.actions = actions

    def begin_episode(self, state, rng):
        self.i = 0

    def step(self, env, state, t, rng, sim_state=None):
        a = self.actions[self.i % len(self.actions)]
        self.i += 1
        out = env.step(state, a)
        return StepResult(a, out, 0.0, 1.0, False, out.next_state, None)


class AlwaysRollback:
    def begin_episode(self, state, rng):
        pass

    def step(self, env, state, t, rng, sim_state=None):
        out = env.step(state if sim_state is None else sim_state, UP)
        return StepResult(UP, out, -5.0, 1.0, True, state, None)


class TestRunEpisode:
    def test_optimal_path(self):
        agent = ScriptedAgent([UP] + [RIGHT] * 11 + [DOWN])
        stats = run_episode(CliffWalking(), agent, 700, seed=0)
        assert (stats.total_reward, stats.steps, stats.falls) == (-13.0, 13, 0)
        assert stats.reached_goal

    def test_always_rollback_exhausts_budget(self):
        stats = run_episode(CliffWalking(), AlwaysRollback(), 50, seed=0)
        assert stats.steps == 50 and stats.rollbacks == 50
        assert not stats.reached_goal
        assert stats.total_reward == 0.0

    def test_charged_rollbacks_accrue_reward(self):
        stats = run_episode(CliffWalking(), AlwaysRollback(), 50, seed=0,
                            charge_rolled_back_steps=True)
        assert stats.total_reward == -50.0 and stats.rollbacks == 50

    def test_rollback_leaves_simulator_in_place(self):
        # Stepping UP from the start: the simulator climbs while the agent
        # is rolled back to the start every time.
        env = CliffWalking()
        seen = []

        class Spy(AlwaysRollback):
            def step(self, env, state, t, rng, sim_state=None):
                seen.append((state, sim_state))
                return super().step(env, state, t, rng, sim_state)

        run_episode(env, Spy(), 4, seed=0)
        assert seen == [(36, 36), (36, 24), (36, 12), (36, 0)]
        seen.clear()
        run_episode(env, Spy(), 3, seed=0, rollback_restores_env=True)
        assert seen == [(36, 36)] * 3

    def test_falls_counted(self):
        agent = ScriptedAgent([RIGHT])
        stats = run_episode(CliffWalking(), agent, 10, seed=0)
        assert stats.falls == 10 and stats.total_reward == -1000.0

    def test_step_limit_validated(self):
        with pytest.raises(ValueError):
            run_episode(CliffWalking(), AlwaysRollback(), 0, seed=0)

    @pytest.mark.parametrize("preset,env_cls", [("fullmodel", CliffWalking), ("fullmodel", Taxi)])
    def test_deterministic(self, preset, env_cls):
        env = env_cls()
        cfg = load_preset(preset, env.name)
        runs = [
            run_episode(env, TabularAgent(cfg, env.n_states, env.n_actions), env.default_step_limit, seed=11)
            for _ in range(2)
        ]
        assert runs[0] == runs[1]


class TestRunExperiment:
    def test_seed_schedule(self):
        cfg = ExperimentConfig(env="cliffwalking", agent=load_preset("baseline", "cliffwalking"),
                               episodes=3, base_seed=7)
        assert [e.seed for e in run_experiment(cfg)] == [7, 8, 9]

    def test_csv_header_and_rows(self, tmp_path):
        path = tmp_path / "ep.csv"
        cfg = ExperimentConfig(env="taxi", agent=load_preset("fullmodel", "taxi"), episodes=5,
                               output_path=path)
        episodes = run_experiment(cfg)
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(EPISODE_COLUMNS)
        assert len(lines) == 6
        assert read_episodes(path) == episodes

    def test_byte_reproducible(self, tmp_path):
        for name in ("a.csv", "b.csv"):
            run_experiment(ExperimentConfig(env="cliffwalking", agent=load_preset("fullmodel", "cliffwalking"),
                                            episodes=30, base_seed=3, output_path=tmp_path / name))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_agents_share_seed_columns(self, tmp_path):
        for name in ("baseline", "fullmodel"):
            run_experiment(ExperimentConfig(env="taxi", agent=load_preset(name, "taxi"), episodes=8,
                                            base_seed=5, output_path=tmp_path / f"{name}.csv"))
        seeds = [
            [row["seed"] for row in csv.DictReader(open(tmp_path / f"{n}.csv"))]
            for n in ("baseline", "fullmodel")
        ]
        assert seeds[0] == seeds[1] == [str(s) for s in range(5, 13)]

    def test_reset_states_identical_across_agents(self):
        env = Taxi()
        starts = [env.reset(random.Random(s)) for s in range(20)]
        for name in ("baseline", "precedenceonly"):
            agent = TabularAgent(load_preset(name, "taxi"), env.n_states, env.n_actions)
            seen = []
            orig = agent.begin_episode

            def spy(state, rng, orig=orig):
                seen.append(state)
                orig(state, rng)

            agent.begin_episode = spy
            run_experiment(ExperimentConfig(env="taxi", agent=agent.config, episodes=20), agent)
            assert seen == starts

    def test_replay_oracle(self):
        # Recompute each logged episode by stepping a fresh learner by hand.
        cfg = ExperimentConfig(env="cliffwalking", agent=load_preset("fullmodel", "cliffwalking"),
                               episodes=15, base_seed=100)
        logged = run_experiment(cfg)
        env = CliffWalking()
        for ep in logged:
            agent = TabularAgent(cfg.agent, env.n_states, env.n_actions)
            rng = random.Random(ep.seed)
            s = sim = env.reset(rng)
            agent.begin_episode(s, rng)
            total, rollbacks = 0.0, 0
            for t in range(700):
                res = agent.step(env, s, t, rng, sim)
                s, sim = res.effective_next_state, res.outcome.next_state
                if res.rollback_fired:
                    rollbacks += 1
                    continue
                total += res.outcome.reward
                if res.outcome.terminated:
                    break
            assert (total, t + 1, rollbacks) == (ep.total_reward, ep.steps, ep.rollbacks)

    def test_replay_oracle_restoring_mode(self):
        cfg = ExperimentConfig(env="cliffwalking", agent=load_preset("rollbackonly", "cliffwalking"),
                               episodes=10, base_seed=40, rollback_restores_env=True,
                               charge_rolled_back_steps=True)
        env = CliffWalking()
        for ep in run_experiment(cfg):
            agent = TabularAgent(cfg.agent, env.n_states, env.n_actions)
            rng = random.Random(ep.seed)
            s = env.reset(rng)
            agent.begin_episode(s, rng)
            total, falls = 0.0, 0
            for t in range(700):
                res = agent.step(env, s, t, rng)
                s = res.effective_next_state
                total += res.outcome.reward
                falls += res.outcome.fell_off_cliff
                if res.outcome.terminated:
                    break
            assert (total, falls, t + 1) == (ep.total_reward, ep.falls, ep.steps)

    def test_strict_dropoff_flag_reaches_env(self):
        loose = ExperimentConfig(env="taxi", agent=load_preset("baseline", "taxi"), episodes=30)
        strict = ExperimentConfig(env="taxi", agent=load_preset("baseline", "taxi"), episodes=30,
                                  strict_taxi_dropoff=True)
        assert strict.build_env().strict_dropoff and not loose.build_env().strict_dropoff
        assert run_experiment(loose) != run_experiment(strict)

    def test_continual_mode_keeps_tables(self):
        cfg = ExperimentConfig(env="cliffwalking", agent=load_preset("baseline", "cliffwalking"),
                               episodes=200, fresh_tables_per_episode=False)
        eps = run_experiment(cfg)
        assert np.mean([e.steps for e in eps[-50:]]) < np.mean([e.steps for e in eps[:10]])

    def test_invariants(self):
        cfg = ExperimentConfig(env="taxi", agent=load_preset("fullmodel", "taxi"), episodes=20,
                               step_limit=300)
        for e in run_experiment(cfg):
            assert e.steps <= 300 and e.rollbacks <= e.steps and e.deliveries in (0, 1)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            run_experiment(ExperimentConfig(env="nope"))
        with pytest.raises(ValueError, match="episodes"):
            run_experiment(ExperimentConfig(episodes=0))

    def test_unwritable_output(self, tmp_path):
        cfg = ExperimentConfig(episodes=1, output_path=tmp_path / "missing" / "x.csv")
        with pytest.raises(OSError):
            run_experiment(cfg)


class TestAggregate:
    def test_small_sample(self):
        s = aggregate([2, 4, 6])
        assert (s.mean, s.std, s.n) == (4.0, 2.0, 3)
        half = 1.96 * 2 / math.sqrt(3)
        assert half == pytest.approx(2.263, abs=5e-4)
        assert (s.ci_low, s.ci_high) == pytest.approx((4 - half, 4 + half))

    def test_single_value(self):
        assert aggregate([5]) == RunSummary(5.0, 0.0, 5.0, 5.0, 1)

    def test_empty(self):
        with pytest.raises(ValueError):
            aggregate([])

    def test_reported_interval(self):
        n, m, sd = 100_000, -399.77, 563.78
        d = sd * math.sqrt((n - 1) / n)
        values = np.full(n, m)
        values[: n // 2] += d
        values[n // 2:] -= d
        s = aggregate(values)
        assert round(s.ci_low, 2) == -403.26
        assert s.ci_high == pytest.approx(-396.27, abs=0.011)
        assert s.std == pytest.approx(sd, rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=200))
    def test_matches_two_pass(self, xs):
        n = len(xs)
        mean = sum(xs) / n
        var = sum((x - mean) ** 2 for x in xs) / (n - 1)
        s = aggregate(xs)
        assert s.mean == pytest.approx(mean, rel=1e-9, abs=1e-6)
        assert s.std == pytest.approx(math.sqrt(var), rel=1e-9, abs=1e-6)
        assert s.ci_low <= s.mean <= s.ci_high


def _summary(mean, std):
    lo, hi = mean - 1, mean + 1
    return RunSummary(mean, std, lo, hi, 100_000)


class TestCompare:
    def test_table_values(self):
        rows = compare({"total_reward": _summary(-399.77, 563.78)},
                       {"total_reward": _summary(-179.81, 160.97)})
        r = rows[0]
        assert r.delta_mean == pytest.approx(219.96)
        assert round(r.pct_delta_mean, 1) == 55.0
        assert r.delta_std == pytest.approx(-402.81)
        assert round(r.pct_delta_std, 1) == -71.4

    def test_failure_reduction_is_negative(self):
        r = compare({"falls": _summary(2.2092, 4.14)}, {"falls": _summary(0.0037, 0.07)})[0]
        assert round(r.pct_delta_mean, 1) == -99.8

    def test_self_comparison(self):
        s = {"total_reward": _summary(-10.0, 2.0)}
        r = compare(s, s)[0]
        assert (r.delta_mean, r.pct_delta_mean, r.delta_std, r.pct_delta_std) == (0, 0, 0, 0)

    def test_zero_baseline_is_na(self, tmp_path):
        rows = compare({"rollbacks": _summary(0.0, 0.0)}, {"rollbacks": _summary(3.4, 7.4)})
        assert rows[0].pct_delta_mean is None and rows[0].pct_delta_std is None
        write_comparison(rows, tmp_path / "c.csv")
        line = (tmp_path / "c.csv").read_text().splitlines()[1]
        assert line.endswith(",n/a") and ",n/a," in line

    def test_metric_mismatch(self):
        with pytest.raises(ValueError):
            compare({"a": _summary(1, 1)}, {"b": _summary(1, 1)})


def test_small_ablation_writes_outputs(tmp_path):
    res = run_ablation("cliffwalking", base_seed=0, episodes=20, out_dir=tmp_path)
    assert len(res.summaries) == 8
    for name in res.summaries:
        assert (tmp_path / f"{name}.csv").exists()
        assert (tmp_path / f"{name}_summary.csv").exists()
    report = (tmp_path / "ablation_report.csv").read_text().splitlines()
    assert report[0] == "agent,reward_mean,reward_std,delta_reward,pct_delta_reward,failures,pct_failure_reduction,rollbacks"
    assert len(report) == 9
    means = [r["reward_mean"] for r in res.report]
    assert means == sorted(means, reverse=True)
    base = next(r for r in res.report if r["agent"] == "Baseline")
    assert base["delta_reward"] == 0.0 and base["rollbacks"] is None


def test_ablation_parallel_matches_serial():
    serial = run_ablation("taxi", episodes=5, agents=("baseline", "fullmodel"))
    parallel = run_ablation("taxi", episodes=5, agents=("baseline", "fullmodel"), jobs=2)
    assert serial.summaries == parallel.summaries


def test_sweep_rows(tmp_path):
    rows = run_sweep("cliffwalking", "K", [0, 2], episodes=10, out_path=tmp_path / "s.csv")
    assert [r["value"] for r in rows] == [0, 2]
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "parameter,value,mean,std,ci_low,ci_high,n,failures_mean,rollbacks_mean"
    assert lines[1].startswith("K,0,")
    with pytest.raises(ValueError):
        run_sweep("cliffwalking", "K", [], episodes=1)
    with pytest.raises(ValueError):
        run_sweep("cliffwalking", "nonsense", [1], episodes=1)


def test_summarize_metrics():
    cfg = ExperimentConfig(env="taxi", agent=load_preset("baseline", "taxi"), episodes=4)
    s = summarize(run_experiment(cfg))
    assert set(s) == {"total_reward", "steps", "falls", "illegal_actions", "deliveries", "rollbacks"}
    assert all(v.n == 4 for v in s.values())
