"""Command-line entry point: run, ablate, sweep, report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .agents import AgentConfig, ConfigError, TabularAgent
from .config import dump_preset, split_config
from .envs import ENVIRONMENTS
from .experiment import (
    EXPERIMENT_FLAGS, ExperimentConfig, compare, read_episodes, run_ablation, run_experiment,
    run_sweep, summarize, sweep_field, write_comparison, write_summary,
)
from .presets import preset_dict, preset_names

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3

SETTABLE_EXPERIMENT_KEYS = ("step_limit",) + EXPERIMENT_FLAGS

log = logging.getLogger("revrl")


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_overrides(items: list[str] | None) -> dict:
    """``key=value`` pairs; values are read as JSON scalars when they parse."""
    out: dict = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        if key not in AgentConfig.field_names() and key not in SETTABLE_EXPERIMENT_KEYS:
            raise ConfigError(f"--set: unknown key {key!r}")
        value = _parse_value(raw.strip())
        if key in out and out[key] != value:
            raise ConfigError(f"--set: conflicting values for {key!r} ({out[key]!r} vs {value!r})")
        out[key] = value
    return out


def _agent_source(source: str, env: str | None) -> dict:
    """Flat config mapping from a preset name or a JSON file path."""
    path = Path(source)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as err:
            raise ConfigError(f"{path}: invalid JSON ({err})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        return data
    return preset_dict(source, env)


def build_config(args, env: str | None, agent_source: str) -> ExperimentConfig:
    data = dict(_agent_source(agent_source, env))
    file_env = data.get("env")
    if env is not None and file_env is not None and file_env != env:
        raise ConfigError(f"env: --env {env!r} conflicts with {file_env!r} from {agent_source!r}")
    if env is not None:
        data["env"] = env
    if "env" not in data:
        raise ConfigError("env: not given by --env or the config file")
    data.update(parse_overrides(getattr(args, "set", None)))
    data["episodes"] = args.episodes
    data["base_seed"] = args.seed
    if getattr(args, "step_limit", None) is not None:
        data["step_limit"] = args.step_limit
    _, exp = split_config(data)
    return exp


def _out_dir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    exp = build_config(args, args.env, args.agent)
    out = _out_dir(args.out)
    exp.output_path = out / "episodes.csv"
    env = exp.build_env()
    agent = TabularAgent(exp.agent, env.n_states, env.n_actions)
    episodes = run_experiment(exp, agent)
    summary = summarize(episodes)
    write_summary(summary, out / "summary.csv")
    if args.dump_tables:
        # With fresh tables per episode these are the final episode's learner.
        agent.q.dump_csv(out / "q_dump.csv")
        if agent.phi is not None:
            agent.phi.dump_csv(out / "phi_dump.csv")
    r = summary["total_reward"]
    print(f"{exp.env}: {r.n} episodes, mean reward {r.mean:.2f} "
          f"[{r.ci_low:.2f}, {r.ci_high:.2f}], std {r.std:.2f} -> {out}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    options = parse_overrides(args.set)
    agent_keys = sorted(set(options) - set(EXPERIMENT_FLAGS))
    if agent_keys:
        raise ConfigError(f"ablate --set only accepts protocol flags, got {', '.join(agent_keys)}")
    ExperimentConfig(env=args.env, **options).validate()
    out = _out_dir(args.out)
    result = run_ablation(args.env, args.seed, args.episodes, out_dir=out,
                          step_limit=args.step_limit, jobs=args.jobs, options=options)
    print(f"{'agent':<18}{'reward':>12}{'std':>10}{'delta%':>9}{'failures':>11}{'rollbacks':>11}")
    for row in result.report:
        pct = "n/a" if row["pct_delta_reward"] is None else f"{row['pct_delta_reward']:+.1f}%"
        rb = "n/a" if row["rollbacks"] is None else f"{row['rollbacks']:.1f}"
        print(f"{row['agent']:<18}{row['reward_mean']:>12.1f}{row['reward_std']:>10.1f}"
              f"{pct:>9}{row['failures']:>11.3f}{rb:>11}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sweep_field(args.param)
    try:
        values = [_parse_value(v.strip()) for v in args.values.split(",") if v.strip()]
    except ValueError as err:
        raise ConfigError(f"--values: {err}") from None
    if not values or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in values):
        raise ConfigError(f"--values: expected a comma-separated list of numbers, got {args.values!r}")
    exp = build_config(args, args.env, args.agent)
    out = _out_dir(args.out)
    rows = run_sweep(exp.env, args.param, values, exp.agent, episodes=exp.episodes,
                     base_seed=exp.base_seed, step_limit=exp.step_limit,
                     out_path=out / f"sweep_{args.param}.csv", jobs=args.jobs,
                     options=exp.options())
    for r in rows:
        print(f"{args.param}={r['value']}: mean {r['mean']:.2f} [{r['ci_low']:.2f}, {r['ci_high']:.2f}]")
    return EXIT_OK


def cmd_report(args) -> int:
    base = summarize(read_episodes(args.baseline))
    variant = summarize(read_episodes(args.variant))
    rows = compare(base, variant)
    out = Path(args.out)
    if out.suffix != ".csv":
        out = _out_dir(args.out) / "comparison.csv"
    write_comparison(rows, out)
    for r in rows:
        pct = "n/a" if r.pct_delta_mean is None else f"{r.pct_delta_mean:+.1f}%"
        print(f"{r.metric:<16}{r.baseline_mean:>12.3f}{r.variant_mean:>12.3f}{r.delta_mean:>+12.3f}{pct:>9}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="revrl", description=__doc__)
    parser.add_argument("--dump-preset", metavar="NAME", help="print a shipped preset as JSON and exit")
    parser.add_argument("--list-presets", action="store_true", help="list shipped presets and exit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, agent_default=None, needs_env=True):
        p.add_argument("--env", choices=sorted(ENVIRONMENTS), required=needs_env)
        if agent_default is not False:
            p.add_argument("--agent", default=agent_default, required=agent_default is None,
                           help="preset name (e.g. fullmodel) or JSON config file")
        p.add_argument("--episodes", type=int, default=100_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--step-limit", type=int, default=None)
        p.add_argument("--out", required=True)

    p_run = sub.add_parser("run", help="train one agent")
    common(p_run, needs_env=False)
    p_run.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_run.add_argument("--dump-tables", action="store_true", help="write q_dump.csv (and phi_dump.csv)")
    p_run.set_defaults(func=cmd_run)

    p_abl = sub.add_parser("ablate", help="run the eight ablation agents")
    common(p_abl, agent_default=False)
    p_abl.add_argument("--set", action="append", metavar="FLAG=VALUE", help="protocol flag override")
    p_abl.add_argument("--jobs", type=int, default=1)
    p_abl.set_defaults(func=cmd_ablate)

    p_sw = sub.add_parser("sweep", help="vary one parameter of an agent")
    common(p_sw, agent_default="fullmodel")
    p_sw.add_argument("--param", required=True)
    p_sw.add_argument("--values", required=True, help="comma-separated values")
    p_sw.add_argument("--set", action="append", metavar="KEY=VALUE")
    p_sw.add_argument("--jobs", type=int, default=1)
    p_sw.set_defaults(func=cmd_sweep)

    p_rep = sub.add_parser("report", help="compare two per-episode CSVs")
    p_rep.add_argument("--baseline", required=True)
    p_rep.add_argument("--variant", required=True)
    p_rep.add_argument("--out", required=True, help="output directory or .csv path")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.list_presets:
            print("\n".join(preset_names()))
            return EXIT_OK
        if args.dump_preset:
            sys.stdout.write(dump_preset(args.dump_preset))
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        if getattr(args, "episodes", 1) < 1:
            raise ConfigError("--episodes must be >= 1")
        return args.func(args)
    except ConfigError as err:
        print(f"revrl: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (TypeError, ValueError) as err:
        print(f"revrl: config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"revrl: I/O error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
