"""Flat JSON configuration files: one object, keys named after the
AgentConfig and ExperimentConfig fields."""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

from .agents import AgentConfig, ConfigError
from .experiment import ExperimentConfig
from .presets import preset_dict, resolve_preset_name

EXPERIMENT_KEYS = tuple(f.name for f in fields(ExperimentConfig) if f.name != "agent")
AGENT_KEYS = AgentConfig.field_names()


def split_config(data: dict) -> tuple[AgentConfig, ExperimentConfig]:
    """Build and validate both configs from one flat mapping."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(data) - set(AGENT_KEYS) - set(EXPERIMENT_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    agent_part = {k: v for k, v in data.items() if k in AGENT_KEYS}
    exp_part = {k: v for k, v in data.items() if k in EXPERIMENT_KEYS}
    for key in ("alpha", "gamma", "epsilon", "q_init", "ema_rate", "penalty_weight",
                "phi_init", "threshold", "penalty_factor"):
        # JSON integers such as "threshold": 3 are fine for float fields.
        if isinstance(agent_part.get(key), int) and not isinstance(agent_part[key], bool):
            agent_part[key] = float(agent_part[key])
    agent = AgentConfig(**agent_part).validate()
    exp = ExperimentConfig(agent=agent, **exp_part)
    try:
        exp.validate()
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return agent, exp


def load_config(path: str | Path) -> tuple[AgentConfig, ExperimentConfig]:
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None
    return split_config(data)


def dump_config(agent: AgentConfig, env: str | None = None, **experiment) -> str:
    data = {}
    if env is not None:
        data["env"] = env
    data.update(agent.to_dict())
    data.update(experiment)
    return json.dumps(data, indent=2) + "\n"


def dump_preset(name: str, env: str | None = None) -> str:
    resolve_preset_name(name, env)
    return json.dumps(preset_dict(name, env), indent=2) + "\n"
