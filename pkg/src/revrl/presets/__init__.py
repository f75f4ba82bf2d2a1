"""The eight ablation agents for each environment, shipped as flat JSON files."""

from __future__ import annotations

import json
from importlib import resources

from ..agents import AgentConfig, ConfigError

ABLATION_ORDER = (
    "baseline",
    "rollbackonly",
    "thresholdpeagent",
    "roll_threshold",
    "precedenceonly",
    "precedence_r",
    "precedence_th",
    "fullmodel",
)

DISPLAY_NAMES = {
    "baseline": "Baseline",
    "rollbackonly": "RollbackOnly",
    "thresholdpeagent": "ThresholdPeAgent",
    "roll_threshold": "Roll_Threshold",
    "precedenceonly": "PrecedenceOnly",
    "precedence_r": "Precedence_R",
    "precedence_th": "Precedence_Th",
    "fullmodel": "FullModel",
}

ENV_SUFFIX = {"cliffwalking": "cliff", "taxi": "taxi"}


def preset_names() -> list[str]:
    return sorted(
        p.name[: -len(".json")]
        for p in resources.files(__name__).iterdir()
        if p.name.endswith(".json")
    )


def resolve_preset_name(name: str, env: str | None = None) -> str:
    """Map ``fullmodel`` + ``taxi`` (or ``FullModel``) to ``fullmodel-taxi``."""
    key = name.lower()
    if key in preset_names():
        return key
    if env is not None:
        suffix = ENV_SUFFIX.get(env.lower())
        if suffix is not None and f"{key}-{suffix}" in preset_names():
            return f"{key}-{suffix}"
    raise ConfigError(f"unknown preset {name!r}; known presets: {', '.join(preset_names())}")


def preset_text(name: str, env: str | None = None) -> str:
    full = resolve_preset_name(name, env)
    return resources.files(__name__).joinpath(f"{full}.json").read_text()


def preset_dict(name: str, env: str | None = None) -> dict:
    return json.loads(preset_text(name, env))


def load_preset(name: str, env: str | None = None) -> AgentConfig:
    data = preset_dict(name, env)
    data.pop("env", None)
    return AgentConfig(**data).validate()
