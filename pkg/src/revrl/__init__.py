"""Reversibility-aware tabular Q-learning and SARSA with rollback."""

from .agents import AgentConfig, ConfigError, TabularAgent
from .envs import CliffWalking, Taxi, make_env
from .experiment import (
    EpisodeStats,
    ExperimentConfig,
    RunSummary,
    aggregate,
    compare,
    run_ablation,
    run_episode,
    run_experiment,
    run_sweep,
    summarize,
)
from .precedence import PhiTable, PrecedenceBuffer
from .presets import load_preset

__all__ = [
    "AgentConfig", "ConfigError", "TabularAgent", "CliffWalking", "Taxi", "make_env",
    "EpisodeStats", "ExperimentConfig", "RunSummary", "aggregate", "compare",
    "run_ablation", "run_episode", "run_experiment", "run_sweep", "summarize",
    "PhiTable", "PrecedenceBuffer", "load_preset",
]
