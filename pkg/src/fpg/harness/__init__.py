"""Experiment orchestration: configs, seeded runs, heatmaps and plots."""

from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .heatmap import emit_heatmap, read_color_range, signal_field
from .plots import EmptyInputError, plot_learning_curves
from .runner import AGGREGATE_COLUMNS, ExperimentError, aggregate, read_jsonl, run_experiment, run_seed

__all__ = [
    "AGGREGATE_COLUMNS",
    "ConfigError",
    "EmptyInputError",
    "ExperimentConfig",
    "ExperimentError",
    "aggregate",
    "dump_config",
    "emit_heatmap",
    "load_config",
    "parse_config",
    "plot_learning_curves",
    "read_color_range",
    "read_jsonl",
    "run_experiment",
    "run_seed",
    "signal_field",
]
