"""Experiment recipes, CSV/JSON output and the command-line interface."""

from .experiments import KINDS, ExperimentResult, ExperimentSpec, run

__all__ = ["KINDS", "ExperimentResult", "ExperimentSpec", "run"]
