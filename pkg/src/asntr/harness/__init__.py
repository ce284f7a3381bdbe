"""Experiment harness: configs, runs, comparisons and the command line."""

from .compare import CompareError, compare_directory
from .config import ExperimentConfig, load_config, parse_config
from .experiment import build_experiment, evaluate_test
from .runner import run_experiment
