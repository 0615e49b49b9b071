"""Decentralized stochastic compositional minimax optimization on simulated worker networks."""

from . import algorithms, golden, harness, metrics, problems, rng, theory, topology
from .algorithms import ALGORITHMS, HyperParams, SwarmState, init, run, step
from .harness import ExperimentConfig, cli, parse_config, run_experiment
from .problems import make_auroc, make_quadratic, make_tanh
from .topology import MixingMatrix, build_complete, build_from_weights, build_ring, mix

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS",
    "ExperimentConfig",
    "HyperParams",
    "MixingMatrix",
    "SwarmState",
    "algorithms",
    "build_complete",
    "build_from_weights",
    "build_ring",
    "cli",
    "golden",
    "harness",
    "init",
    "make_auroc",
    "make_quadratic",
    "make_tanh",
    "metrics",
    "mix",
    "parse_config",
    "problems",
    "rng",
    "run",
    "run_experiment",
    "step",
    "theory",
    "topology",
]
