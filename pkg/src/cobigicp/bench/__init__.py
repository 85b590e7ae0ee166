"""Benchmark harness: cloud I/O, synthetic scenes, experiment driver, CLI."""

from .cloud_io import load_cloud, read_pose, save_xyz, write_pose
from .runner import (ALGORITHMS, ExperimentSpec, PairResult, discover_scans,
                     ecdf, emit_report, load_experiment_spec,
                     load_solver_config, run_algorithm, run_sequence)
from .synthetic import (PERTURBATION_LEVELS, SCENE_KINDS, downsample,
                        make_synthetic_scene, perturb)

__all__ = [
    "ALGORITHMS",
    "ExperimentSpec",
    "PERTURBATION_LEVELS",
    "PairResult",
    "SCENE_KINDS",
    "discover_scans",
    "downsample",
    "ecdf",
    "emit_report",
    "load_cloud",
    "load_experiment_spec",
    "load_solver_config",
    "make_synthetic_scene",
    "perturb",
    "read_pose",
    "run_algorithm",
    "run_sequence",
    "save_xyz",
    "write_pose",
]
