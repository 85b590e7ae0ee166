"""Experiment driver: consecutive-pair registration over a scan directory,
relative pose error metrics, and CSV/ECDF report emission."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..baselines import BaselineKind, register_baseline
from ..se3 import RigidTransform, compose, invert, pose_error
from ..solver import SolverConfig, register
from ..surface import PointCloud, estimate_stats
from .cloud_io import load_cloud, read_pose
from .synthetic import downsample, perturb

ALGORITHMS = ("cobig", "cogicp", "gicp", "p2pt", "p2pl")
_SCAN_SUFFIXES = (".xyz", ".txt", ".csv", ".ply")
_PERTURBATION_LEVELS = ("none", "easy", "medium", "hard")


@dataclass(frozen=True)
class ExperimentSpec:
    """One benchmark run: algorithm, dataset, preprocessing, and seeds."""

    algorithm: str
    dataset_dir: Path
    downsample_fraction: float = 1.0
    rng_seed: int = 0
    perturbation_level: str = "none"
    repetitions: int = 1
    config: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if not 0.0 < self.downsample_fraction <= 1.0:
            raise ValueError("downsample_fraction must lie in (0, 1]")
        if self.perturbation_level not in _PERTURBATION_LEVELS:
            raise ValueError(f"unknown perturbation level {self.perturbation_level!r}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        object.__setattr__(self, "dataset_dir", Path(self.dataset_dir))


@dataclass(frozen=True)
class PairResult:
    """Metrics for one registered pair; e_rot is stored in radians."""

    pair_id: str
    e_trans: float
    e_rot: float
    wall_time: float
    iterations: int
    converged: bool


def run_algorithm(algorithm: str, source: PointCloud, target: PointCloud,
                  init: RigidTransform, config: SolverConfig):
    if algorithm == "cobig":
        return register(source, target, init=init, config=config)
    return register_baseline(BaselineKind(algorithm), source, target,
                             init=init, config=config)


def discover_scans(dataset_dir) -> list[tuple[Path, Path]]:
    """Scan files (sorted by name) paired with their ground-truth pose files.

    Each scan `name.ext` must have a sidecar `name.pose` holding one 12-number
    transform line (the scan's pose in a common world frame).
    """
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise FileNotFoundError(f"no such dataset directory: {dataset_dir}")
    scans = sorted(p for p in dataset_dir.iterdir()
                   if p.suffix.lower() in _SCAN_SUFFIXES)
    out = []
    for scan in scans:
        pose = scan.with_suffix(".pose")
        if not pose.exists():
            raise FileNotFoundError(f"missing ground-truth pose file: {pose}")
        out.append((scan, pose))
    return out


def _needs_stats(algorithm: str) -> bool:
    return algorithm != "p2pt"


def run_sequence(spec: ExperimentSpec) -> list[PairResult]:
    """Register every consecutive scan pair of the dataset.

    Scans are downsampled once (seeded per scan index) and reused in both
    roles.  With perturbation_level "none" registration starts from identity,
    matching the consecutive-scan protocol; otherwise each repetition starts
    from a seeded perturbation of the ground-truth relative pose.
    """
    scans = discover_scans(spec.dataset_dir)
    if len(scans) < 2:
        raise ValueError(f"need at least 2 scans in {spec.dataset_dir}, found {len(scans)}")

    clouds = []
    poses = []
    for i, (scan_path, pose_path) in enumerate(scans):
        cloud, _ = load_cloud(scan_path)
        cloud = downsample(cloud, spec.downsample_fraction, seed=[spec.rng_seed, i])
        if _needs_stats(spec.algorithm):
            cloud = estimate_stats(cloud, k=spec.config.k_neighbors,
                                   eps_plane=spec.config.eps_plane)
        clouds.append(cloud)
        poses.append(read_pose(pose_path))

    results: list[PairResult] = []
    for k in range(len(scans) - 1):
        target = clouds[k]
        source = clouds[k + 1]
        t_gt = compose(invert(poses[k]), poses[k + 1])
        base_id = f"{scans[k][0].stem}->{scans[k + 1][0].stem}"
        for rep in range(spec.repetitions):
            if spec.perturbation_level == "none":
                init = RigidTransform.identity()
            else:
                init = perturb(t_gt, spec.perturbation_level,
                               seed=[spec.rng_seed, k, rep])
            pair_id = base_id if spec.repetitions == 1 else f"{base_id}/rep{rep}"
            start = time.perf_counter()
            outcome = run_algorithm(spec.algorithm, source, target, init, spec.config)
            elapsed = time.perf_counter() - start
            e_trans, e_rot = pose_error(outcome.transform, t_gt)
            results.append(PairResult(pair_id=pair_id, e_trans=e_trans, e_rot=e_rot,
                                      wall_time=elapsed, iterations=outcome.iterations,
                                      converged=outcome.converged))
    return results


def ecdf(values) -> list[tuple[float, float]]:
    """Empirical CDF points: sorted values with cumulative probability i/n."""
    values = sorted(float(v) for v in values)
    n = len(values)
    return [(v, (i + 1) / n) for i, v in enumerate(values)]


def _fmt(x: float) -> str:
    return repr(float(x))


def emit_report(results: list[PairResult], out_dir) -> dict[str, Path]:
    """Write per-pair, summary, and ECDF CSVs; returns the written paths.

    Rotation errors are reported in degrees; per-pair rows keep the result
    order.  All float fields use shortest round-trip formatting, so identical
    results produce identical files.
    """
    if not results:
        raise ValueError("no results to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    paths = {
        "pairs": out_dir / "pairs.csv",
        "summary": out_dir / "summary.csv",
        "ecdf_translation": out_dir / "ecdf_translation.csv",
        "ecdf_rotation": out_dir / "ecdf_rotation.csv",
    }

    with open(paths["pairs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair_id", "e_trans_m", "e_rot_deg", "time_s",
                         "iterations", "converged"])
        for r in results:
            writer.writerow([r.pair_id, _fmt(r.e_trans), _fmt(math.degrees(r.e_rot)),
                             _fmt(r.wall_time), r.iterations, r.converged])

    e_trans = [r.e_trans for r in results]
    e_rot_deg = [math.degrees(r.e_rot) for r in results]
    with open(paths["summary"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n_pairs", "mean_e_trans_m", "mean_e_rot_deg", "mean_time_s"])
        writer.writerow([len(results),
                         _fmt(float(np.mean(e_trans))),
                         _fmt(float(np.mean(e_rot_deg))),
                         _fmt(float(np.mean([r.wall_time for r in results])))])

    for key, values, column in (("ecdf_translation", e_trans, "e_trans_m"),
                                ("ecdf_rotation", e_rot_deg, "e_rot_deg")):
        with open(paths[key], "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow([column, "probability"])
            for value, prob in ecdf(values):
                writer.writerow([_fmt(value), _fmt(prob)])

    return paths


# --- flat key=value config/spec files -------------------------------------

def parse_key_values(text: str) -> dict[str, str]:
    """Parse `key = value` lines; blank lines and # comments are ignored."""
    out: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"line {line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


_SOLVER_COERCIONS = {
    "sigma0": lambda s: s if s == "auto" else float(s),
    "sigma_decay": float,
    "max_iterations": int,
    "translation_tol": float,
    "rotation_tol": float,
    "k_neighbors": int,
    "eps_plane": float,
    "gate_mode": str,
    "eps_gate": float,
    "pinv_tolerance": float,
}


def solver_config_from_mapping(mapping: dict[str, str]) -> SolverConfig:
    kwargs = {}
    for key, value in mapping.items():
        if key not in _SOLVER_COERCIONS:
            raise ValueError(f"unknown config key {key!r}")
        kwargs[key] = _SOLVER_COERCIONS[key](value)
    return SolverConfig(**kwargs)


def load_solver_config(path) -> SolverConfig:
    return solver_config_from_mapping(parse_key_values(Path(path).read_text(encoding="utf-8")))


def load_experiment_spec(path) -> ExperimentSpec:
    """Read an experiment spec file; solver keys may appear in the same file."""
    mapping = parse_key_values(Path(path).read_text(encoding="utf-8"))
    spec_kwargs = {}
    solver_kwargs = {}
    for key, value in mapping.items():
        if key == "algorithm":
            spec_kwargs["algorithm"] = value
        elif key == "dataset_dir":
            spec_kwargs["dataset_dir"] = Path(value)
        elif key == "downsample_fraction":
            spec_kwargs["downsample_fraction"] = float(value)
        elif key == "rng_seed":
            spec_kwargs["rng_seed"] = int(value)
        elif key == "perturbation_level":
            spec_kwargs["perturbation_level"] = value
        elif key == "repetitions":
            spec_kwargs["repetitions"] = int(value)
        else:
            solver_kwargs[key] = value
    if "algorithm" not in spec_kwargs:
        raise ValueError("spec file must set algorithm")
    if "dataset_dir" not in spec_kwargs:
        raise ValueError("spec file must set dataset_dir")
    spec_kwargs["config"] = solver_config_from_mapping(solver_kwargs)
    return ExperimentSpec(**spec_kwargs)
