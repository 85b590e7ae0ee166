"""Bidirectional correspondence: forward and backward nearest-neighbor search
with a Euclidean round-trip gate."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from .se3 import RigidTransform
from .surface import NeighborIndex, PointCloud

GATE_SCALE = 2.5
GATE_FLOOR = 1e-4


class CorrespondencePair(NamedTuple):
    target_index: int
    source_index: int
    forward_distance: float
    gate_distance: float


@dataclass(frozen=True)
class ForwardMatches:
    """One nearest-source candidate per target point, ordered by target index."""

    target_indices: NDArray[np.int64]
    source_indices: NDArray[np.int64]
    distances: NDArray[np.float64]  # Euclidean, target to transformed source

    def __len__(self) -> int:
        return self.target_indices.shape[0]


@dataclass(frozen=True)
class CorrespondenceSet:
    """Pairs that survived the round-trip gate, plus the rejection count."""

    target_indices: NDArray[np.int64]
    source_indices: NDArray[np.int64]
    forward_distances: NDArray[np.float64]
    gate_distances: NDArray[np.float64]
    rejected_count: int

    def __len__(self) -> int:
        return self.target_indices.shape[0]

    def pairs(self) -> list[CorrespondencePair]:
        return [CorrespondencePair(int(t), int(s), float(f), float(g))
                for t, s, f, g in zip(self.target_indices, self.source_indices,
                                      self.forward_distances, self.gate_distances)]


def forward_search(target: PointCloud, source: PointCloud, transform: RigidTransform,
                   source_index: NeighborIndex | None = None) -> ForwardMatches:
    """Nearest transformed source point for every target point.

    If `source_index` is given it must be built over transform.apply(source
    points); otherwise it is (re)built here, which is the correct default since
    source points move every iteration.  Ties resolve to the lowest source
    index.
    """
    if len(target) == 0 or len(source) == 0:
        raise ValueError("empty point cloud")
    if source_index is None:
        source_index = NeighborIndex(transform.apply(source.points))
    idx, sq = source_index.query(target.points, k=1)
    return ForwardMatches(target_indices=np.arange(len(target), dtype=np.int64),
                          source_indices=idx[:, 0],
                          distances=np.sqrt(sq[:, 0]))


def backward_search(target_index: NeighborIndex, source: PointCloud,
                    transform: RigidTransform, forward: ForwardMatches) -> NDArray[np.int64]:
    """For each forward pair, the target point nearest to its matched source.

    Returns back-match indices aligned with `forward`.
    """
    matched = transform.apply(source.points[forward.source_indices])
    idx, _ = target_index.query(matched, k=1)
    return idx[:, 0]


def bidirectional_filter(forward: ForwardMatches, back_indices: NDArray[np.int64],
                         target: PointCloud, eps_gate: float) -> CorrespondenceSet:
    """Keep forward pairs whose back-match lands within eps_gate of the start.

    The gate distance is Euclidean between the original target point and the
    target point recovered by the backward search; acceptance is strict.
    """
    gate = np.sqrt(((target.points[back_indices]
                     - target.points[forward.target_indices]) ** 2).sum(axis=-1))
    keep = gate < eps_gate
    return CorrespondenceSet(target_indices=forward.target_indices[keep],
                             source_indices=forward.source_indices[keep],
                             forward_distances=forward.distances[keep],
                             gate_distances=gate[keep],
                             rejected_count=int(np.count_nonzero(~keep)))


def adaptive_gate(forward_distances, scale: float = GATE_SCALE,
                  floor: float = GATE_FLOOR) -> float:
    """Scale-free gate radius: scale times the median forward distance, floored."""
    d = np.asarray(forward_distances, dtype=np.float64)
    if d.size == 0:
        return floor
    return max(scale * float(np.median(d)), floor)
