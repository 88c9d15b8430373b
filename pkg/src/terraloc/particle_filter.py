"""Clustered particle filter over 2-D position.

Heading is never estimated: the compass value is applied to rotate body-frame
odometry increments into the world frame and passed through to the estimate.
Weights are assigned from the normalized similarity map at each particle's
cell; resampling is systematic (low variance) and triggers on accumulated
travel distance rather than on every update. The position estimate is the
weighted centroid of the heaviest of k clusters, which keeps a single aliased
or drift-split mode from dragging the mean.

A ParticleSet is a single-writer value: operations mutate it in place and
return it; hand-off between threads is safe between steps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .matcher import SCORE_FLOOR, SimilarityMap

__all__ = [
    "DEFAULT_PARTICLE_COUNT",
    "DEFAULT_CLUSTER_COUNT",
    "DEFAULT_RESAMPLE_DISTANCE_M",
    "DEFAULT_ODO_COV_STD_M",
    "OdometryDelta",
    "PoseEstimate",
    "ParticleSet",
    "init",
    "propagate",
    "weight_update",
    "should_resample",
    "systematic_indices",
    "resample",
    "estimate",
    "step",
    "write_particles_csv",
]

DEFAULT_PARTICLE_COUNT = 2000
DEFAULT_CLUSTER_COUNT = 3
DEFAULT_RESAMPLE_DISTANCE_M = 10.0
DEFAULT_ODO_COV_STD_M = 0.3

_KMEANS_SEED = 0x5EED
_KMEANS_MAX_ITERS = 50
_KMEANS_TOL = 1e-6


@dataclass
class OdometryDelta:
    """Body-frame translation increment in meters."""

    dx: float
    dy: float

    @property
    def distance(self) -> float:
        return math.hypot(self.dx, self.dy)


@dataclass
class PoseEstimate:
    """World-frame position estimate with pass-through heading."""

    x: float
    y: float
    heading: float
    cluster_share: float


class ParticleSet:
    """Fixed-count weighted position hypotheses plus resample bookkeeping."""

    def __init__(self, positions: np.ndarray, weights: np.ndarray, rng: np.random.Generator):
        self.positions = np.asarray(positions, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        self.rng = rng
        self.distance_since_resample = 0.0
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must be (N, 2)")
        if self.weights.shape != (self.positions.shape[0],):
            raise ValueError("weights must be (N,)")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite and >= 0")

    @property
    def n(self) -> int:
        return self.positions.shape[0]


def init(center, stddev: float, n: int = DEFAULT_PARTICLE_COUNT, seed: int = 0) -> ParticleSet:
    """Draw n particles from an isotropic Gaussian around the known start."""
    if n < 1:
        raise ValueError(f"particle count must be >= 1, got {n}")
    if stddev < 0:
        raise ValueError(f"stddev must be >= 0, got {stddev}")
    rng = np.random.default_rng(seed)
    positions = np.asarray(center, dtype=np.float64) + rng.normal(0.0, stddev, (n, 2))
    return ParticleSet(positions, np.full(n, 1.0 / n), rng)


def propagate(ps: ParticleSet, delta: OdometryDelta, compass: float) -> ParticleSet:
    """Translate every particle by the compass-rotated odometry increment."""
    if not math.isfinite(compass):
        raise ValueError("compass must be finite")
    c, s = math.cos(compass), math.sin(compass)
    ps.positions[:, 0] += c * delta.dx - s * delta.dy
    ps.positions[:, 1] += s * delta.dx + c * delta.dy
    ps.distance_since_resample += delta.distance
    return ps


def weight_update(ps: ParticleSet, sim: SimilarityMap) -> ParticleSet:
    """Assign each particle the similarity value at its cell.

    Expects a normalized map; particles outside the map extent get the score
    floor, so no hypothesis ever becomes impossible.
    """
    ps.weights = np.asarray(
        sim.lookup(ps.positions[:, 0], ps.positions[:, 1]), dtype=np.float64
    ).reshape(ps.n)
    return ps


def should_resample(ps: ParticleSet, distance_m: float = DEFAULT_RESAMPLE_DISTANCE_M) -> bool:
    return ps.distance_since_resample >= distance_m


def systematic_indices(weights: np.ndarray, n: int, u: float) -> np.ndarray:
    """Offspring indices for systematic resampling with offset u in [0, 1).

    Guarantees floor(n*w_i) <= count_i <= ceil(n*w_i) for every particle.
    """
    w = np.asarray(weights, dtype=np.float64)
    cum = np.cumsum(w / w.sum())
    points = (np.arange(n) + u) / n
    return np.minimum(np.searchsorted(cum, points, side="right"), len(w) - 1)


def _noise_transform(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.shape != (2, 2) or not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("odometry covariance must be a symmetric 2x2 matrix")
    eigvals, eigvecs = np.linalg.eigh(cov)
    if eigvals.min() < -1e-12:
        raise ValueError("odometry covariance must be positive semidefinite")
    return eigvecs * np.sqrt(np.clip(eigvals, 0.0, None))


def resample(ps: ParticleSet, odo_cov, seed: int | None = None) -> ParticleSet:
    """Systematic resampling plus Gaussian perturbation.

    Every offspring particle is jittered with noise drawn from the supplied
    odometry covariance, standing in for the motion uncertainty accumulated
    over the travel interval. Weights reset to uniform, the distance trigger
    resets to zero.
    """
    transform = _noise_transform(odo_cov)
    rng = ps.rng if seed is None else np.random.default_rng(seed)
    idx = systematic_indices(ps.weights, ps.n, float(rng.random()))
    noise = rng.standard_normal((ps.n, 2)) @ transform.T
    ps.positions = ps.positions[idx] + noise
    ps.weights = np.full(ps.n, 1.0 / ps.n)
    ps.distance_since_resample = 0.0
    return ps


def _kmeans(points: np.ndarray, k: int):
    """Deterministic k-means (seeded ++-style init, fixed iteration budget)."""
    rng = np.random.default_rng(_KMEANS_SEED)
    npts = points.shape[0]
    centroids = np.empty((k, 2))
    centroids[0] = points[int(rng.integers(npts))]
    for j in range(1, k):
        d2 = np.min(
            ((points[:, None, :] - centroids[None, :j, :]) ** 2).sum(axis=2), axis=1
        )
        total = d2.sum()
        if total > 0:
            centroids[j] = points[int(rng.choice(npts, p=d2 / total))]
        else:
            centroids[j] = points[int(rng.integers(npts))]

    labels = np.zeros(npts, dtype=np.int64)
    for _ in range(_KMEANS_MAX_ITERS):
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        moved = 0.0
        for j in range(k):
            members = points[labels == j]
            if members.size:  # empty clusters keep their centroid
                new = members.mean(axis=0)
                moved = max(moved, float(np.hypot(*(new - centroids[j]))))
                centroids[j] = new
        if moved < _KMEANS_TOL:
            break
    return labels, centroids


def estimate(ps: ParticleSet, k: int = DEFAULT_CLUSTER_COUNT, heading: float = 0.0) -> PoseEstimate:
    """Weighted centroid of the heaviest of k clusters.

    Clustering runs on positions only; the winner is the cluster with the
    greatest weight sum (ties break to the lower cluster index) and the
    returned position is its weighted centroid. k=1 reduces to the global
    weighted mean.
    """
    if not 1 <= k <= ps.n:
        raise ValueError(f"k must be in [1, {ps.n}], got {k}")
    total = ps.weights.sum()
    if total <= 0:
        raise ValueError("particle weights sum to zero")
    if k == 1:
        cx, cy = np.average(ps.positions, axis=0, weights=ps.weights)
        return PoseEstimate(float(cx), float(cy), heading, 1.0)

    labels, _ = _kmeans(ps.positions, k)
    sums = np.zeros(k)
    np.add.at(sums, labels, ps.weights)
    winner = int(np.argmax(sums))  # argmax returns the first (lowest) index on ties
    members = labels == winner
    cx, cy = np.average(ps.positions[members], axis=0, weights=ps.weights[members])
    return PoseEstimate(float(cx), float(cy), heading, float(sums[winner] / total))


def step(
    ps: ParticleSet,
    delta: OdometryDelta,
    compass: float,
    sim: SimilarityMap | None = None,
    *,
    resample_distance_m: float = DEFAULT_RESAMPLE_DISTANCE_M,
    odo_cov=None,
    k: int = DEFAULT_CLUSTER_COUNT,
) -> tuple[ParticleSet, PoseEstimate]:
    """One filter cycle: propagate, weight if evidence arrived, resample if
    due, estimate. With no similarity map (or a uniform one) this degrades to
    dead reckoning with diffusion."""
    if odo_cov is None:
        odo_cov = np.eye(2) * DEFAULT_ODO_COV_STD_M**2
    propagate(ps, delta, compass)
    if sim is not None:
        weight_update(ps, sim)
    if should_resample(ps, resample_distance_m):
        resample(ps, odo_cov)
    return ps, estimate(ps, k, heading=compass)


def write_particles_csv(ps: ParticleSet, path) -> None:
    """Dump x, y, weight per particle (debugging aid)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y", "weight"])
        for i in range(ps.n):
            writer.writerow(
                [repr(float(ps.positions[i, 0])), repr(float(ps.positions[i, 1])), repr(float(ps.weights[i]))]
            )
