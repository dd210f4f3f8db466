"""Finite point sets and Monte Carlo Gaussian complexity."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from lpdev.ensembles import DistributionSpec, SeededSampler, derive_stream

# Cap on N * trials inner products per gamma() call.
MAX_WORK = 2_000_000_000
_BATCH = 4096
_Z99 = 2.5758293035489004


@dataclass
class PointSet:
    points: np.ndarray
    labels: Optional[list] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("a point set needs at least one point of positive dimension")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        self.points = pts
        if self.labels is not None and len(self.labels) != pts.shape[0]:
            raise ValueError("labels must match the number of points")

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def scaled(self, c: float) -> "PointSet":
        return PointSet(c * self.points, self.labels)


def read_points_csv(path) -> PointSet:
    """One point per row; a non-numeric first column is taken as a label.

    A header row is allowed and skipped when it is not numeric.
    """
    path = Path(path)
    rows = []
    labels = []
    with path.open(newline="") as fh:
        for rec in csv.reader(fh):
            if not rec or rec[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in rec])
                labels.append(None)
            except ValueError:
                try:
                    rows.append([float(v) for v in rec[1:]])
                    labels.append(rec[0])
                except ValueError:
                    if rows:
                        raise ValueError(f"{path}: malformed row {rec!r}") from None
                    continue  # header
    if not rows:
        raise ValueError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have differing dimensions")
    has_labels = any(lab is not None for lab in labels)
    return PointSet(np.array(rows), labels if has_labels else None)


def write_points_csv(path, points: PointSet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        cols = [f"x{i}" for i in range(points.dim)]
        w.writerow((["label"] if points.labels else []) + cols)
        for i, row in enumerate(points.points):
            vals = [repr(float(v)) for v in row]
            w.writerow(([points.labels[i]] if points.labels else []) + vals)


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    ci_low: float
    ci_high: float
    trials: int
    sd: float = 0.0


def sup_abs_inner(g: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """max_x |<g_t, x>| for each row g_t."""
    return np.max(np.abs(g @ pts.T), axis=1)


def gamma(T: PointSet, trials: int = 10_000, seed: int = 0, stream: Optional[int] = None) -> GammaEstimate:
    """E sup_{x in T} |<g, x>|, g ~ N(0, I_n), with a 99% CLT band.

    Draw ``t`` is row ``t`` of one counter-based Gaussian stream, so two sets
    of the same dimension evaluated with the same seed see the same ``g``.
    """
    if T is None or len(T) == 0:
        raise ValueError("gamma needs a nonempty point set")
    if trials < 100:
        raise ValueError("gamma needs at least 100 trials")
    if len(T) * trials > MAX_WORK:
        raise MemoryError(f"N*trials = {len(T) * trials} exceeds work budget {MAX_WORK}")
    sampler = SeededSampler(DistributionSpec.gaussian(), seed, derive_stream("gamma") if stream is None else stream)
    n = T.dim
    sups = np.empty(trials)
    for start in range(0, trials, _BATCH):
        stop = min(start + _BATCH, trials)
        g = sampler.draw(start * n, (stop - start) * n).reshape(stop - start, n)
        sups[start:stop] = sup_abs_inner(g, T.points)
    mean = math.fsum(sups) / trials
    sd = float(np.std(sups, ddof=1)) if trials > 1 else 0.0
    half = _Z99 * sd / math.sqrt(trials)
    return GammaEstimate(mean, max(0.0, mean - half), mean + half, trials, sd)


def normalized_difference_set(
    T: PointSet,
    norm: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    tol: float = 1e-12,
) -> tuple[PointSet, int]:
    """Directions (x - y)/||x - y|| over unordered pairs, deduplicated up to sign.

    ``norm`` maps an (k, n) array of differences to (k,) norms; Euclidean by
    default. Returns the direction set and the number of skipped coincident
    pairs.
    """
    if len(T) < 2:
        raise ValueError("need at least two points")
    i, j = np.triu_indices(len(T), k=1)
    diffs = T.points[i] - T.points[j]
    euclid = np.linalg.norm(diffs, axis=1)
    keep = euclid > 0
    skipped = int(np.count_nonzero(~keep))
    diffs = diffs[keep]
    if diffs.shape[0] == 0:
        raise ValueError("all points coincide")
    scale = np.linalg.norm(diffs, axis=1) if norm is None else np.asarray(norm(diffs), dtype=np.float64)
    dirs = diffs / scale[:, None]
    # canonical sign: first nonzero coordinate positive
    lead = np.argmax(np.abs(dirs) > tol, axis=1)
    sign = np.sign(dirs[np.arange(len(dirs)), lead])
    sign[sign == 0] = 1.0
    dirs = dirs * sign[:, None]
    tree = cKDTree(dirs)
    dup = np.zeros(len(dirs), dtype=bool)
    for a, b in sorted(tree.query_pairs(r=tol)):
        if not dup[a]:
            dup[b] = True
    return PointSet(dirs[~dup]), skipped


def gamma_log_bound(N: int, d_p: float, log: Callable[[float], float] = math.log) -> float:
    """(1/d_p) sqrt(log N); natural log unless another ``log`` is supplied."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if not d_p > 0:
        raise ValueError("d_p must be positive")
    return math.sqrt(log(N)) / d_p


def unit_sphere_points(N: int, n: int, seed: int = 0) -> PointSet:
    """N points drawn uniformly on the Euclidean unit sphere of R^n (seeded)."""
    g = SeededSampler(DistributionSpec.gaussian(), seed, derive_stream("sphere", N, n)).array((N, n))
    return PointSet(g / np.linalg.norm(g, axis=1, keepdims=True))
