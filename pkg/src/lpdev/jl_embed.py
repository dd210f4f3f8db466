"""Random embeddings l_2^n -> l_p^m: dimension planning, execution and distortion."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np

from lpdev.complexity import PointSet, normalized_difference_set
from lpdev.deviation import FittedConstants, batch_norms, entry_psi2
from lpdev.ensembles import PSI2_FLOOR, DistributionSpec, MatrixSample, SeededSampler, derive_stream
from lpdev.lp_geometry import Exponent, MixedNormSpec, fit_norm_constants, mixed_norms
from lpdev.orlicz import psi_alpha_norm

DEFAULT_MULTIPLIER = 2.0
# K values quoted to four or five digits sit just under the exact floor
FLOOR_TOLERANCE = 0.01


def dp_constants(p, K: float, fitted: FittedConstants, check_floor: bool = True) -> tuple[float, float]:
    """(d_p, D_p): (C K^-3, 1) for p < 2, (1, 1) at p = 2, (1, C' K) for p > 2.

    ``check_floor=False`` admits a nominal K below sqrt(1/ln 2), as used when
    planning with configured default constants.
    """
    p = Exponent.of(p)
    if not K > 0:
        raise ValueError(f"K must be positive, got {K}")
    if check_floor and K < PSI2_FLOOR - FLOOR_TOLERANCE:
        raise ValueError(f"K={K} is below sqrt(1/ln 2); impossible for a unit-variance law")
    if p.regime == "low":
        return fitted.c_norm * K**-3, 1.0
    if p.regime == "boundary":
        return 1.0, 1.0
    return 1.0, fitted.c_norm_prime * K


@dataclass(frozen=True)
class EmbeddingPlan:
    p: float
    K: float
    N: int
    epsilon: float
    target_failure: float
    constants: FittedConstants
    m: int
    d_p: float
    D_p: float
    beta: float
    log_base: str = "e"

    def failure_bound(self, m: Optional[int] = None) -> float:
        m = self.m if m is None else m
        return failure_probability(m, self.epsilon, self.p, self.K, self.N, self.d_p, self.constants.C_p_dev)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["constants"] = self.constants.to_dict()
        return out


def failure_probability(m, epsilon, p, K, N, d_p, C_p, log: Callable[[float], float] = math.log) -> float:
    beta = Exponent.of(p).beta
    p = Exponent.of(p).p
    denom = d_p**-2 * C_p * K ** (8 * p + 8) * log(N)
    return min(1.0, 2.0 * math.exp(-(epsilon**2) * m ** (2 * beta) / denom))


def plan_dimension(
    N: int,
    epsilon: float,
    target_failure: float,
    p,
    K: float,
    fitted: FittedConstants,
    log: Callable[[float], float] = math.log,
) -> EmbeddingPlan:
    """Smallest m with 2 exp(-eps^2 m^(2 beta) / (d_p^-2 C_p K^(8p+8) log N)) <= target_failure."""
    if N < 2:
        raise ValueError("N must be at least 2")
    if not (0 < epsilon < 1) or not (0 < target_failure < 1):
        raise ValueError("epsilon and target_failure must lie in (0, 1)")
    ex = Exponent.of(p)
    d_p, D_p = dp_constants(ex, K, fitted, check_floor=False)
    base = d_p**-2 * fitted.C_p_dev * K ** (8 * ex.p + 8) * log(N) * math.log(2.0 / target_failure) / epsilon**2
    m = max(1, math.ceil(base ** (1.0 / (2 * ex.beta)) * (1 - 1e-12)))
    # guard the ceiling against rounding in the power
    while m > 1 and failure_probability(m - 1, epsilon, ex, K, N, d_p, fitted.C_p_dev, log) <= target_failure:
        m -= 1
    while failure_probability(m, epsilon, ex, K, N, d_p, fitted.C_p_dev, log) > target_failure:
        m += 1
    return EmbeddingPlan(
        ex.p, K, N, epsilon, target_failure, fitted, m, d_p, D_p, ex.beta, "e" if log is math.log else log.__name__
    )


def embed(A, T: PointSet, p) -> PointSet:
    """x -> m^(-1/p) A x for every point of T."""
    a = A.entries if isinstance(A, MatrixSample) else np.asarray(A, dtype=np.float64)
    if a.shape[1] != T.dim:
        raise ValueError(f"dimension mismatch: A is {a.shape}, points have dimension {T.dim}")
    p = Exponent.of(p).p
    return PointSet((T.points @ a.T) * a.shape[0] ** (-1.0 / p), T.labels)


@dataclass
class DistortionReport:
    ratios: np.ndarray
    min_ratio: float
    max_ratio: float
    violations: int
    pair_count: int
    skipped_pairs: int
    lower: float
    upper: float

    def to_dict(self, include_ratios: bool = False) -> dict:
        out = {
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "violations": self.violations,
            "pair_count": self.pair_count,
            "skipped_pairs": self.skipped_pairs,
            "lower": self.lower,
            "upper": self.upper,
        }
        if include_ratios:
            out["ratios"] = [float(r) for r in self.ratios]
        return out


def _pnorm(y: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(y)
    if p == 1:
        return a.sum(axis=1)
    if p == 2:
        return np.sqrt((a * a).sum(axis=1))
    return (a**p).sum(axis=1) ** (1.0 / p)


def pair_ratios(T: PointSet, embedded: PointSet, p) -> tuple[np.ndarray, int]:
    """||e_x - e_y||_p / ||x - y||_2 over unordered pairs; coincident pairs skipped."""
    if len(T) != len(embedded):
        raise ValueError("point set and embedding differ in size")
    p = Exponent.of(p).p
    if len(T) < 2:
        return np.zeros(0), 0
    i, j = np.triu_indices(len(T), k=1)
    src = np.linalg.norm(T.points[i] - T.points[j], axis=1)
    keep = src > 0
    i, j, src = i[keep], j[keep], src[keep]
    out = np.empty(i.size)
    step = max(1, (1 << 22) // embedded.dim)
    for s in range(0, i.size, step):
        e = min(s + step, i.size)
        out[s:e] = _pnorm(embedded.points[i[s:e]] - embedded.points[j[s:e]], p) / src[s:e]
    return out, int(np.count_nonzero(~keep))


def distortion_report(T: PointSet, embedded: PointSet, p, plan: EmbeddingPlan) -> DistortionReport:
    ratios, skipped = pair_ratios(T, embedded, p)
    lower = plan.d_p * (1 - plan.epsilon)
    upper = plan.D_p * (1 + plan.epsilon)
    viol = int(np.count_nonzero((ratios < lower) | (ratios > upper)))
    if ratios.size == 0:
        return DistortionReport(ratios, math.nan, math.nan, 0, 0, skipped, lower, upper)
    return DistortionReport(ratios, float(ratios.min()), float(ratios.max()), viol, int(ratios.size), skipped, lower, upper)


# ------------------------------------------------------------ calibration


@dataclass(frozen=True)
class JLCalibration:
    constants: FittedConstants
    K: float
    raw_C_p: float
    multiplier: float
    m_grid: tuple
    psi_by_m: tuple


def calibrate_constants(
    spec: DistributionSpec,
    T: PointSet,
    p,
    seed: int,
    m_grid=(32, 128, 512),
    trials: int = 1000,
    multiplier: float = DEFAULT_MULTIPLIER,
    threads: int = 1,
) -> JLCalibration:
    """Fit C, C' and the embedding C_p for (spec, p) from held-out draws.

    For each calibration m the psi_2 norm of
    ``sup_z |m^(-1/p) ||A z||_p / ||z|| - 1|`` over the mixed-norm direction
    set S is fitted and converted to the C_p in
    ``psi <= (1/d_p) sqrt(C_p K^(8p+8)) m^(-beta) sqrt(log N)``.
    The largest value over the grid, times ``multiplier``, is returned.
    """
    ex = Exponent.of(p)
    K = entry_psi2(spec, seed)
    mixed = MixedNormSpec(spec, ex)
    nc = fit_norm_constants(mixed, K, seed=seed)
    base = FittedConstants(
        c_norm=nc.C if nc.C is not None else 1.0,
        c_norm_prime=nc.C_prime if nc.C_prime is not None else 1.0,
    )
    d_p, _ = dp_constants(ex, K, base)
    S, _ = normalized_difference_set(T, lambda d: mixed_norms(mixed, d, seed=seed))
    N = len(T)
    raw = []
    psis = []
    for m in m_grid:
        sampler = SeededSampler(spec, seed, derive_stream("jl_calibration", m))
        norms = batch_norms(sampler, m, S.points, ex.p, trials, threads)
        sups = np.max(np.abs(norms * m ** (-1.0 / ex.p) - 1.0), axis=1)
        psi = psi_alpha_norm(sups, 2.0, n_boot=0).value
        psis.append(psi)
        raw.append((psi * d_p * m**ex.beta) ** 2 / (K ** (8 * ex.p + 8) * math.log(N)))
    raw_c = max(raw)
    constants = FittedConstants(
        C_p_dev=multiplier * raw_c,
        c_norm=base.c_norm,
        c_norm_prime=base.c_norm_prime,
        source="fitted",
    )
    return JLCalibration(constants, K, raw_c, multiplier, tuple(m_grid), tuple(psis))
