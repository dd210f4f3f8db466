"""Deviation processes of ||Ax||_p, their tail envelopes, and Monte Carlo measurement.

Two processes indexed by x are studied:

* ``R_x = ||Ax||_p - m^(1/p) ||A_1 x||_{L^p}`` (centred by the row law),
* ``X_x = ||Ax||_p - E ||Ax||_p`` (centred by the mean).

The universal constants in the envelopes are never assumed; they are fitted
on calibration runs and carried around in :class:`FittedConstants`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.special import gammaln
from scipy.stats import beta as beta_dist

from lpdev.complexity import GammaEstimate, PointSet, gamma
from lpdev.ensembles import (
    DistributionSpec,
    MatrixSample,
    SeededSampler,
    derive_stream,
    map_chunks,
    theoretical_psi2,
)
from lpdev.lp_geometry import Exponent, MixedNormSpec, lp_norm, mixed_norms, rad_bq
from lpdev.orlicz import PsiAlphaEstimate, psi_alpha_norm

SCHEMA_VERSION = 1
MIN_FIT_TRIALS = 1000
CI_LEVEL = 0.99
# entries of A generated per work chunk
_CHUNK_ENTRIES = 1 << 21


@dataclass(frozen=True)
class FittedConstants:
    """Universal constants that the theory leaves unspecified.

    ``C_p_tail``  rate in the l_p-norm concentration tail,
    ``C_p_dev``   multiplier of the deviation envelope (also the C_p of the
                  embedding failure probability),
    ``c_alpha``   Bernstein rate,
    ``c_norm`` / ``c_norm_prime``  norm-equivalence constants C and C'.
    """

    C_p_tail: float = 1.0
    C_p_dev: float = 1.0
    c_alpha: float = 1.0
    c_norm: float = 1.0
    c_norm_prime: float = 1.0
    source: str = "configured"

    def __post_init__(self):
        for name in ("C_p_tail", "C_p_dev", "c_alpha", "c_norm", "c_norm_prime"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.source not in ("fitted", "configured"):
            raise ValueError("source must be 'fitted' or 'configured'")

    def override(self, **values) -> "FittedConstants":
        return replace(self, source="configured", **{k: float(v) for k, v in values.items()})

    def to_dict(self) -> dict:
        return asdict(self)


# -------------------------------------------------------------- tail curves


def clopper_pearson(k, n: int, level: float = CI_LEVEL):
    """One-sided ``level`` lower and upper Clopper-Pearson bounds for k successes in n."""
    k = np.asarray(k, dtype=np.float64)
    a = 1.0 - level
    lo = np.where(k > 0, beta_dist.ppf(a, np.maximum(k, 1e-300), n - k + 1), 0.0)
    hi = np.where(k < n, beta_dist.ppf(1 - a, k + 1, np.maximum(n - k, 1e-300)), 1.0)
    return lo, hi


@dataclass
class TailCurve:
    thresholds: np.ndarray
    empirical_prob: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    theory: Optional[np.ndarray]
    sample_count: int
    level: float = CI_LEVEL

    def non_dominated(self) -> np.ndarray:
        """Threshold indices where the envelope sits below the one-sided lower bound."""
        if self.theory is None:
            return np.array([], dtype=int)
        return np.flatnonzero(self.theory < self.ci_low)

    def rows(self):
        theory = self.theory if self.theory is not None else [math.nan] * len(self.thresholds)
        for row in zip(self.thresholds, self.empirical_prob, self.ci_low, self.ci_high, theory):
            yield tuple(float(v) for v in row)

    def to_dict(self) -> dict:
        return {
            "thresholds": [float(v) for v in self.thresholds],
            "empirical_prob": [float(v) for v in self.empirical_prob],
            "ci_low": [float(v) for v in self.ci_low],
            "ci_high": [float(v) for v in self.ci_high],
            "theory": None if self.theory is None else [float(v) for v in self.theory],
            "sample_count": self.sample_count,
            "level": self.level,
        }


def geometric_thresholds(samples, count: int = 16) -> np.ndarray:
    """``count`` geometric points spanning [median, max] of the samples."""
    s = np.asarray(samples, dtype=np.float64).ravel()
    top = float(s.max())
    if top <= 0:
        return np.zeros(1)
    lo = float(np.median(s))
    if lo <= 0:
        pos = s[s > 0]
        lo = float(pos.min())
    if lo >= top:
        return np.array([top])
    return np.geomspace(lo, top, count)


def empirical_tail(samples, thresholds=None, theory_fn: Optional[Callable] = None, level: float = CI_LEVEL) -> TailCurve:
    """Exceedance frequencies P(Z >= s) with one-sided Clopper-Pearson bounds."""
    z = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if z.size == 0:
        raise ValueError("empirical_tail needs samples")
    th = geometric_thresholds(z) if thresholds is None else np.sort(np.asarray(thresholds, dtype=np.float64).ravel())
    counts = z.size - np.searchsorted(z, th, side="left")
    lo, hi = clopper_pearson(counts, z.size, level)
    theory = None if theory_fn is None else np.asarray([theory_fn(s) for s in th], dtype=np.float64)
    return TailCurve(th, counts / z.size, np.asarray(lo), np.asarray(hi), theory, int(z.size), level)


# ------------------------------------------------------------- processes


def _as_array(A) -> np.ndarray:
    return A.entries if isinstance(A, MatrixSample) else np.asarray(A, dtype=np.float64)


def process_R(A, x, p, rowlp) -> float:
    """||Ax||_p - m^(1/p) * rowlp, rowlp being ||A_1 x||_{L^p}."""
    a = _as_array(A)
    x = np.asarray(x, dtype=np.float64).ravel()
    if a.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: A is {a.shape}, x has {x.size}")
    p = Exponent.of(p).p
    value = getattr(rowlp, "value", rowlp)
    return lp_norm(a @ x, p) - a.shape[0] ** (1.0 / p) * value


def process_X(A, x, p, mean_norm: float) -> float:
    """||Ax||_p - E||Ax||_p with the mean supplied by the caller."""
    a = _as_array(A)
    x = np.asarray(x, dtype=np.float64).ravel()
    if a.shape[1] != x.size:
        raise ValueError(f"dimension mismatch: A is {a.shape}, x has {x.size}")
    return lp_norm(a @ x, Exponent.of(p).p) - mean_norm


def chi_mean(m: int) -> float:
    """E||g||_2 for g ~ N(0, I_m)."""
    return math.sqrt(2.0) * math.exp(gammaln((m + 1) / 2.0) - gammaln(m / 2.0))


def _pnorm_rows(y: np.ndarray, p: float, axis: int) -> np.ndarray:
    a = np.abs(y)
    if p == 1:
        return a.sum(axis=axis)
    if p == 2:
        return np.sqrt((a * a).sum(axis=axis))
    if p == 4:
        a2 = a * a
        return np.sqrt(np.sqrt((a2 * a2).sum(axis=axis)))
    return (a**p).sum(axis=axis) ** (1.0 / p)


def batch_norms(sampler: SeededSampler, m: int, pts: np.ndarray, p: float, trials: int, threads: int = 1) -> np.ndarray:
    """(trials, N) array of ||A_t x||_p; A_t is block ``t`` (m*n entries) of the stream."""
    pts = np.atleast_2d(pts)
    n = pts.shape[1]
    per = m * n
    step = max(1, _CHUNK_ENTRIES // max(per, m * pts.shape[0]))
    chunks = [(s, min(s + step, trials)) for s in range(0, trials, step)]

    def work(chunk):
        s, e = chunk
        block = sampler.array((e - s, m, n), offset=s * per)
        return _pnorm_rows(block @ pts.T, p, axis=1)

    return np.concatenate(map_chunks(work, chunks, threads), axis=0)


def mean_norms(
    spec: DistributionSpec, pts, m: int, p, trials: int, seed: int, threads: int = 1
) -> tuple[np.ndarray, str]:
    """E||Ax||_p per point: exact chi mean for Gaussian p=2, else an independent Monte Carlo pre-pass."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    p = Exponent.of(p).p
    if spec.kind == "gaussian" and p == 2:
        return np.linalg.norm(pts, axis=1) * chi_mean(m), "chi_closed_form"
    sampler = SeededSampler(spec, seed, derive_stream("mean_prepass", m, p))
    norms = batch_norms(sampler, m, pts, p, trials, threads)
    return norms.mean(axis=0), f"monte_carlo({trials})"


def vector_concentration_tail(s, p, m: int, K: float, constants: FittedConstants):
    """Envelope for P(| ||X^(m)||_p - m^(1/p) | >= s)."""
    p = Exponent.of(p).p
    s = np.asarray(s, dtype=np.float64)
    scale = K ** (2 * p) * (m ** (2.0 / p - 1.0) if p < 2 else 1.0)
    # s = 0 stays at 1 even when the fitted constant is infinite
    expo = np.zeros(s.shape)
    pos = s > 0
    expo[pos] = constants.C_p_tail * s[pos] ** 2 / scale
    out = np.minimum(1.0, 2.0 * np.exp(-expo))
    return float(out) if out.ndim == 0 else out


def bernstein_bound(t, alpha: float, K: float, a, c_alpha: float):
    """2 exp(-c min{t^2/(K^2 ||a||_2^2), t^alpha/(K^alpha max|a_i|^alpha)}), clipped to 1."""
    if not (0 < alpha <= 1):
        raise ValueError(f"Bernstein bound covers 0 < alpha <= 1, got {alpha}")
    a = np.asarray(a, dtype=np.float64).ravel()
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    gauss = t * t / (K * K * float(np.dot(a, a)))
    heavy = t**alpha / (K**alpha * float(np.max(np.abs(a))) ** alpha)
    out = np.minimum(1.0, 2.0 * np.exp(-c_alpha * np.minimum(gauss, heavy)))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------- l_p concentration


def vector_norm_deviations(
    spec: DistributionSpec, p, m: int, trials: int, seed: int, threads: int = 1
) -> np.ndarray:
    """Signed samples of ||X^(m)||_p - m^(1/p) with X_i = A_i / ||A_i||_{L^p}."""
    p = Exponent.of(p).p
    sampler = SeededSampler(spec, seed, derive_stream("vector", m))
    scale = 1.0 / spec.lp_norm(p)
    step = max(1, _CHUNK_ENTRIES // m)
    chunks = [(s, min(s + step, trials)) for s in range(0, trials, step)]

    def work(chunk):
        s, e = chunk
        block = sampler.array((e - s, m), offset=s * m)
        return _pnorm_rows(block * scale, p, axis=1)

    norms = np.concatenate(map_chunks(work, chunks, threads))
    return norms - m ** (1.0 / p)


def tail_scale(p, m: int, K: float) -> float:
    p = Exponent.of(p).p
    return K ** (2 * p) * (m ** (2.0 / p - 1.0) if p < 2 else 1.0)


def fit_tail_constant(samples, p, m: int, K: float, thresholds=None, level: float = CI_LEVEL) -> float:
    """Largest C_p making the concentration envelope cover the upper confidence bound at every threshold."""
    z = np.abs(np.asarray(samples, dtype=np.float64))
    curve = empirical_tail(z, thresholds, level=level)
    scale = tail_scale(p, m, K)
    s = curve.thresholds
    ok = s > 0
    if not np.any(ok):
        return math.inf
    cands = scale * np.log(2.0 / curve.ci_high[ok]) / (s[ok] ** 2)
    return float(cands.min())


def concentration_tail(samples, p, m: int, K: float, constants: FittedConstants, thresholds=None) -> TailCurve:
    z = np.abs(np.asarray(samples, dtype=np.float64))
    return empirical_tail(z, thresholds, lambda s: vector_concentration_tail(s, p, m, K, constants))


# ----------------------------------------------------- sup deviations


@dataclass
class DeviationReport:
    process: str
    spec: str
    p: float
    m: int
    n_points: int
    trials: int
    sup_samples: np.ndarray
    fitted_psi2: Optional[PsiAlphaEstimate]
    K: float
    rad: float
    gamma: GammaEstimate
    envelope: float
    ratio: float
    envelope_exponent: float
    centering: str = ""
    notes: list = field(default_factory=list)

    def to_dict(self, include_samples: bool = False) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "process": self.process,
            "spec": self.spec,
            "p": self.p,
            "m": self.m,
            "n_points": self.n_points,
            "trials": self.trials,
            "fitted_psi2": None if self.fitted_psi2 is None else self.fitted_psi2.to_dict(),
            "K": self.K,
            "rad": self.rad,
            "gamma": asdict(self.gamma),
            "envelope": self.envelope,
            "envelope_exponent": self.envelope_exponent,
            "ratio": self.ratio,
            "centering": self.centering,
            "sup_mean": float(np.mean(self.sup_samples)),
            "sup_max": float(np.max(self.sup_samples)),
            "notes": list(self.notes),
        }
        if include_samples:
            out["sup_samples"] = [float(v) for v in self.sup_samples]
        return out


def entry_psi2(spec: DistributionSpec, seed: int = 0) -> float:
    k = theoretical_psi2(spec)
    if k is None:
        k = psi_alpha_norm(SeededSampler(spec, seed, derive_stream("psi2")).array(10**6), 2.0, n_boot=0).value
    return k


def sup_deviation_trials(
    spec: DistributionSpec,
    T: PointSet,
    m: int,
    p,
    trials: int,
    seed: int,
    process: str = "R",
    threads: int = 1,
    gamma_trials: int = 10_000,
    prepass_factor: int = 10,
    K: Optional[float] = None,
) -> DeviationReport:
    """Per-trial sup_{x in T} |process_x| with a fitted psi_2 and the envelope
    K^(4p+4) rad(B_q^m) gamma(T); the ratio fitted/envelope estimates C_p.
    """
    if process not in ("R", "X"):
        raise ValueError("process must be 'R' or 'X'")
    p = Exponent.of(p).p
    pts = T.points
    K = entry_psi2(spec, seed) if K is None else K
    sampler = SeededSampler(spec, seed, derive_stream("deviation", m))
    norms = batch_norms(sampler, m, pts, p, trials, threads)
    if process == "R":
        centre = m ** (1.0 / p) * mixed_norms(MixedNormSpec(spec, p), pts, seed=seed)
        centering = "row_lp_norm"
    else:
        centre, centering = mean_norms(spec, pts, m, p, prepass_factor * trials, seed, threads)
    sups = np.max(np.abs(norms - centre[None, :]), axis=1)

    notes = []
    fitted = None
    if trials >= MIN_FIT_TRIALS:
        fitted = psi_alpha_norm(sups, 2.0, seed=seed)
    else:
        notes.append(f"psi_2 fit refused: {trials} < {MIN_FIT_TRIALS} trials")
    g = gamma(T, trials=gamma_trials, seed=seed)
    rad = rad_bq(m, p)
    expo = 4 * p + 4
    envelope = K**expo * rad * g.value
    if fitted is None:
        ratio = math.nan
    elif envelope > 0:
        ratio = fitted.value / envelope
    else:
        ratio = 0.0
    return DeviationReport(
        process, spec.name, p, m, len(T), trials, sups, fitted, K, rad, g, envelope, ratio, expo, centering, notes
    )


@dataclass
class IncrementReport:
    psi: PsiAlphaEstimate
    envelope: float
    ratio: float
    envelope_exponent: float
    case: str
    distance: float


def increment_psi2(
    spec: DistributionSpec,
    x,
    y,
    m: int,
    p,
    trials: int,
    seed: int,
    process: str = "R",
    threads: int = 1,
    K: Optional[float] = None,
) -> IncrementReport:
    """psi_2 of R_x - R_y (or X_x - X_y) over coupled matrix draws, against
    K^e rad(B_q^m) ||x - y||_2 with e = 4p when y = 0 or both points are on
    the mixed-norm unit sphere, else e = 4p + 4.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    dist = float(np.linalg.norm(x - y))
    if dist == 0:
        raise ValueError("increment needs x != y")
    p = Exponent.of(p).p
    K = entry_psi2(spec, seed) if K is None else K
    pts = np.vstack([x, y])
    norms = batch_norms(SeededSampler(spec, seed, derive_stream("deviation", m)), m, pts, p, trials, threads)
    mixed = mixed_norms(MixedNormSpec(spec, p), pts, seed=seed)
    if process == "R":
        centre = m ** (1.0 / p) * mixed
    else:
        centre, _ = mean_norms(spec, pts, m, p, 10 * trials, seed, threads)
    diff = (norms[:, 0] - centre[0]) - (norms[:, 1] - centre[1])
    psi = psi_alpha_norm(diff, 2.0, seed=seed)
    if not np.any(y) or not np.any(x):
        case, expo = "single_point", 4 * p
    elif np.allclose(mixed, 1.0, rtol=1e-9):
        case, expo = "unit_sphere", 4 * p
    else:
        case, expo = "general", 4 * p + 4
    envelope = K**expo * rad_bq(m, p) * dist
    return IncrementReport(psi, envelope, psi.value / envelope, expo, case, dist)


# --------------------------------------------------------------- Bernstein


def power_summands(spec: DistributionSpec, p: float, count: int, seed: int, stream_label="bernstein") -> np.ndarray:
    """Samples of |X|^p / E|X|^p - 1 (mean zero), shape (count,)."""
    x = SeededSampler(spec, seed, derive_stream(stream_label, p)).array(count)
    return np.abs(x) ** p / spec.lp_moment(p) - 1.0


def weighted_sums(spec: DistributionSpec, p: float, weights, trials: int, seed: int, label="sums") -> np.ndarray:
    """Samples of sum_i a_i Y_i with Y_i = |X_i|^p/E|X|^p - 1."""
    a = np.asarray(weights, dtype=np.float64).ravel()
    sampler = SeededSampler(spec, seed, derive_stream(label, p, a.size))
    step = max(1, _CHUNK_ENTRIES // a.size)
    out = []
    for s in range(0, trials, step):
        e = min(s + step, trials)
        block = sampler.array((e - s, a.size), offset=s * a.size)
        out.append((np.abs(block) ** p / spec.lp_moment(p) - 1.0) @ a)
    return np.concatenate(out)


def fit_bernstein_constant(sums, alpha: float, K: float, weights, thresholds=None, level: float = CI_LEVEL) -> float:
    """Largest c_alpha with the Bernstein envelope above the upper confidence bound everywhere."""
    a = np.asarray(weights, dtype=np.float64).ravel()
    curve = empirical_tail(np.abs(sums), thresholds, level=level)
    t = curve.thresholds
    ok = t > 0
    gauss = t[ok] ** 2 / (K * K * float(np.dot(a, a)))
    heavy = t[ok] ** alpha / (K**alpha * float(np.max(np.abs(a))) ** alpha)
    return float(np.min(np.log(2.0 / curve.ci_high[ok]) / np.minimum(gauss, heavy)))
