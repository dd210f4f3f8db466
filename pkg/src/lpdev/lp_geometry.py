"""l_p norms, the dual-ball radius, the row-law mixed norm and elementary inequality oracles."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from lpdev.ensembles import DistributionSpec, SeededSampler, derive_stream

MC_TRIALS = 100_000
# largest dimension for which Rademacher moments are enumerated exactly
ENUMERATION_MAX_DIM = 16


@dataclass(frozen=True)
class Exponent:
    """p in [1, inf) with its Hoelder conjugate and regime."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (p >= 1 and math.isfinite(p)):
            raise ValueError(f"p must lie in [1, inf), got {self.p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def of(cls, p) -> "Exponent":
        return p if isinstance(p, Exponent) else cls(p)

    @property
    def q(self) -> float:
        return math.inf if self.p == 1 else self.p / (self.p - 1)

    @property
    def beta(self) -> float:
        return 0.5 if self.p <= 2 else 1.0 / self.p

    @property
    def regime(self) -> str:
        if self.p < 2:
            return "low"
        return "boundary" if self.p == 2 else "high"


def _abs_pow(v: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(v)
    if p == 1:
        return a
    if p == 2:
        return a * a
    with np.errstate(divide="ignore"):
        return np.where(a > 0, np.exp(p * np.log(np.where(a > 0, a, 1.0))), 0.0)


def lp_norm(v, p, axis=None):
    """(sum |v_i|^p)^(1/p), optionally along an axis.

    Rescales by the largest magnitude first so huge entries do not overflow.
    """
    p = Exponent.of(p).p
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("lp_norm needs finite input")
    if p == 2:
        out = np.sqrt(np.sum(v * v, axis=axis))
        return float(out) if np.ndim(out) == 0 else out
    top = np.max(np.abs(v), axis=axis, keepdims=True) if v.size else np.zeros(1)
    safe = np.where(top > 0, top, 1.0)
    out = np.squeeze(safe, axis=axis) * np.sum(_abs_pow(v / safe, p), axis=axis) ** (1.0 / p)
    return float(out) if np.ndim(out) == 0 else out


def rad_bq(m: int, p) -> float:
    """Euclidean radius of the unit ball of l_q^m, q the conjugate of p."""
    if m < 1:
        raise ValueError(f"m must be positive, got {m}")
    p = Exponent.of(p).p
    if p <= 2:
        return float(m) ** (1.0 / p - 0.5)
    return 1.0


# ------------------------------------------------------------- mixed norm


@dataclass(frozen=True)
class MixedNormSpec:
    """||x|| = (E |<a, x>|^p)^(1/p) for a row a with i.i.d. entries of ``dist``."""

    dist: DistributionSpec
    p: Exponent
    method: str = "auto"  # auto | closed_form | monte_carlo
    trials: int = MC_TRIALS

    def __post_init__(self):
        object.__setattr__(self, "p", Exponent.of(self.p))
        if self.method not in ("auto", "closed_form", "monte_carlo"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method == "closed_form" and not has_closed_form(self.dist, self.p, None):
            raise ValueError(f"no closed form for E|<a,x>|^p with {self.dist.name}, p={self.p.p}")


def has_closed_form(dist: DistributionSpec, p: Exponent, dim: Optional[int]) -> bool:
    if p.p == 2 or dist.kind == "gaussian":
        return True
    if dist.kind == "rademacher":
        return dim is None or dim <= ENUMERATION_MAX_DIM
    return False


@dataclass(frozen=True)
class NormEstimate:
    value: float
    ci_low: float
    ci_high: float
    method: str


def _sign_patterns(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def _closed_form(dist: DistributionSpec, p: float, x: np.ndarray) -> float:
    if p == 2:
        return float(np.linalg.norm(x))
    if dist.kind == "gaussian":
        return float(np.linalg.norm(x)) * dist.lp_norm(p)
    # Rademacher: exact expectation over all sign patterns
    vals = np.abs(_sign_patterns(x.size) @ x)
    return float(np.mean(_abs_pow(vals, p)) ** (1.0 / p))


def row_lp_norm(spec: MixedNormSpec, x, seed: int = 0, n_boot: int = 200) -> NormEstimate:
    """||A_1 x||_{L^p}: closed form where known, otherwise Monte Carlo with a bootstrap band."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    p = spec.p.p
    use_closed = spec.method == "closed_form" or (
        spec.method == "auto" and has_closed_form(spec.dist, spec.p, x.size)
    )
    if use_closed:
        if not has_closed_form(spec.dist, spec.p, x.size):
            raise ValueError(f"no closed form for {spec.dist.name} at dimension {x.size}")
        v = _closed_form(spec.dist, p, x)
        return NormEstimate(v, v, v, "closed_form")
    if not np.any(x):
        return NormEstimate(0.0, 0.0, 0.0, "monte_carlo")
    sampler = SeededSampler(spec.dist, seed, derive_stream("row_lp_norm"))
    rows = sampler.array((spec.trials, x.size))
    vals = _abs_pow(rows @ x, p)
    value = float(np.mean(vals)) ** (1.0 / p)
    rng = np.random.default_rng(seed)
    means = np.array([vals[rng.integers(0, vals.size, vals.size)].mean() for _ in range(n_boot)])
    lo, hi = np.percentile(means, [2.5, 97.5]) ** (1.0 / p)
    return NormEstimate(value, min(float(lo), value), max(float(hi), value), "monte_carlo")


def mixed_norm(spec: MixedNormSpec, x, seed: int = 0) -> float:
    return row_lp_norm(spec, x, seed=seed).value


def mixed_norms(spec: MixedNormSpec, points, seed: int = 0) -> np.ndarray:
    """Mixed norm of each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    p = spec.p.p
    if spec.method != "monte_carlo" and (p == 2 or spec.dist.kind == "gaussian"):
        return np.linalg.norm(points, axis=1) * (1.0 if p == 2 else spec.dist.lp_norm(p))
    return np.array([row_lp_norm(spec, x, seed=seed, n_boot=0).value for x in points])


def norm_equivalence_ratio(spec: MixedNormSpec, x, seed: int = 0) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    e = float(np.linalg.norm(x))
    if e == 0:
        raise ValueError("norm_equivalence_ratio needs a nonzero vector")
    return row_lp_norm(spec, x, seed=seed, n_boot=0).value / e


@dataclass(frozen=True)
class NormConstants:
    """Fitted constants in C K^-3 ||x||_2 <= ||x|| (p <= 2) and ||x|| <= C' K ||x||_2 (p >= 2)."""

    p: float
    K: float
    C: Optional[float]
    C_prime: Optional[float]
    min_ratio: float
    max_ratio: float
    directions: int


def fit_norm_constants(spec: MixedNormSpec, K: float, directions: int = 100, dim: int = 8, seed: int = 0) -> NormConstants:
    """Fit the lower (p <= 2) and upper (p >= 2) equivalence constants over random directions."""
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((directions, dim))
    ratios = np.array([norm_equivalence_ratio(spec, x, seed=seed + i) for i, x in enumerate(xs)])
    p = spec.p.p
    lo, hi = float(ratios.min()), float(ratios.max())
    return NormConstants(
        p=p,
        K=K,
        C=lo * K**3 if p <= 2 else None,
        C_prime=hi / K if p >= 2 else None,
        min_ratio=lo,
        max_ratio=hi,
        directions=directions,
    )


# ------------------------------------------------------ inequality oracles


def r_triangle_oracle(a: float, b: float, r: float, rtol: float = 1e-12) -> tuple[bool, bool]:
    """Check (a+b)^r vs a^r + b^r and |a^r - b^r| vs |a-b|^r in the regime of r.

    For r <= 1 both are upper bounds on the left side; for r >= 1 the
    inequalities reverse. ``rtol`` absorbs floating-point rounding.
    """
    if a < 0 or b < 0 or not r > 0:
        raise ValueError("need a, b >= 0 and r > 0")
    s_lhs, s_rhs = (a + b) ** r, a**r + b**r
    d_lhs, d_rhs = abs(a**r - b**r), abs(a - b) ** r
    def le(u, v):
        return u <= v + rtol * max(abs(u), abs(v), 1.0)

    if r <= 1:
        return le(s_lhs, s_rhs), le(d_lhs, d_rhs)
    return le(s_rhs, s_lhs), le(d_rhs, d_lhs)


def abp_oracle(a: float, b: float, p, rtol: float = 1e-12) -> bool:
    """a^(p-1)|a-b| <= |a^p - b^p| <= p|a-b| sqrt(a^(2p-2) + b^(2p-2))."""
    p = Exponent.of(p).p
    if a < 0 or b < 0:
        raise ValueError("need a, b >= 0")
    lower = a ** (p - 1) * abs(a - b)
    mid = abs(a**p - b**p)
    upper = p * abs(a - b) * math.sqrt(a ** (2 * p - 2) + b ** (2 * p - 2))
    slack = rtol * max(lower, mid, upper, 1.0)
    return lower <= mid + slack and mid <= upper + slack


def r_triangle_batch(a: np.ndarray, b: np.ndarray, r: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    """Vectorised r_triangle_oracle; True where both inequalities hold."""
    s_lhs, s_rhs = (a + b) ** r, a**r + b**r
    d_lhs, d_rhs = np.abs(a**r - b**r), np.abs(a - b) ** r
    scale = rtol * np.maximum.reduce([np.abs(s_lhs), np.abs(s_rhs), np.abs(d_lhs), np.abs(d_rhs), np.ones_like(a)])
    low = r <= 1
    ok_low = (s_lhs <= s_rhs + scale) & (d_lhs <= d_rhs + scale)
    ok_high = (s_rhs <= s_lhs + scale) & (d_rhs <= d_lhs + scale)
    return np.where(low, ok_low, ok_high)


def abp_batch(a: np.ndarray, b: np.ndarray, p: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
    lower = a ** (p - 1) * np.abs(a - b)
    mid = np.abs(a**p - b**p)
    upper = p * np.abs(a - b) * np.sqrt(a ** (2 * p - 2) + b ** (2 * p - 2))
    slack = rtol * np.maximum.reduce([lower, mid, upper, np.ones_like(a)])
    return (lower <= mid + slack) & (mid <= upper + slack)


# ------------------------------------------------ reverse triangle geometry


@dataclass(frozen=True)
class ReverseTriangle:
    lhs_over_rhs: float
    sin_theta: float
    cos_theta: float
    obtuse: bool
    norm_x: float
    norm_y: float


def reverse_triangle_report(x, y, spec: MixedNormSpec, tolerance: float = 1e-6, seed: int = 0) -> ReverseTriangle:
    """(||x - ybar||_2 + ||y - ybar||_2) / ||x - y||_2 with ybar = y/||y||, and the angle at ybar.

    ``x`` must be on the mixed-norm unit sphere and ``y`` outside it. The
    angle is measured in the plane of ``x - ybar`` and ``y - ybar``; when
    ``x == ybar`` the angle is taken as 0 (ratio 1, sin 0).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("x and y must have the same dimension")
    dxy = float(np.linalg.norm(x - y))
    if dxy == 0:
        raise ValueError("x and y coincide")
    nx = mixed_norm(spec, x, seed=seed)
    ny = mixed_norm(spec, y, seed=seed)
    if abs(nx - 1.0) > tolerance:
        raise ValueError(f"x must have mixed norm 1, got {nx}")
    if not ny > 1.0:
        raise ValueError(f"y must have mixed norm > 1, got {ny}")
    ybar = y / ny
    u = x - ybar
    v = y - ybar
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    ratio = (nu + nv) / dxy
    if nu == 0.0:
        return ReverseTriangle(ratio, 0.0, 1.0, False, nx, ny)
    dot = float(np.dot(u, v))
    # |u x v| via the perpendicular component; stable near theta = 0 and pi
    perp = float(np.linalg.norm(u - (dot / (nv * nv)) * v))
    theta = math.atan2(perp * nv, dot)
    return ReverseTriangle(ratio, math.sin(theta), math.cos(theta), math.cos(theta) <= 0.0, nx, ny)
