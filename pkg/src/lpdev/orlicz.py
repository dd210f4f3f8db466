"""psi_alpha Orlicz norms: empirical estimation and the equivalence constants.

The psi_alpha norm of X is ``inf{t > 0 : E exp(|X|^alpha / t^alpha) <= 2}``.
For an empirical sample the expectation becomes a sample mean, which is
monotone decreasing in ``t``, so the infimum is located by bisection.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

LN2 = math.log(2.0)

# Largest c with Gamma(1+x) <= (x/c)^x on x >= 1 (Gamma(2) = 1 forces c <= 1).
STIRLING_C = 1.0

MIN_BOOTSTRAP_SAMPLES = 50


class DomainError(ValueError):
    """Arguments are outside the range where a bound is asserted."""


def check_stirling_constant(c: float = STIRLING_C, lo: float = 1.0, hi: float = 100.0, points: int = 400) -> bool:
    """Verify Gamma(1+x) <= (x/c)^x on a log grid of [lo, hi]."""
    x = np.geomspace(lo, hi, points)
    return bool(np.all(gammaln(1.0 + x) <= x * np.log(x / c) + 1e-12))


if not check_stirling_constant():  # pragma: no cover - guards edits to STIRLING_C
    raise RuntimeError(f"STIRLING_C={STIRLING_C} violates Gamma(1+x) <= (x/c)^x")


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ValueError(f"alpha must be positive and finite, got {alpha}")
    return alpha


@dataclass(frozen=True)
class PsiAlphaEstimate:
    alpha: float
    value: float
    ci_low: float
    ci_high: float
    sample_count: int

    def to_dict(self) -> dict:
        return asdict(self)


def _log_mean_exp(b: np.ndarray, s: float) -> float:
    # b is scaled into [0, 1], so exp(s*b) cannot overflow for the s used here
    z = s * b
    top = z.max()
    return top + math.log(np.mean(np.exp(z - top)))


def _bisect_scale(b: np.ndarray, alpha: float, tolerance: float) -> float:
    """Smallest u (to relative ``tolerance``) with mean exp(b / u^alpha) <= 2, b in [0, 1]."""
    n = b.size
    # u_hi: every term <= 2; u_lo: the largest term alone has mean contribution 2
    lo = math.log(1.0 / math.log(2.0 * n) ** (1.0 / alpha)) if n > 1 else None
    hi = math.log(1.0 / LN2 ** (1.0 / alpha))
    if lo is None:
        return math.exp(hi)
    log_tol = math.log1p(tolerance)
    while hi - lo > log_tol:
        mid = 0.5 * (lo + hi)
        if _log_mean_exp(b, math.exp(-alpha * mid)) <= LN2:
            hi = mid
        else:
            lo = mid
    return math.exp(hi)


def _newton_rate(b: np.ndarray, s0: float) -> float:
    """Root in s of log mean exp(s*b) = ln 2, by Newton from s0 (convex, increasing)."""
    if b.max() <= 0.0:
        return math.inf
    s = s0
    for _ in range(60):
        z = s * b
        top = z.max()
        e = np.exp(z - top)
        me = e.mean()
        f = top + math.log(me) - LN2
        fp = float(np.dot(b, e)) / (b.size * me)
        step = f / fp
        s_new = s - step
        if s_new <= 0:
            s_new = 0.5 * s
        if abs(s_new - s) <= 1e-12 * s:
            return s_new
        s = s_new
    return s


def psi_alpha_norm(
    samples,
    alpha: float,
    tolerance: float = 1e-6,
    n_boot: int = 200,
    seed: int = 0,
    ci_level: float = 0.95,
) -> PsiAlphaEstimate:
    """Empirical psi_alpha norm with a percentile-bootstrap band.

    The returned value ``t`` satisfies ``mean(exp(|x|^a / t^a)) <= 2`` while
    ``t * (1 - tolerance)`` does not (unless every sample is zero).

    Samples are rescaled by their largest magnitude before the search, so a
    single extreme value gives a large finite norm instead of overflowing.
    Below 50 samples, or with ``n_boot=0``, the band is ``[0, inf]``.
    """
    alpha = _check_alpha(alpha)
    if not tolerance > 0:
        raise ValueError("tolerance must be positive")
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    if x.size == 0:
        raise ValueError("psi_alpha_norm needs at least one sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    top = float(x.max())
    n = int(x.size)
    if top == 0.0:
        return PsiAlphaEstimate(alpha, 0.0, 0.0, 0.0, n)

    b = (x / top) ** alpha
    value = top * _bisect_scale(b, alpha, tolerance)

    if n < MIN_BOOTSTRAP_SAMPLES or n_boot <= 0:
        return PsiAlphaEstimate(alpha, value, 0.0, math.inf, n)

    rng = np.random.default_rng(seed)
    s0 = (top / value) ** alpha
    boot = np.empty(n_boot)
    for i in range(n_boot):
        s = _newton_rate(b[rng.integers(0, n, n)], s0)
        boot[i] = 0.0 if math.isinf(s) else top * s ** (-1.0 / alpha)
    tail = 50.0 * (1.0 - ci_level)
    lo, hi = np.percentile(boot, [tail, 100.0 - tail])
    return PsiAlphaEstimate(alpha, value, min(float(lo), value), max(float(hi), value), n)


# ------------------------------------------------------ equivalence constants


@dataclass(frozen=True)
class EquivalenceConstants:
    alpha: float
    c_stirling: float
    C2: float
    C3: float
    C7: float
    K1: float
    K2: float
    K3: float
    K4: float
    psi_from_K4: float
    round_trip_factor: float

    def to_dict(self) -> dict:
        return asdict(self)


def stirling_constants(alpha: float, c: float = STIRLING_C) -> tuple[float, float, float]:
    """(C2, C3, C7) for exponent alpha."""
    alpha = _check_alpha(alpha)
    c2 = (2.0 / (c * alpha)) ** (1.0 / alpha)
    c3 = (2.0 * math.e * alpha) ** (1.0 / alpha)
    c7 = max(1.0, c3, c3 * c2)
    return c2, c3, c7


def equivalence_chain(k1: float, alpha: float, c: float = STIRLING_C) -> EquivalenceConstants:
    """Propagate K1 (MGF form) through tails, moments and MGF-of-|X|^alpha.

    ``psi_from_K4`` is the stated return leg ``(4ce)^(-1/alpha) * K4``;
    ``round_trip_factor`` is psi_from_K4 / K1 when K1 > 0, and the symbolic
    factor ``(4ce)^(-1/alpha) * C3 * C2`` otherwise.
    """
    if k1 < 0 or not math.isfinite(k1):
        raise ValueError(f"k1 must be finite and nonnegative, got {k1}")
    c2, c3, c7 = stirling_constants(alpha, c)
    k2 = k1
    k3 = c2 * k2
    k4 = c3 * k3
    back = (4.0 * c * math.e) ** (-1.0 / alpha)
    return EquivalenceConstants(
        alpha=alpha,
        c_stirling=c,
        C2=c2,
        C3=c3,
        C7=c7,
        K1=k1,
        K2=k2,
        K3=k3,
        K4=k4,
        psi_from_K4=back * k4,
        round_trip_factor=back * c3 * c2,
    )


def tail_bound(t, k2: float, alpha: float):
    """min(1, 2 exp(-(t/K2)^alpha)); accepts scalars or arrays."""
    alpha = _check_alpha(alpha)
    if not k2 > 0:
        raise ValueError(f"K2 must be positive, got {k2}")
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    out = np.minimum(1.0, 2.0 * np.exp(-((t / k2) ** alpha)))
    return float(out) if out.ndim == 0 else out


def moment_bound(p: float, k3: float, alpha: float) -> float:
    """K3 * p^(1/alpha), valid for p >= alpha."""
    alpha = _check_alpha(alpha)
    if p < alpha:
        raise DomainError(f"moment bound only covers p >= alpha (p={p}, alpha={alpha})")
    if not k3 > 0:
        raise ValueError(f"K3 must be positive, got {k3}")
    return k3 * p ** (1.0 / alpha)


def mgf_threshold(k: float, alpha: float) -> float:
    _, _, c7 = stirling_constants(alpha)
    return 2.0 / (k * c7)


def mgf_bound(lam: float, k: float, alpha: float) -> float:
    """Bound on E exp(lam X) for ||X||_psi_alpha <= K, alpha > 1, lam >= 2/(K C7)."""
    alpha = _check_alpha(alpha)
    if alpha <= 1:
        raise DomainError(f"MGF bound needs alpha > 1, got {alpha}")
    if not k > 0:
        raise ValueError(f"K must be positive, got {k}")
    _, _, c7 = stirling_constants(alpha)
    if lam < 2.0 / (k * c7):
        raise DomainError(f"lambda={lam} is below the validity threshold 2/(K*C7)={2.0 / (k * c7):.6g}")
    conj = alpha / (alpha - 1.0)
    expo = (2.0 * lam * k * c7) ** conj / conj
    try:
        return math.exp(expo)
    except OverflowError:
        return math.inf


def centering_constant(alpha: float, c: float = STIRLING_C) -> float:
    """Multiplier C4 with ||X - EX||_psi_alpha <= C4 ||X||_psi_alpha.

    Composition: centred moments obey
    ``||X - EX||_p <= max(2, 2 alpha^(-1/alpha)) ||X||_psi p^(1/alpha)``,
    i.e. the moment property with K3 = max(2, 2a^(-1/a)) ||X||_psi. The
    moment -> MGF step multiplies by C3, and returning to psi_alpha divides
    by (ln 2)^(1/alpha). So C4 = max(2, 2a^(-1/a)) * C3 * (ln 2)^(-1/a).
    """
    alpha = _check_alpha(alpha)
    _, c3, _ = stirling_constants(alpha, c)
    return max(2.0, 2.0 * alpha ** (-1.0 / alpha)) * c3 * LN2 ** (-1.0 / alpha)


def centered_norm_bound(psi: PsiAlphaEstimate) -> float:
    if not math.isfinite(psi.value):
        raise ValueError("psi estimate must be finite")
    return centering_constant(psi.alpha) * psi.value


def scaling_norm(psi_alphabeta: float, beta: float) -> float:
    """|| |X|^beta ||_psi_alpha from ||X||_psi_(alpha*beta)."""
    if psi_alphabeta < 0 or not beta > 0:
        raise ValueError("need psi >= 0 and beta > 0")
    return psi_alphabeta**beta
