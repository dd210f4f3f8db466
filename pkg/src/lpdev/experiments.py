"""Verification experiments shared by the CLI and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from lpdev import deviation as dv
from lpdev.complexity import PointSet
from lpdev.ensembles import DistributionSpec, SeededSampler, derive_stream, map_chunks, sample_matrix
from lpdev.jl_embed import EmbeddingPlan, calibrate_constants, distortion_report, embed, plan_dimension
from lpdev.lp_geometry import Exponent, MixedNormSpec, mixed_norms, rad_bq, reverse_triangle_report
from lpdev.orlicz import psi_alpha_norm


def loglog_slope(xs, ys) -> float:
    """Least-squares slope on log-log axes; nan when some y is not positive."""
    if np.any(np.asarray(ys, float) <= 0):
        return math.nan
    return float(np.polyfit(np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float)), 1)[0])


# ------------------------------------------------- l_p-norm concentration


def vector_deviations_multi(spec: DistributionSpec, ps, m: int, trials: int, seed: int, threads: int = 1) -> dict:
    """Signed ||X^(m)||_p - m^(1/p) for several p from the same draws (one pass over the stream)."""
    sampler = SeededSampler(spec, seed, derive_stream("vector", m))
    ps = [Exponent.of(p).p for p in ps]
    step = max(1, (1 << 21) // m)
    chunks = [(s, min(s + step, trials)) for s in range(0, trials, step)]

    def work(chunk):
        s, e = chunk
        block = np.abs(sampler.array((e - s, m), offset=s * m))
        return [dv._pnorm_rows(block / spec.lp_norm(p), p, axis=1) for p in ps]

    parts = map_chunks(work, chunks, threads)
    return {p: np.concatenate([pt[k] for pt in parts]) - m ** (1.0 / p) for k, p in enumerate(ps)}


@dataclass
class ConcentrationCell:
    m: int
    psi2: float
    shape_ratio: float
    tail: Optional[dv.TailCurve] = None
    non_dominated: int = 0


@dataclass
class ConcentrationResult:
    spec: str
    p: float
    K: float
    C_p_tail: float
    cells: list
    slope: float

    @property
    def max_min_ratio(self) -> float:
        r = [c.shape_ratio for c in self.cells]
        return max(r) / min(r)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "p": self.p,
            "K": self.K,
            "C_p_tail": self.C_p_tail,
            "slope": self.slope,
            "cells": [
                {
                    "m": c.m,
                    "psi2": c.psi2,
                    "shape_ratio": c.shape_ratio,
                    "non_dominated": c.non_dominated,
                    "tail": None if c.tail is None else c.tail.to_dict(),
                }
                for c in self.cells
            ],
        }


def concentration_experiment(
    spec: DistributionSpec, ps, m_grid, trials: int, seed: int, threads: int = 1
) -> list[ConcentrationResult]:
    """psi_2 shape and frozen-constant tail dominance of ||X^(m)||_p - m^(1/p).

    C_p is fitted on the smallest m and then held fixed for the others.
    The shape ratio is psi_2 / (K^p rad(B_q^m)).
    """
    K = dv.entry_psi2(spec, seed)
    m_grid = sorted(m_grid)
    ps = [Exponent.of(p).p for p in ps]
    devs = {m: vector_deviations_multi(spec, ps, m, trials, seed, threads) for m in m_grid}
    out = []
    for p in ps:
        cells = []
        c_p = None
        for m in m_grid:
            z = np.abs(devs[m][p])
            psi = psi_alpha_norm(z, 2.0, n_boot=0).value
            cell = ConcentrationCell(m, psi, psi / (K**p * rad_bq(m, p)))
            if c_p is None:
                c_p = dv.fit_tail_constant(z, p, m, K)
            else:
                consts = dv.FittedConstants(C_p_tail=c_p, source="fitted")
                cell.tail = dv.concentration_tail(z, p, m, K, consts)
                cell.non_dominated = int(cell.tail.non_dominated().size)
            cells.append(cell)
        slope = loglog_slope(m_grid, [c.shape_ratio for c in cells])
        out.append(ConcentrationResult(spec.name, p, K, c_p, cells, slope))
    return out


# ------------------------------------------------------- deviation sweeps


@dataclass
class SweepResult:
    cells: list
    slopes: dict
    rad_slopes: dict
    calibrated: dict
    failures: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cells": [c.to_dict() for c in self.cells],
            "slopes": {f"{k[0]}:{k[1]:g}": v for k, v in self.slopes.items()},
            "rad_slopes": {f"{k[0]}:{k[1]:g}": v for k, v in self.rad_slopes.items()},
            "calibrated_C_p_dev": {f"{k[0]}:{k[1]:g}": v for k, v in self.calibrated.items()},
            "failures": list(self.failures),
        }


def deviation_sweep(
    spec: DistributionSpec,
    T: PointSet,
    p_grid,
    m_grid,
    trials: int,
    seed: int,
    processes=("R", "X"),
    constants: Optional[dv.FittedConstants] = None,
    multiplier: float = 2.0,
    threads: int = 1,
    gamma_trials: int = 10_000,
) -> SweepResult:
    """One DeviationReport per (process, p, m).

    Unless ``constants`` is configured, C_p_dev is calibrated as
    ``multiplier * ratio`` on the smallest m; every larger m must then satisfy
    fitted psi_2 <= C_p_dev * envelope (held-out dominance).
    """
    m_grid = sorted(m_grid)
    cells, slopes, rad_slopes, calibrated, failures = [], {}, {}, {}, []
    for proc in processes:
        for p in p_grid:
            p = Exponent.of(p).p
            reps = [
                dv.sup_deviation_trials(spec, T, m, p, trials, seed, proc, threads, gamma_trials) for m in m_grid
            ]
            cells.extend(reps)
            fitted = [r.fitted_psi2.value if r.fitted_psi2 else math.nan for r in reps]
            if len(m_grid) > 1 and all(f > 0 for f in fitted):
                slopes[(proc, p)] = loglog_slope(m_grid, fitted)
                rad_slopes[(proc, p)] = loglog_slope(m_grid, [rad_bq(m, p) for m in m_grid])
            if constants is not None and constants.source == "configured":
                c_dev = constants.C_p_dev
                held = reps
            else:
                c_dev = multiplier * reps[0].ratio if reps[0].ratio > 0 else 0.0
                held = reps[1:]
            calibrated[(proc, p)] = c_dev
            for r in held:
                if r.fitted_psi2 is None:
                    continue
                if r.fitted_psi2.value > c_dev * r.envelope:
                    failures.append(
                        f"process={proc} p={p:g} m={r.m}: fitted psi2 {r.fitted_psi2.value:.6g} "
                        f"> C_p_dev*envelope {c_dev * r.envelope:.6g}"
                    )
    return SweepResult(cells, slopes, rad_slopes, calibrated, failures)


def sup_tail_curve(report: dv.DeviationReport, c_dev: float) -> dv.TailCurve:
    """Tail of the sup samples against 2 exp(-s^2 / (c_dev * envelope)^2)."""
    scale = c_dev * report.envelope

    def theory(s):
        return 1.0 if scale <= 0 else min(1.0, 2.0 * math.exp(-((s / scale) ** 2)))

    return dv.empirical_tail(report.sup_samples, theory_fn=theory)


# ------------------------------------------------------------ increments


@dataclass
class IncrementResult:
    t_grid: list
    psi: list
    ratios: list
    slope: float
    p: float
    m: int


def increment_experiment(
    spec: DistributionSpec, p, m: int, t_grid, trials: int, seed: int, x, u, process: str = "R", threads: int = 1
) -> IncrementResult:
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    reps = [dv.increment_psi2(spec, x, x + t * u, m, p, trials, seed, process, threads) for t in t_grid]
    psi = [r.psi.value for r in reps]
    return IncrementResult(list(t_grid), psi, [r.ratio for r in reps], loglog_slope(t_grid, psi), Exponent.of(p).p, m)


# ------------------------------------------------------------------- JL


@dataclass
class JLResult:
    plan: EmbeddingPlan
    repeats: int
    failures: int
    min_ratio: float
    max_ratio: float
    safety_margin: float
    violation_counts: list

    @property
    def frequency(self) -> float:
        return self.failures / self.repeats

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "repeats": self.repeats,
            "failures": self.failures,
            "frequency": self.frequency,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "safety_margin": self.safety_margin,
        }


def jl_experiment(
    spec: DistributionSpec,
    T: PointSet,
    p,
    epsilon: float,
    delta: float,
    repeats: int,
    seed: int,
    plan: Optional[EmbeddingPlan] = None,
    threads: int = 1,
) -> JLResult:
    """Repeat embed + distortion_report with independent matrices; count runs with any violation."""
    if plan is None:
        cal = calibrate_constants(spec, T, p, seed, threads=threads)
        plan = plan_dimension(len(T), epsilon, delta, p, cal.K, cal.constants)

    def run(r):
        A = sample_matrix(SeededSampler(spec, seed, derive_stream("jl_repeat", r)), plan.m, T.dim)
        rep = distortion_report(T, embed(A, T, p), p, plan)
        return rep.violations, rep.min_ratio, rep.max_ratio

    results = map_chunks(run, range(repeats), threads)
    viol = [v for v, _, _ in results]
    mins = [lo for _, lo, _ in results]
    maxs = [hi for _, _, hi in results]
    margin = max(plan.d_p * (1 - plan.epsilon) / lo for lo in mins)
    return JLResult(plan, repeats, sum(v > 0 for v in viol), min(mins), max(maxs), margin, viol)


# -------------------------------------------------- reverse triangle sweep


@dataclass
class TriangleSweep:
    ratios: np.ndarray
    sines: np.ndarray
    obtuse: np.ndarray

    @property
    def sin0_violations(self) -> int:
        bound = np.where(self.sines > 0, 3.0 / np.where(self.sines > 0, self.sines, 1.0), np.inf)
        return int(np.count_nonzero(self.ratios > bound * (1 + 1e-12)))

    @property
    def obtuse_violations(self) -> int:
        return int(np.count_nonzero(self.ratios[self.obtuse] > math.sqrt(2.0) * (1 + 1e-12)))


def reverse_triangle_sweep(spec: DistributionSpec, p, trials: int, dim: int, seed: int) -> TriangleSweep:
    """Random x on the mixed-norm unit sphere and y outside it, r = ||y|| in (1, 4)."""
    mixed = MixedNormSpec(spec, p)
    rng = np.random.default_rng(seed)
    ratios, sines, obtuse = [], [], []
    for _ in range(trials):
        x = rng.standard_normal(dim)
        y = rng.standard_normal(dim)
        x /= mixed_norms(mixed, x[None, :], seed=seed)[0]
        y *= rng.uniform(1.0001, 4.0) / mixed_norms(mixed, y[None, :], seed=seed)[0]
        rep = reverse_triangle_report(x, y, mixed, seed=seed)
        ratios.append(rep.lhs_over_rhs)
        sines.append(rep.sin_theta)
        obtuse.append(rep.obtuse)
    return TriangleSweep(np.array(ratios), np.array(sines), np.array(obtuse))
