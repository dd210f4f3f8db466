import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpdev.complexity import PointSet
from lpdev.deviation import FittedConstants
from lpdev.ensembles import DistributionSpec, SeededSampler, derive_stream, sample_matrix
from lpdev.experiments import jl_experiment
from lpdev.jl_embed import (
    calibrate_constants,
    distortion_report,
    dp_constants,
    embed,
    failure_probability,
    pair_ratios,
    plan_dimension,
)

G = DistributionSpec.gaussian()
DEFAULT = FittedConstants()


def test_dp_constants():
    assert dp_constants(2, 3.7, DEFAULT) == (1.0, 1.0)
    d, D = dp_constants(1, 1.2011, DEFAULT)
    assert d == pytest.approx(1.2011**-3) and d == pytest.approx(0.5771, abs=1e-4) and D == 1.0
    d, D = dp_constants(4, 1.6330, DEFAULT)
    assert (d, D) == (1.0, pytest.approx(1.6330))
    with pytest.raises(ValueError):
        dp_constants(1, 1.0, DEFAULT)
    with pytest.raises(ValueError):
        dp_constants(1, 1.19, DEFAULT)
    assert dp_constants(1, 1.0, DEFAULT, check_floor=False) == (1.0, 1.0)


def test_plan_examples():
    assert plan_dimension(1000, 0.5, 0.01, 2, 1.0, DEFAULT).m == 147
    # the base quantity is 146.3979..., whose square is 21432.35, so the fourth-root
    # inversion gives 21433 (squaring the rounded 146.4 also gives 21432.96 -> 21433)
    assert plan_dimension(1000, 0.5, 0.01, 4, 1.0, DEFAULT).m == 21433
    base = math.log(1000) * math.log(200) / 0.25
    assert math.ceil(base) == 147 and math.ceil(base**2) == 21433


def test_plan_is_smallest():
    plan = plan_dimension(500, 0.3, 0.05, 1.5, 1.2011, DEFAULT)
    assert plan.failure_bound() <= 0.05
    assert plan.failure_bound(plan.m - 1) > 0.05


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.05, 0.95), st.sampled_from([1, 2, 3, 4]))
def test_plan_monotone_in_epsilon(e1, e2, p):
    lo, hi = sorted((e1, e2))
    a = plan_dimension(100, lo, 0.01, p, 1.3, DEFAULT).m
    b = plan_dimension(100, hi, 0.01, p, 1.3, DEFAULT).m
    assert b <= a


def test_plan_preconditions():
    with pytest.raises(ValueError):
        plan_dimension(1, 0.5, 0.01, 2, 1.0, DEFAULT)
    with pytest.raises(ValueError):
        plan_dimension(10, 1.0, 0.01, 2, 1.0, DEFAULT)
    with pytest.raises(ValueError):
        plan_dimension(10, 0.5, 0.0, 2, 1.0, DEFAULT)


def test_log_base_configurable():
    nat = plan_dimension(1000, 0.5, 0.01, 2, 1.0, DEFAULT)
    two = plan_dimension(1000, 0.5, 0.01, 2, 1.0, DEFAULT, log=math.log2)
    assert two.m > nat.m and two.log_base == "log2"


def test_failure_probability_clipped():
    assert failure_probability(1, 0.01, 2, 1.0, 10, 1.0, 1.0) == 1.0


def test_embed_linearity():
    T = PointSet(np.vstack([np.zeros(6), np.random.default_rng(1).standard_normal((3, 6))]))
    A = sample_matrix(SeededSampler(G, 0, 0), 40, 6)
    e = embed(A, T, 3)
    assert np.all(e.points[0] == 0)
    x, y = T.points[1], T.points[2]
    lhs = e.points[1] - e.points[2]
    rhs = 40 ** (-1 / 3) * (A.entries @ (x - y))
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-13)
    with pytest.raises(ValueError):
        embed(A, PointSet(np.ones((2, 5))), 2)


def test_embed_chi_square_concentration():
    x, y = np.zeros(8), np.ones(8) / math.sqrt(8)
    T = PointSet(np.vstack([x, y]))
    hits = 0
    for r in range(1000):
        A = sample_matrix(SeededSampler(G, 5, derive_stream("pair", r)), 10_000, 8)
        ratio = pair_ratios(T, embed(A, T, 2), 2)[0][0]
        hits += 0.95 <= ratio <= 1.05
    assert hits >= 990


def test_distortion_single_point():
    plan = plan_dimension(10, 0.5, 0.01, 2, 1.0, DEFAULT)
    T = PointSet(np.ones((1, 3)))
    rep = distortion_report(T, T, 2, plan)
    assert rep.pair_count == 0 and rep.violations == 0


def test_distortion_duplicates_skipped():
    plan = plan_dimension(10, 0.5, 0.01, 2, 1.0, DEFAULT)
    T = PointSet(np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
    rep = distortion_report(T, T, 2, plan)
    assert rep.skipped_pairs == 1 and rep.pair_count == 2 and rep.violations == 0


def test_rank_one_projection_fails():
    T = PointSet(np.random.default_rng(2).standard_normal((100, 50)))
    plan = plan_dimension(100, 0.5, 0.01, 2, 1.0, DEFAULT)
    failed = 0
    for r in range(50):
        A = sample_matrix(SeededSampler(G, 1, derive_stream("tiny", r)), 1, 50)
        failed += distortion_report(T, embed(A, T, 2), 2, plan).violations > 0
    assert failed == 50


def test_planned_p2_guarantee():
    T = PointSet(np.random.default_rng(5).standard_normal((100, 50)))
    plan = plan_dimension(100, 0.5, 0.01, 2, 1.0, DEFAULT)
    res = jl_experiment(G, T, 2, 0.5, 0.01, 100, seed=3, plan=plan)
    assert res.frequency <= 0.01
    assert res.safety_margin <= 1


def test_calibration_positive_and_reported():
    T = PointSet(np.random.default_rng(7).standard_normal((12, 6)))
    cal = calibrate_constants(G, T, 1, seed=0, m_grid=(16, 64), trials=1000)
    assert cal.constants.source == "fitted"
    assert cal.constants.C_p_dev == pytest.approx(2 * cal.raw_C_p)
    assert cal.K == pytest.approx(math.sqrt(8 / 3))
    assert cal.constants.c_norm == pytest.approx(math.sqrt(8 / 3) ** 3 * math.sqrt(2 / math.pi), rel=1e-9)
