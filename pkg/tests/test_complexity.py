import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpdev.complexity import (
    PointSet,
    gamma,
    gamma_log_bound,
    normalized_difference_set,
    read_points_csv,
    unit_sphere_points,
    write_points_csv,
)

HALF_NORMAL_MEAN = math.sqrt(2 / math.pi)
# E max_{i<=100} |g_i| = int_0^inf 1 - (2 Phi(t) - 1)^100 dt, by quadrature
E_MAX_ABS_100 = 2.7469576878061366


def test_zero_set():
    g = gamma(PointSet(np.zeros((1, 4))), trials=500)
    assert g.value == 0.0 and g.ci_high == 0.0


def test_single_axis():
    g = gamma(PointSet(np.eye(5)[:1]), trials=20_000, seed=1)
    assert g.ci_low <= HALF_NORMAL_MEAN <= g.ci_high


def test_cross_polytope():
    e = np.eye(100)
    T = PointSet(np.vstack([e, -e]))
    g = gamma(T, trials=20_000, seed=4)
    assert g.ci_low <= E_MAX_ABS_100 <= g.ci_high


def test_brute_force_agreement():
    T = unit_sphere_points(12, 7, seed=2)
    g = gamma(T, trials=5000, seed=9)
    rng = np.random.default_rng(123)
    brute = np.mean(np.max(np.abs(rng.standard_normal((200_000, 7)) @ T.points.T), axis=1))
    assert abs(g.value - brute) <= (g.ci_high - g.ci_low)


def test_coupled_draws_monotone_under_inclusion():
    T = unit_sphere_points(30, 5, seed=0)
    sub = PointSet(T.points[:10])
    assert gamma(sub, trials=1000, seed=3).value <= gamma(T, trials=1000, seed=3).value


def test_scaling():
    T = unit_sphere_points(8, 4, seed=5)
    a = gamma(T, trials=1000, seed=2).value
    assert gamma(T.scaled(3.0), trials=1000, seed=2).value == pytest.approx(3 * a, rel=1e-12)


def test_gamma_bad_inputs():
    with pytest.raises(ValueError):
        gamma(PointSet(np.ones((1, 2))), trials=10)


def test_log_bound():
    assert gamma_log_bound(math.e**2, 1.0) == pytest.approx(math.sqrt(2))
    assert gamma_log_bound(1000, 1) == pytest.approx(2.6283, abs=1e-4)
    assert gamma_log_bound(1000, 0.5) == pytest.approx(5.2566, abs=1e-4)
    assert gamma_log_bound(1000, 1, log=math.log2) == pytest.approx(math.sqrt(math.log2(1000)))
    with pytest.raises(ValueError):
        gamma_log_bound(1, 1)


@pytest.mark.parametrize("N", [10, 50])
def test_log_bound_consistent_for_unit_points(N):
    T = unit_sphere_points(N, 20, seed=N)
    g = gamma(T, trials=4000, seed=1)
    slack = g.value / gamma_log_bound(N, 1.0)
    # a fitted slack of order one: sqrt(2 log 2N) / sqrt(log N) caps it
    assert 0.1 < slack <= math.sqrt(2 * math.log(2 * N) / math.log(N))


def test_difference_set_examples():
    S, skipped = normalized_difference_set(PointSet(np.array([[0.0, 0.0], [1.0, 0.0]])))
    assert np.allclose(S.points, [[1.0, 0.0]]) and skipped == 0
    S, _ = normalized_difference_set(PointSet(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])))
    assert len(S) == 1
    T = PointSet(np.random.default_rng(0).standard_normal((10, 4)))
    S, _ = normalized_difference_set(T)
    assert len(S) == 45
    assert np.allclose(np.linalg.norm(S.points, axis=1), 1.0, atol=1e-12)


def test_difference_set_duplicates_skipped():
    T = PointSet(np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]]))
    S, skipped = normalized_difference_set(T)
    assert skipped == 1 and len(S) == 1
    with pytest.raises(ValueError):
        normalized_difference_set(PointSet(np.ones((3, 2))))


def test_difference_set_custom_norm():
    T = PointSet(np.array([[0.0, 0.0], [3.0, 4.0]]))
    S, _ = normalized_difference_set(T, lambda d: 2 * np.linalg.norm(d, axis=1))
    assert np.allclose(np.linalg.norm(S.points, axis=1), 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(1, 5), st.integers(0, 10**6))
def test_difference_set_count_bound(N, n, seed):
    T = PointSet(np.random.default_rng(seed).standard_normal((N, n)))
    S, _ = normalized_difference_set(T)
    assert 1 <= len(S) <= N * (N - 1) // 2


def test_points_csv_round_trip(tmp_path):
    T = PointSet(np.random.default_rng(1).standard_normal((6, 3)), labels=list("abcdef"))
    write_points_csv(tmp_path / "p.csv", T)
    U = read_points_csv(tmp_path / "p.csv")
    assert np.array_equal(T.points, U.points) and U.labels == T.labels
    V = PointSet(T.points)
    write_points_csv(tmp_path / "q.csv", V)
    assert read_points_csv(tmp_path / "q.csv").labels is None


def test_points_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError):
        read_points_csv(p)
    p.write_text("x,y\n")
    with pytest.raises(ValueError):
        read_points_csv(p)
    with pytest.raises(OSError):
        read_points_csv(tmp_path / "missing.csv")


def test_unit_sphere_points():
    T = unit_sphere_points(20, 6, seed=3)
    assert np.allclose(np.linalg.norm(T.points, axis=1), 1.0)
    assert np.array_equal(T.points, unit_sphere_points(20, 6, seed=3).points)
