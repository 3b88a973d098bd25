import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import exhaustive_medoids, naive_average_linkage
from xidiar.clustering import DistanceMatrix, Metric, ahc, cosine_distance, cosine_distance_matrix, k_medoids, medoid_cost
from xidiar.domain import DOMAIN_PROFILES
from xidiar.errors import ConfigError, DimensionError


def line(points):
    p = np.asarray(points, dtype=float)
    return DistanceMatrix(np.abs(p[:, None] - p[None, :]))


def test_cosine_fixtures():
    assert cosine_distance([1, 2], [1, 2]) == pytest.approx(0, abs=1e-15)
    assert cosine_distance([1, 0], [0, 3]) == 1
    assert cosine_distance([1, 0], [1, 1]) == pytest.approx(1 - 1 / math.sqrt(2))


def test_cosine_zero_vector_warns():
    with pytest.warns(UserWarning):
        assert cosine_distance([0, 0], [1, 1]) == 1.0
    with pytest.warns(UserWarning):
        d = cosine_distance_matrix(np.array([[0, 0], [1, 1.0]]))
    assert d.values[0, 1] == 1 and d.values[0, 0] == 0


def test_cosine_matrix_agrees_with_pairwise(rng):
    x = rng.normal(size=(6, 4))
    d = cosine_distance_matrix(x).values
    for i in range(6):
        for j in range(6):
            if i != j:
                assert d[i, j] == pytest.approx(cosine_distance(x[i], x[j]), abs=1e-12)


def test_distance_matrix_validation():
    with pytest.raises(DimensionError):
        DistanceMatrix(np.array([[0, 1], [2, 0.0]]))
    with pytest.raises(DimensionError):
        DistanceMatrix(np.ones((2, 3)))
    with pytest.raises(DimensionError):
        DistanceMatrix(np.array([[1.0, 0], [0, 0]]), Metric.COSINE)
    DistanceMatrix(np.array([[-3.0, 1], [1, -2]]), Metric.NEG_PLDA)


def test_two_pairs_on_a_line():
    out = ahc(line([0, 0.1, 10, 10.1]), 1.0, 1, 4)
    assert out.clusters() == [[0, 1], [2, 3]]
    assert [m.size for m in out.linkage_trace] == [2, 2]


def test_singletons_and_single_cluster(rng):
    d = cosine_distance_matrix(rng.normal(size=(7, 3)))
    assert ahc(d, 0.0, 7, 7).k == 7
    assert ahc(d, math.inf, 1, 1).k == 1


def test_corridor_overrides_threshold():
    d = line([0, 0.1, 10, 10.1, 20])
    # threshold wants three clusters but at most two are allowed
    assert ahc(d, 1.0, 1, 2).k == 2
    # threshold wants one cluster but at least four are required
    assert ahc(d, 100.0, 4, 5).k == 4


def test_corridor_errors():
    d = line([0, 1])
    with pytest.raises(ConfigError):
        ahc(d, 0.5, 3, 2)
    with pytest.raises(ConfigError):
        ahc(d, 0.5, 0, 2)
    with pytest.warns(UserWarning):
        assert ahc(d, 0.5, 5, 6).k == 2


def test_ties_merge_lowest_pair():
    out = ahc(line([0, 1, 2, 3]), 1.0, 3, 4)
    assert out.linkage_trace[0][:2] == (0, 1)


@given(arrays(np.float64, st.tuples(st.integers(2, 7), st.just(3)), elements=st.floats(-5, 5)), st.floats(0, 2), st.integers(1, 7), st.integers(0, 6))
def test_ahc_matches_naive(x, threshold, k_min, extra):
    n = len(x)
    k_min = min(k_min, n)
    k_max = k_min + extra
    d = np.abs(x[:, None, 0] - x[None, :, 0]) + np.abs(x[:, None, 1] - x[None, :, 1])
    got = ahc(DistanceMatrix(d), threshold, k_min, k_max)
    assert sorted(got.clusters()) == naive_average_linkage(d, threshold, k_min, k_max)
    assert k_min <= got.k <= min(k_max, n)


def test_table_corridors():
    t = {p.name: p for p in DOMAIN_PROFILES}
    assert (t["SCOTUS"].k_min, t["SCOTUS"].k_max, t["SCOTUS"].ahc_threshold) == (5, 10, 0.46)
    assert (t["SEEDLingS"].k_min, t["SEEDLingS"].k_max, t["SEEDLingS"].ahc_threshold) == (2, 3, 0.62)
    assert (t["SLX"].k_min, t["SLX"].k_max, t["SLX"].ahc_threshold) == (2, 6, 0.762)


def test_kmedoids_k_equals_n():
    out = k_medoids(line([0, 1, 5, 9]), 4)
    assert out.cost == 0 and out.medoids == (0, 1, 2, 3)


def test_kmedoids_two_pairs():
    out = k_medoids(line([0, 0.1, 10, 10.1]), 2)
    assert out.cost == pytest.approx(0.2)
    assert out.clusters() == [[0, 1], [2, 3]]


def test_kmedoids_errors():
    with pytest.raises(ConfigError):
        k_medoids(line([0, 1]), 3)
    with pytest.raises(ConfigError):
        k_medoids(line([0, 1]), 0)


@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.just(2)), elements=st.floats(-10, 10)), st.integers(1, 3))
def test_kmedoids_matches_exhaustive(x, k):
    k = min(k, len(x))
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    out = k_medoids(DistanceMatrix(d), k)
    best, _ = exhaustive_medoids(d, k)
    assert out.cost == pytest.approx(best, abs=1e-9)
    assert out.cost == pytest.approx(medoid_cost(d, out.medoids))
    assert all(b <= a + 1e-12 for a, b in zip(out.cost_history, out.cost_history[1:]))


STALLS_PAM = np.array([[-2, 1], [0, 0], [-3, 0], [3, -3], [-3, -3], [-3, -3]], dtype=float)


def test_plain_pam_stalls_where_refinement_does_not():
    d = np.sqrt(((STALLS_PAM[:, None] - STALLS_PAM[None]) ** 2).sum(-1))
    plain = k_medoids(DistanceMatrix(d), 2, exact_budget=0)
    full = k_medoids(DistanceMatrix(d), 2)
    assert plain.medoids == (2, 3)
    assert full.medoids == (1, 4)
    assert full.cost == pytest.approx(exhaustive_medoids(d, 2)[0], abs=1e-12)
    assert full.cost_history[-1] < plain.cost


@given(arrays(np.float64, st.tuples(st.integers(2, 12), st.just(2)), elements=st.floats(-10, 10)), st.integers(1, 4))
def test_plain_pam_is_swap_local_optimum(x, k):
    k = min(k, len(x))
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    out = k_medoids(DistanceMatrix(d), k, exact_budget=0)
    meds = list(out.medoids)
    for pos in range(k):
        for o in range(len(x)):
            if o in meds:
                continue
            trial = meds[:pos] + [o] + meds[pos + 1 :]
            assert d[:, trial].min(axis=1).sum() >= out.cost - 1e-9
    assert all(b <= a + 1e-12 for a, b in zip(out.cost_history, out.cost_history[1:]))
