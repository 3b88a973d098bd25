import math

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from xidiar.errors import ConfigError, NumericalError
from xidiar.plda import PldaModel, fit_plda, plda_distance_matrix, plda_log_likelihood, plda_score


def random_model(rng, d):
    a = rng.normal(size=(d, d))
    c = rng.normal(size=(d, d))
    return PldaModel(rng.normal(size=d), a @ a.T + 0.5 * np.eye(d), c @ c.T + np.eye(d))


def stacked_llr(model, u, v):
    """LLR from the joint Gaussian of (u, v) under both hypotheses."""
    b, w = model.between_cov, model.within_cov
    t = b + w
    z = np.zeros_like(b)
    same = np.block([[t, b], [b, t]])
    diff = np.block([[t, z], [z, t]])
    m = np.concatenate([model.mu, model.mu])
    uv = np.concatenate([u, v])
    return multivariate_normal(m, same).logpdf(uv) - multivariate_normal(m, diff).logpdf(uv)


def test_one_dimensional_closed_form():
    model = PldaModel(np.zeros(1), np.eye(1), np.eye(1))
    rho = 0.5
    assert plda_score(model, [0.0], [0.0]) == pytest.approx(0.5 * math.log(1 / (1 - rho**2)), abs=1e-12)
    assert plda_score(model, [0.0], [0.0]) == pytest.approx(0.1438, abs=1e-4)


def test_matches_joint_gaussian_oracle(rng):
    for d in (1, 3, 5):
        model = random_model(rng, d)
        for _ in range(5):
            u, v = rng.normal(size=d) * 2, rng.normal(size=d) * 2
            assert plda_score(model, u, v) == pytest.approx(stacked_llr(model, u, v), abs=1e-9)


def test_symmetry_is_bit_exact(rng):
    model = random_model(rng, 6)
    for _ in range(50):
        u, v = rng.normal(size=6) * 10, rng.normal(size=6) * 10
        assert plda_score(model, u, v) == plda_score(model, v, u)
    s = model.score_matrix(rng.normal(size=(9, 6)))
    assert np.array_equal(s, s.T)


def test_translation_invariance(rng):
    model = random_model(rng, 4)
    shift = rng.normal(size=4) * 50
    moved = PldaModel(model.mu + shift, model.between_cov, model.within_cov)
    u, v = rng.normal(size=4), rng.normal(size=4)
    assert plda_score(moved, u + shift, v + shift) == pytest.approx(plda_score(model, u, v), abs=1e-9)


def test_vanishing_between_gives_zero(rng):
    model = PldaModel(np.zeros(3), 1e-12 * np.eye(3), np.eye(3))
    for _ in range(10):
        assert abs(plda_score(model, rng.normal(size=3), rng.normal(size=3))) < 1e-9


def test_ill_conditioned_within_rejected():
    model = PldaModel(np.zeros(2), np.eye(2), np.diag([1.0, 1e-14]))
    with pytest.raises(NumericalError, match="condition number"):
        plda_score(model, [0, 0], [1, 1])


def test_distance_matrix_shift(rng):
    model = random_model(rng, 3)
    x = rng.normal(size=(6, 3))
    d = plda_distance_matrix(model, x).values
    assert np.all(np.diag(d) == 0)
    off = d[~np.eye(6, dtype=bool)]
    assert off.min() == pytest.approx(0, abs=1e-12)
    raw = plda_distance_matrix(model, x, shift=False).values
    assert raw[0, 1] == pytest.approx(-plda_score(model, x[0], x[1]))


def test_json_round_trip(rng):
    model = random_model(rng, 3)
    back = PldaModel.from_json(model.to_json())
    np.testing.assert_array_equal(back.between_cov, model.between_cov)
    np.testing.assert_array_equal(back.within_cov, model.within_cov)


def test_em_recovers_two_classes(rng):
    x = np.concatenate([rng.normal(-5, 1, 1000), rng.normal(5, 1, 1000)])[:, None]
    labels = np.repeat([0, 1], 1000)
    model = fit_plda(x, labels)
    assert model.between_cov[0, 0] == pytest.approx(25, rel=0.1)
    assert model.within_cov[0, 0] == pytest.approx(1, rel=0.1)


def test_identical_class_means_give_small_between(rng):
    x = rng.normal(size=(4000, 2))
    labels = np.arange(4000) % 40
    model = fit_plda(x, labels)
    assert np.max(np.abs(model.between_cov)) < 0.05


def test_em_monotone_on_random_data(rng):
    for _ in range(10):
        d = int(rng.integers(1, 5))
        labels = rng.integers(0, 8, size=60)
        x = rng.normal(size=(60, d)) + rng.normal(size=(8, d))[labels] * rng.uniform(0, 4)
        model = fit_plda(x, labels, n_iter=20)
        assert len(model.ll_history) == 21
        assert min(np.diff(model.ll_history)) >= -1e-6


def test_log_likelihood_matches_joint_gaussian(rng):
    model = random_model(rng, 2)
    labels = np.array([0, 0, 0, 1, 1, 2])
    x = rng.normal(size=(6, 2))
    expect = 0.0
    for c in np.unique(labels):
        xs = x[labels == c]
        n = len(xs)
        cov = np.kron(np.ones((n, n)), model.between_cov) + np.kron(np.eye(n), model.within_cov)
        expect += multivariate_normal(np.tile(model.mu, n), cov).logpdf(xs.ravel())
    assert plda_log_likelihood(model, x, labels) == pytest.approx(expect, abs=1e-9)


def test_training_needs_classes():
    with pytest.raises(ConfigError):
        fit_plda(np.ones((4, 2)), [0, 0, 0, 0])
    with pytest.raises(ConfigError):
        fit_plda(np.ones((3, 2)), [0, 1, 2])
