import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from rvescope.dataset import extract_dataset
from rvescope.model import (
    FitError,
    LogisticScoreModel,
    MlpScoreModel,
    OptimizerSettings,
    balanced_accuracy,
    cv_balanced_accuracy,
    fit_logistic,
    load_model,
    predict_proba,
    save_model,
)


def _toy(rng, n=600, d=8, noise=0.8):
    X = rng.integers(0, 2, (n, d)).astype(float)
    y = (X[:, 0] + noise * rng.random(n) > 0.9).astype(int)
    return X, y


def _fd_grad(f, theta, h=1e-6):
    g = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        g[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def test_predict_proba_examples():
    m = LogisticScoreModel.from_params([0.0, 0.0], 0.0)
    assert predict_proba(m, np.array([1.0, 0.0])) == pytest.approx(0.5, abs=1e-15)
    m = LogisticScoreModel.from_params([math.log(9.0), 0.0], 0.0)
    assert predict_proba(m, np.array([1.0, 1.0])) == pytest.approx(0.9, abs=1e-12)
    m = LogisticScoreModel.from_params([1e4, -1e4], 0.0)
    p = m.predict_proba(np.array([[1.0, 0.0], [0.0, 1.0]]))[:, 1]
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(np.isfinite(p))


def test_logistic_gradient_matches_finite_differences(rng):
    X, y = _toy(rng, n=300)
    m = LogisticScoreModel.from_params(rng.normal(size=8), 0.3, lam=0.5, n_train=300)
    f0, g = m.objective(X, y)

    def f(th):
        return LogisticScoreModel.from_params(th[:-1], th[-1], lam=0.5).objective(X, y)[0]

    fd = _fd_grad(f, m.theta_)
    assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-4


def test_mlp_gradient_matches_finite_differences(rng):
    X, y = _toy(rng, n=200, d=5)
    nh = 4
    W1, b1, w2 = rng.normal(size=(nh, 5)), rng.normal(size=nh), rng.normal(size=nh)
    m = MlpScoreModel.from_params(W1, b1, w2, 0.2, lam=0.3)
    _, g = m.objective(X, y)

    def f(th):
        k = nh * 5
        mm = MlpScoreModel.from_params(th[:k].reshape(nh, 5), th[k:k + nh],
                                       th[k + nh:k + 2 * nh], th[-1], lam=0.3)
        return mm.objective(X, y)[0]

    fd = _fd_grad(f, m.theta_)
    assert np.linalg.norm(g - fd) / np.linalg.norm(g) < 1e-4


@pytest.mark.parametrize("cls", [LogisticScoreModel, MlpScoreModel])
def test_polish_decreases_objective(rng, cls):
    X, y = _toy(rng)
    m = cls(lam=0.1, sgd_epochs=2, learning_rate=0.01).fit(X, y)
    hist = np.array(m.report_.history)
    assert len(hist) >= 1
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[:-1]))
    assert m.report_.converged
    assert m.report_.grad_norm < 1e-6


def test_separable_data_is_learned(rng):
    X = rng.integers(0, 2, (2000, 8)).astype(float)
    y = X[:, 0].astype(int)
    acc = cv_balanced_accuracy((X, y), "logistic", folds=5)
    assert acc >= 0.99


@pytest.mark.parametrize("kind", ["logistic", "mlp"])
def test_shuffled_labels_are_at_chance(rng, kind):
    X = rng.integers(0, 2, (4000, 8)).astype(float)
    y = rng.integers(0, 2, 4000)
    extra = {"learning_rate": 0.01} if kind == "mlp" else {}
    acc = cv_balanced_accuracy((X, y), kind, folds=3,
                               opt=OptimizerSettings(sgd_epochs=5), **extra)
    assert abs(acc - 0.5) <= 0.05


def test_mlp_learns_xor(rng):
    X = rng.integers(0, 2, (2000, 2)).astype(float)
    y = (X[:, 0] != X[:, 1]).astype(int)
    m = MlpScoreModel(lam=1e-4, batch_size=64, sgd_epochs=60, learning_rate=0.05,
                      random_state=1).fit(X, y)
    assert balanced_accuracy(y, m.predict(X)) >= 0.95


def test_balanced_accuracy_examples():
    assert balanced_accuracy([0, 0, 1, 1], [0, 0, 1, 1]) == 1.0
    assert balanced_accuracy([0, 0, 0, 1], [0, 0, 0, 0]) == 0.5
    # class 0: 3/5 correct, class 1: 4/5 correct
    yt = [0] * 5 + [1] * 5
    yp = [0, 0, 0, 1, 1] + [1, 1, 1, 1, 0]
    assert balanced_accuracy(yt, yp) == pytest.approx(0.7, abs=1e-15)
    with pytest.raises(ValueError):
        balanced_accuracy([1, 1], [1, 0])


def test_single_class_raises():
    X = np.ones((50, 3))
    with pytest.raises(FitError, match="class"):
        LogisticScoreModel().fit(X, np.zeros(50, int))


@pytest.mark.parametrize("cls", [LogisticScoreModel, MlpScoreModel])
def test_checkpoint_round_trip(tmp_path, rng, cls):
    X, y = _toy(rng, n=300)
    m = cls(lam=0.01, sgd_epochs=2, learning_rate=0.01).fit(X, y)
    path = tmp_path / "model.json"
    save_model(path, m)
    m2 = load_model(path)
    assert type(m2) is cls
    np.testing.assert_array_equal(m.theta_, m2.theta_)
    np.testing.assert_array_equal(m.predict_proba(X), m2.predict_proba(X))
    np.testing.assert_array_equal(m.fisher_scores(X, y), m2.fisher_scores(X, y))
    assert m2.report_.history == m.report_.history


def test_relabelled_problem_mirrors_fit(rng):
    X, y = _toy(rng, n=500)
    a = LogisticScoreModel(lam=0.1).fit(X, y)
    b = LogisticScoreModel(lam=0.1).fit(X, 1 - y)
    np.testing.assert_allclose(a.coef_, -b.coef_, atol=1e-6)
    assert a.intercept_ == pytest.approx(-b.intercept_, abs=1e-6)


def test_zero_ridge_fit_has_zero_mean_score(disks256):
    ds = extract_dataset(disks256, 5)
    model, report = fit_logistic(ds, lam=0.0)
    assert report.converged
    s = model.fisher_scores(ds.to_arrays()[0], ds.y)
    assert np.max(np.abs(s.mean(axis=0))) < 1e-5


def test_estimator_params_and_clone():
    m = MlpScoreModel(n_hidden=4, lam=0.5)
    assert m.get_params()["n_hidden"] == 4
    c = clone(m)
    assert c.get_params() == m.get_params()
    assert c is not m


@settings(max_examples=30, deadline=None)
@given(st.floats(-30, 30), st.floats(-30, 30))
def test_probabilities_in_unit_interval(w, b):
    m = LogisticScoreModel.from_params([w], b)
    p = m.predict_proba(np.array([[0.0], [1.0]]))
    assert np.all((p >= 0) & (p <= 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)
