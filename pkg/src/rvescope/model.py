"""Pixel classifiers P(Y | X; theta) fitted by regularised maximum likelihood.

Both estimators minimise

    J(theta) = (1/n) * [ sum_i -log P(y_i | x_i; theta) + (lam/2) * ||weights||^2 ]

with biases unpenalised. Fitting runs a few epochs of mini-batch Adam and then
a full-batch Newton polish with backtracking, which drives the gradient (and
hence the mean Fisher score) to numerical zero. For the network the polish
acts on the output layer, the only block whose scores are used downstream.

Parameter layout is fixed: weights first, bias last.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.model_selection import StratifiedKFold
from sklearn.utils import check_random_state
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import NeighborhoodDataset

__all__ = [
    "FitError",
    "FitReport",
    "OptimizerSettings",
    "LogisticScoreModel",
    "MlpScoreModel",
    "fit_logistic",
    "fit_mlp",
    "predict_proba",
    "balanced_accuracy",
    "cv_balanced_accuracy",
    "save_model",
    "load_model",
]

PROBA_CLIP = 1e-12
BLOCK = 1 << 14
MLP_LR_GRID = (1e-1, 1e-2, 1e-3)
CHECKPOINT_FORMAT = "rve-scope-model"
CHECKPOINT_VERSION = 1


class FitError(RuntimeError):
    """Model fitting failed: single-class data or a diverging objective."""


@dataclass(frozen=True)
class OptimizerSettings:
    batch_size: int = 4096
    sgd_epochs: int | None = None  # None: model default
    learning_rate: float | None = None
    tol: float = 1e-6
    max_polish: int = 100
    seed: int = 0


@dataclass
class FitReport:
    nll: float
    objective: float
    grad_norm: float
    n_iter: int
    converged: bool
    cv_balanced_accuracy: float | None = None
    learning_rate: float | None = None
    history: list = field(default_factory=list, repr=False)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _clip(p):
    return np.clip(p, PROBA_CLIP, 1.0 - PROBA_CLIP)


def _nll(z, y):
    # -log P(y | z) for a logit z, stable for large |z|
    return np.logaddexp(0.0, z) - y * z


class _ArrayDesign:
    """Dense (X, y) behind the same block interface as NeighborhoodDataset."""

    def __init__(self, X, y):
        self.X = X
        self._y = y
        self.n, self.n_features = X.shape
        self.ls = None

    @property
    def y(self):
        return self._y

    def rows(self, idx, dtype=np.float64):
        return self.X[idx].astype(dtype, copy=False)

    def blocks(self, size=BLOCK, dtype=np.float64):
        for start in range(0, self.n, size):
            stop = min(start + size, self.n)
            yield start, stop, self.X[start:stop].astype(dtype, copy=False)

    def subset(self, idx):
        return _ArrayDesign(self.X[idx], self._y[idx])


def _as_design(X, y=None):
    if isinstance(X, (NeighborhoodDataset, _ArrayDesign)):
        if y is not None:
            raise ValueError("y must not be given together with a NeighborhoodDataset")
        return X
    if y is None:
        raise ValueError("y is required when X is an array")
    X, y = check_X_y(X, y, dtype=np.float64)
    return _ArrayDesign(X, y)


def _targets(design):
    y = np.asarray(design.y, dtype=np.float64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("targets must be binary 0/1")
    n1 = int(y.sum())
    if n1 == 0 or n1 == len(y):
        raise FitError("single-class dataset: the likelihood has no finite maximiser")
    return y


def _design_rows(design, X):
    if isinstance(X, (NeighborhoodDataset, _ArrayDesign)):
        return X
    X = check_array(X, dtype=np.float64, ensure_2d=False)
    if X.ndim == 1:
        X = X[None, :]
    return _ArrayDesign(X, np.zeros(len(X)))


# --------------------------------------------------------------------------
# generic Newton polish on a logistic output layer


def _newton_polish(blocks, y, n, theta, lam, penal, tol, max_iter):
    """Minimise J over an affine logistic layer by damped Newton.

    `blocks()` yields (start, stop, F) with F the design rows including the
    trailing column of ones. `penal` is 1 for penalised coordinates, 0 for the
    bias. Every accepted step strictly lowers J (Armijo backtracking).
    Returns theta, objective, gradient, objective history, converged.
    """
    d = theta.size
    it = 0

    def evaluate(th, want_hess):
        f = 0.5 * lam * np.sum(penal * th * th)
        g = lam * penal * th
        H = np.diag(lam * penal).astype(np.float64) if want_hess else None
        for start, stop, F in blocks():
            yb = y[start:stop]
            z = F @ th
            f += _nll(z, yb).sum()
            p = _sigmoid(z)
            g -= F.T @ (yb - p)
            if want_hess:
                wts = p * (1.0 - p)
                H += F.T @ (F * wts[:, None])
        return f / n, g / n, (H / n if want_hess else None)

    def objective(th):
        f = 0.5 * lam * np.sum(penal * th * th)
        for start, stop, F in blocks():
            f += _nll(F @ th, y[start:stop]).sum()
        return f / n

    f, g, H = evaluate(theta, True)
    if not np.isfinite(f):
        raise FitError(f"objective is not finite at the starting point (J={f})")
    history = [f]
    while np.max(np.abs(g)) >= tol and it < max_iter:
        it += 1
        jitter = 0.0
        scale = max(np.trace(H) / d, 1e-300)
        while True:
            try:
                c = linalg.cho_factor(H + jitter * np.eye(d), lower=True, check_finite=False)
                step = -linalg.cho_solve(c, g, check_finite=False)
                if np.all(np.isfinite(step)):
                    break
            except linalg.LinAlgError:
                pass
            jitter = scale * 1e-12 if jitter == 0.0 else jitter * 100.0
            if jitter > scale * 1e6:
                step = -g
                break
        slope = float(g @ step)
        if slope >= 0:
            step, slope = -g, -float(g @ g)
        t = 1.0
        while True:
            f_new = objective(theta + t * step)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                break
            t *= 0.5
            if t < 1e-12:
                return theta, f, g, history, False
        theta = theta + t * step
        f, g, H = evaluate(theta, True)
        history.append(f)
    return theta, f, g, history, bool(np.max(np.abs(g)) < tol)


def _adam(params, grad_fn, n, batch_size, epochs, lr, rng):
    """Mini-batch Adam over shuffled index batches; updates `params` in place."""
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2, eps = 0.9, 0.999, 1e-8
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = np.sort(order[start : start + batch_size])
            grads = grad_fn(idx)
            t += 1
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= b1
                mi += (1 - b1) * g
                vi *= b2
                vi += (1 - b2) * g * g
                p -= lr * (mi / (1 - b1**t)) / (np.sqrt(vi / (1 - b2**t)) + eps)
            if not all(np.all(np.isfinite(p)) for p in params):
                raise FitError("stochastic phase diverged (non-finite parameters); lower the learning rate")


def _mlp_sums(W1, b1, w2, b2, Xb, yb):
    """Summed NLL and its gradient over one block (no penalty)."""
    h = np.tanh(Xb @ W1.T + b1)
    z = h @ w2 + b2
    r = _sigmoid(z) - yb
    dh = np.outer(r, w2) * (1.0 - h * h)
    return _nll(z, yb).sum(), dh.T @ Xb, dh.sum(axis=0), h.T @ r, r.sum()


# --------------------------------------------------------------------------
# estimators


class _ScoreModelBase(ClassifierMixin, BaseEstimator):
    kind = ""

    def _opt(self):
        return OptimizerSettings(
            batch_size=self.batch_size,
            sgd_epochs=self.sgd_epochs,
            learning_rate=self.learning_rate,
            tol=self.tol,
            max_polish=self.max_polish,
            seed=self.random_state,
        )

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def predict_proba(self, X):
        p = self._proba(X)
        return np.column_stack([1.0 - p, p])

    def _proba(self, X):
        check_is_fitted(self)
        design = _design_rows(self, X)
        if design.n_features != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {design.n_features}")
        out = np.empty(design.n)
        for start, stop, Xb in design.blocks():
            out[start:stop] = _clip(_sigmoid(self._logit(Xb)))
        return out

    def fisher_scores(self, X, y=None, n_train=None):
        """Per-sample score vectors, shape (n, score_dim_).

        Each row is the gradient of the sample's regularised log-likelihood
        log P(y|x) - lam/(2 n_train) ||weights||^2, so the rows of the
        training set sum to -n_train times the gradient of J.
        """
        check_is_fitted(self)
        design = _as_design(X, y)
        n_train = self.n_train_ if n_train is None else n_train
        out = np.empty((design.n, self.score_dim_))
        y = np.asarray(design.y, dtype=np.float64)
        for start, stop, Xb in design.blocks():
            out[start:stop] = self._score_block(Xb, y[start:stop], n_train)
        return out

    def _check_ls(self, design):
        self.ls_ = getattr(design, "ls", None)


class LogisticScoreModel(_ScoreModelBase):
    """L2-penalised logistic regression with Fisher scores for every parameter.

    Parameters
    ----------
    lam : float
        Ridge strength on the weights (bias unpenalised), on the summed
        log-likelihood scale.
    batch_size, sgd_epochs, learning_rate :
        Mini-batch Adam warm start. ``sgd_epochs=0`` goes straight to Newton.
    tol : float
        Stop the full-batch polish when the gradient infinity-norm drops below it.
    max_polish : int
        Cap on Newton iterations.
    random_state : int
    """

    kind = "logistic"

    def __init__(self, lam=1e-4, batch_size=4096, sgd_epochs=1, learning_rate=0.05,
                 tol=1e-6, max_polish=100, random_state=0):
        self.lam = lam
        self.batch_size = batch_size
        self.sgd_epochs = sgd_epochs
        self.learning_rate = learning_rate
        self.tol = tol
        self.max_polish = max_polish
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        design = _as_design(X, y)
        yv = _targets(design)
        n, dx = design.n, design.n_features
        if n < dx + 1:
            raise FitError(f"need at least {dx + 1} samples for {dx + 1} parameters, got {n}")
        lam = float(self.lam)
        rng = check_random_state(self.random_state)
        w = np.zeros(dx)
        b = np.zeros(1)
        # start at the marginal log-odds
        ybar = yv.mean()
        b[0] = math.log(ybar / (1 - ybar))

        def grad_fn(idx):
            Xb = design.rows(idx)
            r = _sigmoid(Xb @ w + b[0]) - yv[idx]
            return [(Xb.T @ r) / len(idx) + lam / n * w, np.array([r.mean()])]

        if self.sgd_epochs:
            _adam([w, b], grad_fn, n, self.batch_size, self.sgd_epochs, self.learning_rate, rng)

        def blocks():
            for start, stop, Xb in design.blocks():
                yield start, stop, np.hstack([Xb, np.ones((stop - start, 1))])

        penal = np.r_[np.ones(dx), 0.0]
        theta, f, g, hist, conv = _newton_polish(
            blocks, yv, n, np.r_[w, b], lam, penal, self.tol, self.max_polish
        )
        if not np.all(np.isfinite(theta)):
            raise FitError("fit diverged: non-finite parameters")
        self.coef_ = theta[:-1].copy()
        self.intercept_ = float(theta[-1])
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = dx
        self.n_train_ = n
        self.score_dim_ = dx + 1
        self._check_ls(design)
        nll = f - 0.5 * lam * float(self.coef_ @ self.coef_) / n
        self.report_ = FitReport(float(nll), float(f), float(np.max(np.abs(g))), len(hist) - 1, conv,
                                 history=hist)
        return self

    @classmethod
    def from_params(cls, coef, intercept, lam=0.0, n_train=1, ls=None):
        """A fitted-looking model with the given parameters (no training)."""
        model = cls(lam=lam)
        model.coef_ = np.asarray(coef, dtype=np.float64).copy()
        model.intercept_ = float(intercept)
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = model.coef_.size
        model.n_train_ = int(n_train)
        model.score_dim_ = model.coef_.size + 1
        model.ls_ = ls
        return model

    @property
    def theta_(self):
        return np.r_[self.coef_, self.intercept_]

    def _logit(self, Xb):
        return Xb @ self.coef_ + self.intercept_

    def objective(self, X, y=None):
        """Training objective J and its gradient in (weights, bias) order."""
        check_is_fitted(self)
        design = _as_design(X, y)
        yv = np.asarray(design.y, dtype=np.float64)
        f = 0.5 * self.lam * float(self.coef_ @ self.coef_)
        g = np.r_[self.lam * self.coef_, 0.0]
        for start, stop, Xb in design.blocks():
            z = self._logit(Xb)
            yb = yv[start:stop]
            f += _nll(z, yb).sum()
            r = _sigmoid(z) - yb
            g[:-1] += Xb.T @ r
            g[-1] += r.sum()
        return f / design.n, g / design.n

    def decision_function(self, X):
        check_is_fitted(self)
        design = _design_rows(self, X)
        return np.concatenate([self._logit(Xb) for _, _, Xb in design.blocks()])

    def _score_block(self, Xb, yb, n_train):
        r = yb - _clip(_sigmoid(self._logit(Xb)))
        s = np.empty((len(Xb), self.score_dim_))
        np.multiply(Xb, r[:, None], out=s[:, :-1])
        s[:, -1] = r
        s[:, :-1] -= (self.lam / n_train) * self.coef_
        return s


class MlpScoreModel(_ScoreModelBase):
    """One-hidden-layer tanh network; scores cover the output layer only.

    The output layer is (n_hidden weights, 1 bias), so scores have dimension
    n_hidden + 1. With ``learning_rate=None`` the Adam step size is chosen
    from (0.1, 0.01, 0.001) by cross-validated balanced accuracy.
    """

    kind = "mlp"

    def __init__(self, n_hidden=10, lam=1e-4, batch_size=4096, sgd_epochs=20,
                 learning_rate=1e-2, tol=1e-6, max_polish=100, cv_folds=3,
                 random_state=0):
        self.n_hidden = n_hidden
        self.lam = lam
        self.batch_size = batch_size
        self.sgd_epochs = sgd_epochs
        self.learning_rate = learning_rate
        self.tol = tol
        self.max_polish = max_polish
        self.cv_folds = cv_folds
        self.random_state = random_state

    def fit(self, X, y=None):
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        design = _as_design(X, y)
        yv = _targets(design)
        lr = self.learning_rate
        tuned = None
        if lr is None:
            best = -1.0
            for cand in MLP_LR_GRID:
                est = self.__class__(**{**self.get_params(), "learning_rate": cand})
                acc = _cv_score(est, design, self.cv_folds, self.random_state)
                if acc > best:
                    best, lr = acc, cand
            tuned = best
        self._fit_with_rate(design, yv, lr)
        self.report_.learning_rate = lr
        if tuned is not None:
            self.report_.cv_balanced_accuracy = tuned
        return self

    def _fit_with_rate(self, design, yv, lr):
        n, dx, k = design.n, design.n_features, int(self.n_hidden)
        if n < k + 1:
            raise FitError(f"need at least {k + 1} samples, got {n}")
        lam = float(self.lam)
        rng = check_random_state(self.random_state)
        bound = math.sqrt(6.0 / (dx + k))
        W1 = rng.uniform(-bound, bound, size=(k, dx))
        b1 = np.zeros(k)
        w2 = rng.uniform(-1, 1, size=k) * math.sqrt(6.0 / (k + 1))
        ybar = yv.mean()
        b2 = np.array([math.log(ybar / (1 - ybar))])

        def grad_fn(idx):
            _, gW1, gb1, gw2, gb2 = _mlp_sums(W1, b1, w2, b2[0], design.rows(idx), yv[idx])
            m = len(idx)
            return [gW1 / m + lam / n * W1, gb1 / m, gw2 / m + lam / n * w2, np.array([gb2 / m])]

        if self.sgd_epochs:
            _adam([W1, b1, w2, b2], grad_fn, n, self.batch_size, self.sgd_epochs, lr, rng)

        def blocks():
            for start, stop, Xb in design.blocks():
                h = np.tanh(Xb @ W1.T + b1)
                yield start, stop, np.hstack([h, np.ones((stop - start, 1))])

        penal = np.r_[np.ones(k), 0.0]
        theta, f, g, hist, conv = _newton_polish(
            blocks, yv, n, np.r_[w2, b2], lam, penal, self.tol, self.max_polish
        )
        if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(W1))):
            raise FitError("fit diverged: non-finite parameters")
        self.hidden_weights_ = W1
        self.hidden_bias_ = b1
        self.output_weights_ = theta[:-1].copy()
        self.output_bias_ = float(theta[-1])
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = dx
        self.n_train_ = n
        self.score_dim_ = k + 1
        self._check_ls(design)
        pen = 0.5 * lam * (np.sum(W1 * W1) + self.output_weights_ @ self.output_weights_) / n
        nll = f - 0.5 * lam * float(self.output_weights_ @ self.output_weights_) / n
        self.report_ = FitReport(float(nll), float(nll + pen), float(np.max(np.abs(g))), len(hist) - 1,
                                 conv, history=hist)
        return self

    @classmethod
    def from_params(cls, hidden_weights, hidden_bias, output_weights, output_bias,
                    lam=0.0, n_train=1, ls=None):
        """A fitted-looking network with the given parameters (no training)."""
        W1 = np.asarray(hidden_weights, dtype=np.float64).copy()
        model = cls(n_hidden=W1.shape[0], lam=lam)
        model.hidden_weights_ = W1
        model.hidden_bias_ = np.asarray(hidden_bias, dtype=np.float64).copy()
        model.output_weights_ = np.asarray(output_weights, dtype=np.float64).copy()
        model.output_bias_ = float(output_bias)
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = W1.shape[1]
        model.n_train_ = int(n_train)
        model.score_dim_ = W1.shape[0] + 1
        model.ls_ = ls
        return model

    def hidden(self, Xb):
        check_is_fitted(self)
        return np.tanh(Xb @ self.hidden_weights_.T + self.hidden_bias_)

    def _logit(self, Xb):
        return self.hidden(Xb) @ self.output_weights_ + self.output_bias_

    @property
    def theta_(self):
        """All parameters flattened: hidden weights, hidden biases, output weights, output bias."""
        return np.r_[self.hidden_weights_.ravel(), self.hidden_bias_, self.output_weights_,
                     self.output_bias_]

    def objective(self, X, y=None):
        """Training objective J and its gradient w.r.t. ``theta_``."""
        check_is_fitted(self)
        design = _as_design(X, y)
        yv = np.asarray(design.y, dtype=np.float64)
        W1, b1, w2 = self.hidden_weights_, self.hidden_bias_, self.output_weights_
        lam = self.lam
        f = 0.5 * lam * (np.sum(W1 * W1) + w2 @ w2)
        gW1, gb1, gw2, gb2 = lam * W1, np.zeros_like(b1), lam * w2, 0.0
        for start, stop, Xb in design.blocks():
            fb, a, b, c, d = _mlp_sums(W1, b1, w2, self.output_bias_, Xb, yv[start:stop])
            f += fb
            gW1 = gW1 + a
            gb1 = gb1 + b
            gw2 = gw2 + c
            gb2 += d
        n = design.n
        return f / n, np.r_[gW1.ravel(), gb1, gw2, gb2] / n

    def _score_block(self, Xb, yb, n_train):
        h = self.hidden(Xb)
        r = yb - _clip(_sigmoid(h @ self.output_weights_ + self.output_bias_))
        s = np.empty((len(Xb), self.score_dim_))
        np.multiply(h, r[:, None], out=s[:, :-1])
        s[:, -1] = r
        s[:, :-1] -= (self.lam / n_train) * self.output_weights_
        return s


MODEL_KINDS = {"logistic": LogisticScoreModel, "mlp": MlpScoreModel}


def make_model(kind, lam=1e-4, opt: OptimizerSettings | None = None, **extra):
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown model kind {kind!r}; choose logistic or mlp") from None
    opt = opt or OptimizerSettings()
    params = {
        "lam": lam,
        "batch_size": opt.batch_size,
        "tol": opt.tol,
        "max_polish": opt.max_polish,
        "random_state": opt.seed,
    }
    if opt.sgd_epochs is not None:
        params["sgd_epochs"] = opt.sgd_epochs
    if opt.learning_rate is not None or kind == "mlp":
        params["learning_rate"] = opt.learning_rate
    params.update(extra)
    return cls(**params)


# --------------------------------------------------------------------------
# functional API


def fit_logistic(ds, lam=1e-4, opt: OptimizerSettings | None = None, cv_folds=None):
    """Fit a logistic model to a dataset; returns (model, report)."""
    model = make_model("logistic", lam, opt).fit(ds)
    if cv_folds:
        model.report_.cv_balanced_accuracy = cv_balanced_accuracy(
            ds, "logistic", cv_folds, lam, opt, seed=(opt or OptimizerSettings()).seed
        )
    return model, model.report_


def fit_mlp(ds, lam=1e-4, opt: OptimizerSettings | None = None, cv_folds=None):
    """Fit the 10-unit network; a None learning rate triggers CV tuning."""
    extra = {"cv_folds": cv_folds or 3}
    model = make_model("mlp", lam, opt, **extra).fit(ds)
    if cv_folds and model.report_.cv_balanced_accuracy is None:
        model.report_.cv_balanced_accuracy = cv_balanced_accuracy(
            ds, "mlp", cv_folds, lam, opt, seed=(opt or OptimizerSettings()).seed,
            learning_rate=model.report_.learning_rate,
        )
    return model, model.report_


def predict_proba(model, x):
    """P(Y=1 | x) for one input vector (float) or a 2-D batch (array)."""
    x = np.asarray(x, dtype=np.float64)
    p = model._proba(x if x.ndim == 2 else x[None, :])
    return p if x.ndim == 2 else float(p[0])


def balanced_accuracy(y_true, y_pred):
    """Mean of the true-positive and true-negative rates."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    n_pos = np.count_nonzero(y_true)
    n_neg = y_true.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("balanced accuracy needs both classes in y_true")
    tpr = np.count_nonzero(y_true & y_pred) / n_pos
    tnr = np.count_nonzero(~y_true & ~y_pred) / n_neg
    return 0.5 * (tpr + tnr)


def _cv_score(estimator, design, folds, seed):
    y = np.asarray(design.y)
    skf = StratifiedKFold(n_splits=int(folds), shuffle=True, random_state=seed)
    accs = []
    for train, test in skf.split(np.zeros(len(y)), y):
        est = estimator.__class__(**estimator.get_params())
        if isinstance(est, MlpScoreModel) and est.learning_rate is None:
            raise ValueError("fix the learning rate before cross-validating")
        est.fit(design.subset(train))
        test_ds = design.subset(test)
        pred = est._proba(test_ds) >= 0.5
        accs.append(balanced_accuracy(np.asarray(test_ds.y), pred))
    return float(np.mean(accs))


def cv_balanced_accuracy(ds, model_kind, folds=5, lam=1e-4, opt=None, seed=0, **extra):
    """Stratified k-fold balanced accuracy at threshold 0.5, averaged over folds.

    `ds` is a NeighborhoodDataset or an ``(X, y)`` pair.
    """
    if int(folds) < 2:
        raise ValueError("folds must be >= 2")
    design = _as_design(*ds) if isinstance(ds, tuple) else _as_design(ds)
    model = make_model(model_kind, lam, opt, **extra)
    if isinstance(model, MlpScoreModel) and model.learning_rate is None:
        model.set_params(learning_rate=1e-2)
    return _cv_score(model, design, folds, seed)


# --------------------------------------------------------------------------
# checkpoints


def save_model(path, model):
    """Write a fitted model as versioned JSON; floats round-trip exactly."""
    check_is_fitted(model)
    record = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.kind,
        "ls": model.ls_,
        "params": model.get_params(),
        "n_train": model.n_train_,
        "n_features": model.n_features_in_,
        "report": asdict(model.report_),
    }
    if model.kind == "logistic":
        record["theta"] = {"coef": model.coef_.tolist(), "intercept": model.intercept_}
    else:
        record["theta"] = {
            "hidden_weights": model.hidden_weights_.tolist(),
            "hidden_bias": model.hidden_bias_.tolist(),
            "output_weights": model.output_weights_.tolist(),
            "output_bias": model.output_bias_,
        }
    with open(path, "w", newline="\n") as fh:
        json.dump(record, fh, indent=1)
        fh.write("\n")


def load_model(path):
    with open(os.fspath(path)) as fh:
        record = json.load(fh)
    if record.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {record.get('version')}")
    model = MODEL_KINDS[record["kind"]](**record["params"])
    th = record["theta"]
    if record["kind"] == "logistic":
        model.coef_ = np.array(th["coef"], dtype=np.float64)
        model.intercept_ = float(th["intercept"])
        model.score_dim_ = model.coef_.size + 1
    else:
        model.hidden_weights_ = np.array(th["hidden_weights"], dtype=np.float64)
        model.hidden_bias_ = np.array(th["hidden_bias"], dtype=np.float64)
        model.output_weights_ = np.array(th["output_weights"], dtype=np.float64)
        model.output_bias_ = float(th["output_bias"])
        model.score_dim_ = model.output_weights_.size + 1
    model.classes_ = np.array([0, 1])
    model.n_features_in_ = record["n_features"]
    model.n_train_ = record["n_train"]
    model.ls_ = record["ls"]
    model.report_ = FitReport(**record["report"])
    return model
