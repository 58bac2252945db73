"""Fisher score fields, their covariance, and whitening.

The window statistic D = (m - mbar)' A^{-1} (m - mbar) for a window-mean score
m equals ||L^{-1}(m - mbar)||^2 with A = L L'. Because L^{-1} is linear it
commutes with window averaging, so the whole field is whitened once and every
window statistic becomes a plain squared norm of a window mean.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataset import NeighborhoodDataset
from .model import FitError, LogisticScoreModel, MlpScoreModel, _clip, _sigmoid

__all__ = [
    "DegenerateScoreError",
    "ScoreField",
    "ScoreCovariance",
    "WhitenedField",
    "ScoreWhitener",
    "score_logistic",
    "score_mlp_last_layer",
    "compute_score_field",
    "estimate_covariance",
    "whiten",
    "save_score_field",
    "load_score_field",
]

BLOCK_ROWS = 1 << 14
# fields with more entries than this are stored in float32
FLOAT32_THRESHOLD = 50_000_000


class DegenerateScoreError(FitError):
    pass


# --------------------------------------------------------------------------
# per-sample scores


def score_logistic(model: LogisticScoreModel, x, y, n=None):
    """Score of one sample: (y - p) * (x, 1) - (lam/n) * (w, 0).

    `n` is the training-set size used to share the ridge penalty across
    samples; it defaults to the size the model was fitted on.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features_in_,):
        raise ValueError(f"expected a vector of length {model.n_features_in_}, got shape {x.shape}")
    n = model.n_train_ if n is None else n
    p = _clip(_sigmoid(np.array([x @ model.coef_ + model.intercept_])))[0]
    s = (y - p) * np.r_[x, 1.0]
    s[:-1] -= (model.lam / n) * model.coef_
    return s


def score_mlp_last_layer(model: MlpScoreModel, x, y, n=None):
    """Score w.r.t. the output layer only: (y - p) * (h, 1) - (lam/n) * (w_out, 0)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_features_in_,):
        raise ValueError(f"expected a vector of length {model.n_features_in_}, got shape {x.shape}")
    n = model.n_train_ if n is None else n
    h = model.hidden(x[None, :])[0]
    p = _clip(_sigmoid(np.array([h @ model.output_weights_ + model.output_bias_])))[0]
    s = (y - p) * np.r_[h, 1.0]
    s[:-1] -= (model.lam / n) * model.output_weights_
    return s


# --------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class ScoreField:
    """Score vectors laid out on the interior grid, shape (H', W', d)."""

    scores: np.ndarray
    global_mean: np.ndarray

    @property
    def shape(self):
        return self.scores.shape[:2]

    @property
    def d(self):
        return self.scores.shape[2]

    @property
    def n(self):
        return self.shape[0] * self.shape[1]

    def flat(self):
        return self.scores.reshape(self.n, self.d)


def _mean64(flat):
    total = np.zeros(flat.shape[1])
    for start in range(0, len(flat), BLOCK_ROWS):
        total += flat[start : start + BLOCK_ROWS].sum(axis=0, dtype=np.float64)
    return total / len(flat)


def compute_score_field(ds: NeighborhoodDataset, model, dtype=None) -> ScoreField:
    """Scores of every interior pixel of `ds` under a model fitted on `ds`.

    `dtype` defaults to float64, or float32 when the field would exceed
    FLOAT32_THRESHOLD entries. The global mean is accumulated in float64 from
    the stored values.
    """
    if not isinstance(ds, NeighborhoodDataset):
        raise TypeError("compute_score_field needs a NeighborhoodDataset")
    check_is_fitted(model)
    ls = getattr(model, "ls_", None)
    if ls is not None and ls != ds.ls:
        raise ValueError(f"model was fitted with l_s={ls} but the dataset uses l_s={ds.ls}")
    if model.n_features_in_ != ds.n_features:
        raise ValueError(f"model expects {model.n_features_in_} features, dataset has {ds.n_features}")
    if ds.n != ds.n_total:
        raise ValueError("score fields need the full interior dataset, not a subset")
    d = model.score_dim_
    if dtype is None:
        dtype = np.float32 if ds.n * d > FLOAT32_THRESHOLD else np.float64
    hi, wi = ds.interior_shape
    scores = np.empty((hi, wi, d), dtype=dtype)
    flat = scores.reshape(ds.n, d)
    y = ds.y.astype(np.float64)
    for start, stop, Xb in ds.blocks():
        flat[start:stop] = model._score_block(Xb, y[start:stop], model.n_train_)
    if not np.all(np.isfinite(flat)):
        raise FitError("non-finite score vectors")
    return ScoreField(scores, _mean64(flat))


# --------------------------------------------------------------------------
# covariance and whitening


@dataclass(frozen=True, eq=False)
class ScoreCovariance:
    """Scaling matrix A for the window statistic.

    `sample_cov` is the 1/n sample covariance; `ridge` the jitter actually
    applied. In full mode `factor` is the lower Cholesky factor of
    sample_cov + ridge*I; in diag mode `factor` holds the per-component
    standard deviations after flooring the variances at `ridge`.
    """

    mode: str
    mean: np.ndarray
    sample_cov: np.ndarray
    ridge: float
    factor: np.ndarray

    @property
    def d(self):
        return len(self.mean)

    @property
    def matrix(self):
        """The effective A (d x d)."""
        if self.mode == "full":
            return self.sample_cov + self.ridge * np.eye(self.d)
        return np.diag(self.factor**2)


def _as_flat(field):
    if isinstance(field, ScoreField):
        return field.flat(), field.global_mean
    arr = np.asarray(field)
    flat = arr.reshape(-1, arr.shape[-1])
    return flat, _mean64(flat)


def estimate_covariance(field, mode="diag", ridge_eps=1e-8) -> ScoreCovariance:
    """Sample covariance (1/n) sum (s_i - mean)(s_i - mean)' and its factor."""
    if mode not in ("full", "diag"):
        raise ValueError(f"mode must be 'full' or 'diag', got {mode!r}")
    if ridge_eps < 0:
        raise ValueError("ridge_eps must be >= 0")
    flat, mean = _as_flat(field)
    n, d = flat.shape
    if n < 2:
        raise ValueError("covariance needs at least two score vectors")
    cov = np.zeros((d, d))
    for start in range(0, n, BLOCK_ROWS):
        c = flat[start : start + BLOCK_ROWS].astype(np.float64) - mean
        cov += c.T @ c
    cov /= n
    cov = 0.5 * (cov + cov.T)
    trace = float(np.trace(cov))
    if not trace > 0:
        raise DegenerateScoreError("degenerate score field: all score vectors are identical")
    ridge = ridge_eps * trace / d
    if mode == "diag":
        var = np.maximum(np.diag(cov), ridge)
        return ScoreCovariance("diag", mean, cov, ridge, np.sqrt(var))
    try:
        L = linalg.cholesky(cov + ridge * np.eye(d), lower=True)
    except linalg.LinAlgError:
        raise DegenerateScoreError(
            "Cholesky factorisation failed after ridge; use diagonal scaling (--a diag) "
            "or a larger ridge_eps"
        ) from None
    return ScoreCovariance("full", mean, cov, ridge, L)


@dataclass(frozen=True, eq=False)
class WhitenedField:
    z: np.ndarray
    mode: str

    @property
    def shape(self):
        return self.z.shape[:2]

    @property
    def d(self):
        return self.z.shape[2]


def _whiten_rows(rows, cov):
    c = rows.astype(np.float64) - cov.mean
    if cov.mode == "diag":
        return c / cov.factor
    return linalg.solve_triangular(cov.factor, c.T, lower=True, check_finite=False).T


def whiten(field, cov: ScoreCovariance, overwrite=False) -> WhitenedField:
    """z_i = L^{-1}(s_i - mean), or (s_i - mean)/std per component in diag mode.

    With `overwrite` the score array is reused for z (it keeps its dtype).
    """
    scores = field.scores if isinstance(field, ScoreField) else np.asarray(field)
    if scores.shape[-1] != cov.d:
        raise ValueError(f"field has d={scores.shape[-1]} but covariance has d={cov.d}")
    out = scores if overwrite else np.empty(scores.shape, dtype=scores.dtype)
    src = scores.reshape(-1, cov.d)
    dst = out.reshape(-1, cov.d)
    for start in range(0, len(src), BLOCK_ROWS):
        dst[start : start + BLOCK_ROWS] = _whiten_rows(src[start : start + BLOCK_ROWS], cov)
    return WhitenedField(out, cov.mode)


class ScoreWhitener(TransformerMixin, BaseEstimator):
    """Centre score vectors on their mean and whiten them.

    Parameters
    ----------
    mode : {"diag", "full"}
        ``"diag"`` scales each component by its standard deviation, ``"full"``
        applies the inverse Cholesky factor of the sample covariance.
    ridge_eps : float
        Jitter relative to the mean eigenvalue (trace / d).
    """

    def __init__(self, mode="diag", ridge_eps=1e-8):
        self.mode = mode
        self.ridge_eps = ridge_eps

    def fit(self, S, y=None):
        if not isinstance(S, ScoreField):
            S = check_array(S, dtype=[np.float64, np.float32])
        self.covariance_ = estimate_covariance(S, self.mode, self.ridge_eps)
        self.mean_ = self.covariance_.mean
        self.n_features_in_ = self.covariance_.d
        return self

    def transform(self, S):
        check_is_fitted(self)
        if isinstance(S, ScoreField):
            return whiten(S, self.covariance_).z
        S = check_array(S, dtype=[np.float64, np.float32])
        return whiten(S, self.covariance_).z

    def mahalanobis(self, M):
        """(m - mean)' A^{-1} (m - mean) for each row of M, by direct solve."""
        check_is_fitted(self)
        c = np.atleast_2d(M) - self.mean_
        sol = linalg.solve(self.covariance_.matrix, c.T, assume_a="pos")
        return np.sum(c.T * sol, axis=0)


# --------------------------------------------------------------------------
# debug dump: b"RVSF", u16 version, 2-char dtype, u64 H, W, d, then row-major data

_DUMP_MAGIC = b"RVSF"
_DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sH2sQQQ")
_DTYPES = {b"f4": np.dtype("<f4"), b"f8": np.dtype("<f8")}


def save_score_field(path, field: ScoreField):
    code = b"f4" if field.scores.dtype == np.float32 else b"f8"
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(_DUMP_HEADER.pack(_DUMP_MAGIC, _DUMP_VERSION, code, h, w, field.d))
        fh.write(np.ascontiguousarray(field.scores, dtype=_DTYPES[code]).tobytes())


def load_score_field(path) -> ScoreField:
    with open(path, "rb") as fh:
        head = fh.read(_DUMP_HEADER.size)
        if len(head) != _DUMP_HEADER.size:
            raise ValueError(f"{path}: truncated score-field header")
        magic, version, code, h, w, d = _DUMP_HEADER.unpack(head)
        if magic != _DUMP_MAGIC:
            raise ValueError(f"{path}: not a score-field dump")
        if version != _DUMP_VERSION:
            raise ValueError(f"{path}: unsupported score-field version {version}")
        dt = _DTYPES[code]
        data = np.frombuffer(fh.read(), dtype=dt)
    if data.size != h * w * d:
        raise ValueError(f"{path}: expected {h * w * d} values, found {data.size}")
    scores = data.reshape(h, w, d).astype(dt.newbyteorder("="))
    return ScoreField(scores, _mean64(scores.reshape(-1, d)))
