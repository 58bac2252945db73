"""RVE size selection: sweep window sizes and locate the elbow of the D-bar curve."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dataset import extract_dataset
from .micrograph import Micrograph
from .model import FitReport, OptimizerSettings, cv_balanced_accuracy, make_model
from .score import compute_score_field, estimate_covariance, whiten
from .window import sweep_sizes

__all__ = [
    "ElbowError",
    "Elbow",
    "SweepConfig",
    "RveCurve",
    "RveSizeEstimator",
    "default_sizes",
    "linear_sizes",
    "check_sizes",
    "detect_elbow",
    "run_sweep",
]

log = logging.getLogger(__name__)

MIN_SIZES = 4
LOW_CONFIDENCE_DISTANCE = 0.05
THRESHOLD_FRACTION = 0.1
TIE_RTOL = 1e-12


class ElbowError(ValueError):
    pass


def linear_sizes(start, stop, step):
    """start, start+step, ... up to and including stop when it lies on the grid."""
    if step <= 0 or start < 1 or stop < start:
        raise ValueError(f"invalid size range {start}:{stop}:{step}")
    return list(range(int(start), int(stop) + 1, int(step)))


def default_sizes(field_shape, ls, count=12):
    """`count` geometrically spaced sizes from max(8, 2 l_s) to half the field side."""
    lo = max(8, 2 * ls)
    hi = min(field_shape) // 2
    if hi <= lo:
        raise ValueError(f"field {field_shape} is too small for a default size grid starting at {lo}")
    sizes = np.unique(np.rint(np.geomspace(lo, hi, count)).astype(int))
    return [int(s) for s in sizes]


def check_sizes(sizes, field_shape=None):
    sizes = [int(s) for s in sizes]
    if len(sizes) < MIN_SIZES:
        raise ValueError(f"need at least {MIN_SIZES} candidate sizes, got {len(sizes)}")
    if any(b <= a for a, b in zip(sizes, sizes[1:])) or sizes[0] < 1:
        raise ValueError("candidate sizes must be positive and strictly increasing")
    if field_shape is not None and sizes[-1] > min(field_shape):
        raise ValueError(
            f"largest size {sizes[-1]} exceeds the score field ({field_shape[0]}x{field_shape[1]}); "
            f"the largest feasible size is {min(field_shape)}"
        )
    return sizes


# --------------------------------------------------------------------------
# elbow


@dataclass(frozen=True)
class Elbow:
    """Knee of a decreasing curve and the size selected right of it.

    Indices are 0-based. `distances` are perpendicular distances to the
    first-to-last chord after scaling both axes to [0, 1]. `threshold_index`
    is the cross-check rule: the first point at or below 10% of the maximum.
    """

    elbow_index: int
    rve_index: int
    distances: tuple
    max_distance: float
    threshold_index: int
    confidence: str
    notes: tuple = ()


def detect_elbow(sizes, d_bar) -> Elbow:
    x = np.asarray(sizes, dtype=np.float64)
    y = np.asarray(d_bar, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("sizes and d_bar must be 1-D and of equal length")
    k = len(x)
    if k < MIN_SIZES:
        raise ValueError(f"elbow detection needs at least {MIN_SIZES} points, got {k}")
    if not np.all(np.isfinite(y)) or np.any(y < 0):
        raise ValueError("D-bar values must be finite and nonnegative")
    if np.any(np.diff(x) <= 0):
        raise ValueError("sizes must be strictly increasing")
    span = y.max() - y.min()
    if span <= 1e-12 * max(abs(y.max()), np.finfo(float).tiny):
        raise ElbowError("no elbow: curve flat")
    xn = (x - x[0]) / (x[-1] - x[0])
    yn = (y - y.min()) / span
    # distance of (xn, yn) to the line through the first and last points
    dx, dy = xn[-1] - xn[0], yn[-1] - yn[0]
    dist = np.abs(dx * (yn - yn[0]) - dy * (xn - xn[0])) / np.hypot(dx, dy)
    interior = dist[1:-1]
    # first interior point within rounding of the maximum (ties go left)
    elbow = 1 + int(np.argmax(interior >= interior.max() * (1 - TIE_RTOL)))
    rve = min(elbow + 1, k - 1)
    thr = int(np.argmax(y <= THRESHOLD_FRACTION * y.max()))
    notes = []
    if dist[elbow] < LOW_CONFIDENCE_DISTANCE:
        notes.append(f"weak elbow (max normalised chord distance {dist[elbow]:.3g} < {LOW_CONFIDENCE_DISTANCE})")
    if abs(thr - rve) > 1:
        notes.append(
            f"rules disagree: elbow rule selects w={x[rve]:g}, 10%-of-max rule selects w={x[thr]:g}"
        )
    return Elbow(
        elbow_index=elbow,
        rve_index=rve,
        distances=tuple(float(v) for v in dist),
        max_distance=float(dist[elbow]),
        threshold_index=thr,
        confidence="low" if notes else "high",
        notes=tuple(notes),
    )


# --------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class SweepConfig:
    ls: int = 21
    model: str = "logistic"
    lam: float = 1e-4
    opt: OptimizerSettings = field(default_factory=OptimizerSettings)
    a_mode: str = "diag"
    sizes: tuple | None = None
    stride: int = 1
    ridge_eps: float = 1e-8
    cv_folds: int | None = None
    score_dtype: str | None = None


@dataclass
class RveCurve:
    sizes: list
    stats: list  # SizeStatistics per size
    elbow: Elbow
    scale: float
    a_mode: str
    model_kind: str
    micrograph_shape: tuple
    field_shape: tuple
    fit: FitReport | None = None
    mean_score_norm: float | None = None
    size_warning: bool = False
    model: object = None

    @property
    def d_bar(self):
        return [s.d_bar for s in self.stats]

    @property
    def elbow_pixels(self):
        return self.sizes[self.elbow.elbow_index]

    @property
    def rve_pixels(self):
        return self.sizes[self.elbow.rve_index]

    @property
    def rve_physical(self):
        return self.rve_pixels * self.scale

    @property
    def threshold_pixels(self):
        return self.sizes[self.elbow.threshold_index]


def curve_from_stats(stats, scale=1.0, a_mode="diag", model_kind="logistic",
                     micrograph_shape=None, field_shape=None, fit=None, mean_score_norm=None):
    sizes = [s.w for s in stats]
    elbow = detect_elbow(sizes, [s.d_bar for s in stats])
    curve = RveCurve(sizes, list(stats), elbow, float(scale), a_mode, model_kind,
                     micrograph_shape, field_shape, fit, mean_score_norm)
    if micrograph_shape is not None:
        curve.size_warning = curve.rve_pixels > min(micrograph_shape) / 4
    return curve


def run_sweep(m: Micrograph, cfg: SweepConfig = SweepConfig(), keep_model=False) -> RveCurve:
    """Fit, score, whiten and sweep `cfg.sizes` over micrograph `m`.

    With `keep_model` the fitted classifier is attached as ``curve.model``.
    """
    if cfg.a_mode not in ("full", "diag"):
        raise ValueError(f"a_mode must be 'full' or 'diag', got {cfg.a_mode!r}")
    ds = extract_dataset(m, cfg.ls)
    sizes = check_sizes(cfg.sizes if cfg.sizes is not None else default_sizes(ds.interior_shape, cfg.ls),
                        ds.interior_shape)
    log.info("fitting %s model on %d samples (%d features)", cfg.model, ds.n, ds.n_features)
    model = make_model(cfg.model, cfg.lam, cfg.opt).fit(ds)
    report = model.report_
    if cfg.cv_folds and report.cv_balanced_accuracy is None:
        extra = {"learning_rate": report.learning_rate} if cfg.model == "mlp" else {}
        report.cv_balanced_accuracy = cv_balanced_accuracy(
            ds, cfg.model, cfg.cv_folds, cfg.lam, cfg.opt, seed=cfg.opt.seed, **extra
        )
    log.info("scoring %d pixels", ds.n)
    dtype = np.dtype(cfg.score_dtype) if cfg.score_dtype else None
    sf = compute_score_field(ds, model, dtype=dtype)
    mean_norm = float(np.max(np.abs(sf.global_mean)))
    cov = estimate_covariance(sf, cfg.a_mode, cfg.ridge_eps)
    z = whiten(sf, cov, overwrite=True)
    del sf
    log.info("sweeping %d window sizes", len(sizes))
    stats = sweep_sizes(z, sizes, cfg.stride)
    curve = curve_from_stats(stats, m.scale, cfg.a_mode, cfg.model, m.shape,
                             ds.interior_shape, report, mean_norm)
    if keep_model:
        curve.model = model
    return curve


class RveSizeEstimator(BaseEstimator):
    """Estimate the RVE size of a binary micrograph.

    ``fit`` takes a Micrograph or a 2-D 0/1 array (pixel size `scale`) and sets
    ``curve_``, ``rve_pixels_`` and ``rve_physical_``.

    Parameters
    ----------
    ls : int, default 21
        Odd neighbourhood side used to predict each pixel.
    model : {"logistic", "mlp"}
    lam : float
        Ridge strength on the classifier weights.
    a_mode : {"diag", "full"}
        Scaling matrix of the window statistic: the diagonal of the score
        covariance or the full matrix.
    sizes : sequence of int, optional
        Candidate window sizes; by default 12 geometric steps.
    stride : int
        Subsampling of window positions (1 uses every position).
    """

    def __init__(self, ls=21, model="logistic", lam=1e-4, a_mode="diag", sizes=None,
                 stride=1, ridge_eps=1e-8, cv_folds=None, scale=1.0, batch_size=4096,
                 sgd_epochs=None, learning_rate=None, tol=1e-6, max_polish=100,
                 random_state=0):
        self.ls = ls
        self.model = model
        self.lam = lam
        self.a_mode = a_mode
        self.sizes = sizes
        self.stride = stride
        self.ridge_eps = ridge_eps
        self.cv_folds = cv_folds
        self.scale = scale
        self.batch_size = batch_size
        self.sgd_epochs = sgd_epochs
        self.learning_rate = learning_rate
        self.tol = tol
        self.max_polish = max_polish
        self.random_state = random_state

    def _config(self):
        opt = OptimizerSettings(self.batch_size, self.sgd_epochs, self.learning_rate,
                                self.tol, self.max_polish, self.random_state)
        return SweepConfig(ls=self.ls, model=self.model, lam=self.lam, opt=opt,
                           a_mode=self.a_mode,
                           sizes=None if self.sizes is None else tuple(self.sizes),
                           stride=self.stride, ridge_eps=self.ridge_eps, cv_folds=self.cv_folds)

    def fit(self, X, y=None):
        m = X if isinstance(X, Micrograph) else Micrograph(np.asarray(X), self.scale)
        self.curve_ = run_sweep(m, self._config())
        self.rve_pixels_ = self.curve_.rve_pixels
        self.rve_physical_ = self.curve_.rve_physical
        return self

    def curve(self):
        """(sizes, d_bar) of the fitted sweep."""
        check_is_fitted(self)
        return np.array(self.curve_.sizes), np.array(self.curve_.d_bar)


def with_mode(cfg: SweepConfig, a_mode) -> SweepConfig:
    return replace(cfg, a_mode=a_mode)
