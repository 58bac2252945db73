"""Simulation-free RVE size determination for two-phase micrographs.

A pixel classifier is fitted to the micrograph, per-pixel Fisher score
vectors are whitened, and the mean squared norm of moving-window mean scores
is tracked against window size; the RVE size is read off the elbow.
"""
from .dataset import NeighborhoodDataset, extract_dataset
from .generate import GenerationError, GeneratorSpec, generate
from .micrograph import Micrograph, binarize, load_micrograph, otsu_threshold, save_pgm, upsample_nn
from .model import (
    FitError,
    FitReport,
    LogisticScoreModel,
    MlpScoreModel,
    OptimizerSettings,
    cv_balanced_accuracy,
    fit_logistic,
    fit_mlp,
    load_model,
    predict_proba,
    save_model,
)
from .rve import RveCurve, RveSizeEstimator, SweepConfig, detect_elbow, run_sweep
from .score import (
    ScoreCovariance,
    ScoreField,
    ScoreWhitener,
    WhitenedField,
    compute_score_field,
    estimate_covariance,
    score_logistic,
    score_mlp_last_layer,
    whiten,
)
from .window import IntegralField, WindowSpec, build_integral, sweep_size, sweep_sizes, window_mean_at

__version__ = "0.1.0"
