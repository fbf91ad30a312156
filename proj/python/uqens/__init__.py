"""Uncertainty-weighted ensembles of Monte Carlo dropout networks."""

from ._uqens import (
    ConfigError,
    NumericError,
    ShapeError,
    binary_metrics,
    class_weights,
    cohen_kappa,
    combined_uncertainty,
    conv2d,
    ensemble_scores,
    evaluate,
    multiclass_metrics,
    predict,
    resize,
    roc_curve,
    standardize,
    stratified_folds,
    synth,
    synth_generate,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
