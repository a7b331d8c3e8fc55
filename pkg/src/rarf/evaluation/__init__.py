"""Metrics, baselines, correlation analysis and sweeps."""

from .analysis import MIN_OVERLAP, binned_correlation, corr_vs_distance, decorrelation_distance, pearson, rows_to_csv
from .baselines import (
    AR_ORDER,
    BASELINES,
    BaselineError,
    autoreg,
    fit_ar,
    last_value,
    moving_average,
    persistence,
    run_baselines,
    seasonal_naive,
)
from .metrics import (
    FREEZE_F,
    MAPE_GUARD_F,
    MPH_PER_MS,
    Z975,
    MetricError,
    coverage,
    crps_gaussian,
    freeze_f1,
    gaussian_nll,
    mase,
    metrics_point,
    seasonal_naive_scale,
    wind_speed_mph,
)
from .report import SWEEP_AXES, MetricReport, build_report, evaluate_model, sweep

__all__ = [
    "AR_ORDER", "BASELINES", "BaselineError", "FREEZE_F", "MAPE_GUARD_F", "MIN_OVERLAP", "MPH_PER_MS",
    "MetricError", "MetricReport", "SWEEP_AXES", "Z975", "autoreg", "binned_correlation", "build_report", "corr_vs_distance",
    "coverage", "crps_gaussian", "decorrelation_distance", "evaluate_model", "fit_ar", "freeze_f1",
    "gaussian_nll", "last_value", "mase", "metrics_point", "moving_average", "pearson", "persistence",
    "rows_to_csv", "run_baselines", "seasonal_naive", "seasonal_naive_scale", "sweep", "wind_speed_mph",
]
