"""Point and probabilistic forecast metrics plus weather-derived scores."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import ndtr

Z975 = 1.959964
MPH_PER_MS = 3600.0 / 1609.344
FREEZE_F = 32.0
MAPE_GUARD_F = 1.0


class MetricError(ValueError):
    pass


def _pair(preds, truths) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(truths, dtype=np.float64)
    if p.shape != t.shape:
        raise MetricError(f"predictions {p.shape} and truths {t.shape} are not aligned")
    if p.size == 0:
        raise MetricError("empty series")
    return p, t


def metrics_point(preds, truths, guard: float = MAPE_GUARD_F) -> dict[str, float]:
    """MSE, MAE, MAPE and sMAPE (percent).

    Points with ``|truth| < guard`` are left out of MAPE and sMAPE; their
    count is returned as ``excluded``.
    """
    p, t = _pair(preds, truths)
    e = p - t
    keep = np.abs(t) >= guard
    out = {"mse": float(np.mean(e * e)), "mae": float(np.mean(np.abs(e))), "excluded": int((~keep).sum())}
    if keep.any():
        ek, tk, pk = e[keep], t[keep], p[keep]
        out["mape"] = float(100.0 * np.mean(np.abs(ek) / np.abs(tk)))
        den = np.abs(tk) + np.abs(pk)
        out["smape"] = float(100.0 * np.mean(2.0 * np.abs(ek) / den))
    else:
        out["mape"] = out["smape"] = float("nan")
    return out


def seasonal_naive_scale(train_series, period: int = 24) -> float:
    x = np.asarray(train_series, dtype=np.float64)
    if x.shape[0] <= period:
        raise MetricError(f"training series needs more than {period} points, got {x.shape[0]}")
    return float(np.mean(np.abs(x[period:] - x[:-period])))


def mase(preds, truths, train_series, period: int = 24) -> float:
    p, t = _pair(preds, truths)
    scale = seasonal_naive_scale(train_series, period)
    if scale == 0:
        raise MetricError("seasonal-naive in-sample error is zero; MASE undefined")
    return float(np.mean(np.abs(p - t)) / scale)


def crps_gaussian(mu, sigma, y) -> np.ndarray | float:
    """Closed-form CRPS of N(mu, sigma^2) at ``y`` (elementwise)."""
    mu, sigma, y = (np.asarray(v, dtype=np.float64) for v in (mu, sigma, y))
    if np.any(~(sigma > 0)):
        raise MetricError("sigma must be strictly positive")
    z = (y - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    out = sigma * (z * (2.0 * ndtr(z) - 1.0) + 2.0 * pdf - 1.0 / math.sqrt(math.pi))
    return float(out) if out.ndim == 0 else out


def gaussian_nll(mu, var, y) -> float:
    """0.5 * sum(log var + (y - mu)^2 / var) over all points."""
    mu, var, y = (np.asarray(v, dtype=np.float64) for v in (mu, var, y))
    if np.any(~(var > 0)):
        raise MetricError("variance must be strictly positive")
    return float(0.5 * np.sum(np.log(var) + (y - mu) ** 2 / var))


def coverage(mu, sigma, truths, z: float = Z975) -> float:
    """Fraction of truths inside ``mu +- z * sigma``."""
    mu, sigma, t = (np.asarray(v, dtype=np.float64) for v in (mu, sigma, truths))
    if t.size == 0:
        raise MetricError("empty series")
    return float(np.mean(np.abs(t - mu) <= z * sigma))


def wind_speed_mph(u, v):
    speed = np.hypot(np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)) * MPH_PER_MS
    return float(speed) if speed.ndim == 0 else speed


def freeze_f1(pred_f, truth_f, threshold: float = FREEZE_F) -> float:
    p, t = _pair(pred_f, truth_f)
    pf, tf = p < threshold, t < threshold
    tp = int(np.sum(pf & tf))
    fp = int(np.sum(pf & ~tf))
    fn = int(np.sum(~pf & tf))
    if tp == 0:
        return 0.0
    precision, recall = tp / (tp + fp), tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)
