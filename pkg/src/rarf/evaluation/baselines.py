"""Classical forecasters computed from a single station's context."""

from __future__ import annotations

import numpy as np

PERIOD = 24
AR_ORDER = 24
BASELINES = ("last_value", "moving_average", "persistence", "seasonal_naive", "autoreg")


class BaselineError(ValueError):
    pass


def _ctx(context, need: int, name: str) -> np.ndarray:
    x = np.asarray(context, dtype=np.float64).ravel()
    if x.shape[0] < need:
        raise BaselineError(f"{name} needs at least {need} context points, got {x.shape[0]}")
    return x


def last_value(context, horizon: int) -> np.ndarray:
    x = _ctx(context, 1, "last_value")
    return np.full(horizon, x[-1])


def moving_average(context, horizon: int, window: int = PERIOD) -> np.ndarray:
    x = _ctx(context, window, "moving_average")
    return np.full(horizon, x[-window:].mean())


def persistence(context, horizon: int, period: int = PERIOD) -> np.ndarray:
    """The last ``period`` hours tiled forward."""
    x = _ctx(context, period, "persistence")
    return np.resize(x[-period:], horizon)


def seasonal_naive(context, horizon: int, period: int = PERIOD) -> np.ndarray:
    """Value at the same hour of the previous day (repeating once past one period)."""
    x = _ctx(context, period, "seasonal_naive")
    h = np.arange(horizon)
    return x[len(x) - period + (h % period)]


def fit_ar(series, order: int = AR_ORDER) -> np.ndarray:
    """OLS coefficients ``[intercept, phi_1..phi_p]`` with ``phi_1`` on lag 1."""
    x = np.asarray(series, dtype=np.float64).ravel()
    n = x.shape[0] - order
    if n < order + 1:
        raise BaselineError(f"AR({order}) needs at least {2 * order + 1} points, got {x.shape[0]}")
    X = np.ones((n, order + 1))
    for lag in range(1, order + 1):
        X[:, lag] = x[order - lag:order - lag + n]
    coef, *_ = np.linalg.lstsq(X, x[order:], rcond=None)
    return coef


def autoreg(context, horizon: int, order: int = AR_ORDER) -> np.ndarray:
    x = _ctx(context, 2 * order + 1, "autoreg")
    coef = fit_ar(x, order)
    hist = list(x[-order:])
    out = np.empty(horizon)
    for h in range(horizon):
        lags = np.array(hist[::-1][:order])
        out[h] = coef[0] + coef[1:] @ lags
        hist.append(out[h])
    return out


def run_baselines(context, horizon: int, names=BASELINES) -> dict[str, np.ndarray]:
    fns = {"last_value": last_value, "moving_average": moving_average, "persistence": persistence,
           "seasonal_naive": seasonal_naive, "autoreg": autoreg}
    out = {}
    for n in names:
        if n not in fns:
            raise BaselineError(f"unknown baseline {n!r}")
        out[n] = fns[n](context, horizon)
    return out
