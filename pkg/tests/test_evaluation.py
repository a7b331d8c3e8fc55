import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import ar_normal_equations, crps_monte_carlo, crps_quadrature, loop_metrics
from rarf.data import Dataset, Station, StationSeries
from rarf.evaluation import (
    BASELINES,
    BaselineError,
    MetricError,
    autoreg,
    build_report,
    corr_vs_distance,
    coverage,
    crps_gaussian,
    decorrelation_distance,
    evaluate_model,
    fit_ar,
    freeze_f1,
    last_value,
    mase,
    metrics_point,
    moving_average,
    pearson,
    persistence,
    rows_to_csv,
    run_baselines,
    seasonal_naive,
    sweep,
    wind_speed_mph,
)
from rarf.forecaster import Forecaster, ModelConfig, location_stats, valid_requests

finite = st.floats(-100, 100, allow_nan=False)


# -- point metrics -------------------------------------------------------------
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=40))
def test_point_metrics_match_loops(pairs):
    p, t = np.array(pairs).T
    got = metrics_point(p, t)
    if np.all(np.abs(t) < 1.0):
        assert math.isnan(got["mape"]) and got["excluded"] == len(t)
        return
    ref = loop_metrics(p, t)
    for k in ref:
        assert got[k] == pytest.approx(ref[k], rel=1e-9, abs=1e-12)
    assert 0 <= got["smape"] <= 200 and got["mape"] >= 0 and got["mse"] >= 0


def test_constant_error_mse_is_mae_squared():
    m = metrics_point(np.full(10, 52.0), np.full(10, 50.0))
    assert m["mse"] == pytest.approx(m["mae"] ** 2)


def test_metric_alignment_errors():
    with pytest.raises(MetricError):
        metrics_point([1.0], [1.0, 2.0])
    with pytest.raises(MetricError):
        metrics_point([], [])


def test_mase_cases():
    rng = np.random.default_rng(0)
    base = rng.normal(size=24) * 5 + 50
    days = 10
    # periodic day pattern plus an offset alternating in sign day by day
    x = np.concatenate([base + (1.5 if d % 2 else -1.5) for d in range(days)])
    train, test = x[:-24], x[-24:]
    assert mase(seasonal_naive(train, 24), test, train) == pytest.approx(1.0, rel=1e-12)
    assert mase(test, test, train) == 0.0
    with pytest.raises(MetricError, match="zero"):
        mase(test, test, np.tile(base, 3))
    with pytest.raises(MetricError, match="more than"):
        mase(test, test, base)


# -- probabilistic metrics -----------------------------------------------------
def test_crps_standard_normal_at_mean():
    oracle = crps_quadrature(0.0, 1.0, 0.0)
    assert oracle == pytest.approx(0.23369, abs=1e-4)
    assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(oracle, abs=1e-9)
    assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(2 / math.sqrt(2 * math.pi) - 1 / math.sqrt(math.pi))
    assert crps_gaussian(0.0, 1.0, 0.0) == pytest.approx(crps_monte_carlo(0.0, 1.0, 0.0), abs=3e-3)


@given(finite, st.floats(0.1, 10), finite)
def test_crps_matches_quadrature_and_bound(mu, sigma, y):
    c = crps_gaussian(mu, sigma, y)
    assert c == pytest.approx(crps_quadrature(mu, sigma, y), abs=1e-6, rel=1e-6)
    assert 0 <= c <= abs(y - mu) + sigma


@given(finite, st.floats(0.1, 10), finite, st.floats(0.01, 100))
def test_crps_scales_linearly(mu, sigma, y, lam):
    assert crps_gaussian(lam * mu, lam * sigma, lam * y) == pytest.approx(lam * crps_gaussian(mu, sigma, y),
                                                                          rel=1e-9, abs=1e-9)


def test_crps_degenerate_and_errors():
    assert crps_gaussian(3.0, 1e-12, 3.0) < 1e-9
    with pytest.raises(MetricError):
        crps_gaussian(0.0, 0.0, 0.0)


def test_coverage_cases():
    mu, sd = np.zeros(5), np.ones(5)
    assert coverage(mu, sd, mu) == 1.0
    assert coverage(mu, sd, mu + 10 * sd) == 0.0
    rng = np.random.default_rng(0)
    n = 100_000
    mu, sd = rng.normal(size=n) * 3, rng.uniform(0.5, 2.0, size=n)
    y = mu + sd * rng.normal(size=n)
    assert 0.945 <= coverage(mu, sd, y) <= 0.955


# -- weather-derived scores ----------------------------------------------------
def test_wind_speed():
    assert wind_speed_mph(0.0, 0.0) == 0.0
    assert wind_speed_mph(3.0, 4.0) == pytest.approx(11.18468, abs=1e-4)
    np.testing.assert_allclose(wind_speed_mph(np.array([3.0, -3.0]), np.array([4.0, -4.0])), 11.184681, atol=1e-5)


def test_freeze_f1_cases():
    truth = np.array([40.0, 30.0, 20.0, 45.0])
    assert freeze_f1(truth, truth) == 1.0
    assert freeze_f1(np.full(4, 50.0), truth) == 0.0
    pred = np.array([40.0, 31.0, 31.0, 40.0, 40.0])
    tru = np.array([40.0, 40.0, 31.0, 31.0, 40.0])
    assert freeze_f1(pred, tru) == pytest.approx(0.5)
    # exactly at the threshold does not count as freezing
    assert freeze_f1(np.array([32.0]), np.array([31.0])) == 0.0


@given(st.integers(1, 20))
def test_freeze_f1_tn_padding_invariant(n):
    pred = np.array([40.0, 31.0, 31.0, 40.0])
    tru = np.array([40.0, 40.0, 31.0, 31.0])
    pad = np.full(n, 60.0)
    assert freeze_f1(np.r_[pred, pad], np.r_[tru, pad]) == freeze_f1(pred, tru)


# -- baselines -------------------------------------------------------------------
def test_simple_baselines():
    ctx = np.arange(48.0)
    np.testing.assert_array_equal(last_value(ctx, 3), [47, 47, 47])
    np.testing.assert_array_equal(moving_average(ctx, 2), [35.5, 35.5])
    np.testing.assert_array_equal(persistence(ctx, 30), np.r_[np.arange(24, 48), np.arange(24, 30)])
    np.testing.assert_array_equal(seasonal_naive(ctx, 26), np.r_[np.arange(24, 48), 24, 25])
    out = run_baselines(np.r_[ctx, ctx], 5)
    assert set(out) == set(BASELINES) and all(v.shape == (5,) for v in out.values())
    with pytest.raises(BaselineError, match="needs at least"):
        persistence(np.arange(10.0), 3)
    with pytest.raises(BaselineError, match="unknown"):
        run_baselines(ctx, 3, ["arima"])


def test_ar_matches_normal_equations():
    rng = np.random.default_rng(1)
    x = np.zeros(400)
    for t in range(2, 400):
        x[t] = 0.6 * x[t - 1] - 0.2 * x[t - 2] + 1.0 + rng.normal()
    np.testing.assert_allclose(fit_ar(x, 2), ar_normal_equations(x, 2), rtol=1e-8)
    np.testing.assert_allclose(fit_ar(x, 24), ar_normal_equations(x, 24), rtol=1e-6, atol=1e-9)
    # a noiseless AR(1) is recovered and extrapolated exactly
    y = 5.0 * 0.9 ** np.arange(60) + 2.0
    f = autoreg(y, 4, order=1)
    np.testing.assert_allclose(f, 5.0 * 0.9 ** np.arange(60, 64) + 2.0, rtol=1e-8)


# -- correlation analysis --------------------------------------------------------
def _noise_ds(n_st, n_hours, seed):
    rng = np.random.default_rng(seed)
    stations, records = {}, {}
    for i in range(n_st):
        sid = f"W{i:03d}"
        stations[sid] = Station(sid, 45.0 + 0.01 * i, -120.0, 0.0)
        records[sid] = StationSeries(np.arange(n_hours, dtype=np.int64), rng.normal(size=(n_hours, 5)))
    return Dataset(stations, records)


def test_self_correlation_is_one(small_ds):
    rows = corr_vs_distance(small_ds, pairs=[("ST000", "ST000")])
    assert len(rows) == 3 and all(r["r"] == pytest.approx(1.0) and r["distance_km"] == 0 for r in rows)


def test_white_noise_correlation_small():
    ds = _noise_ds(15, 1024, 0)
    rows = corr_vs_distance(ds, n_pairs=100, seed=1)
    assert len(rows) == 300
    assert np.mean([abs(r["r"]) for r in rows]) < 0.1
    assert rows_to_csv(rows).count("\n") == 301


def test_pearson_and_decorrelation_interpolation():
    assert pearson(np.arange(5.0), 2 * np.arange(5.0) + 1) == pytest.approx(1.0)
    assert math.isnan(pearson(np.ones(4), np.arange(4.0)))
    rows = [{"band": "fast", "distance_km": 15.0, "r": 0.8}, {"band": "fast", "distance_km": 25.0, "r": 0.2}]
    assert decorrelation_distance(rows, "fast") == pytest.approx(20.0)
    assert decorrelation_distance(rows[:1], "fast") == math.inf
    assert math.isnan(decorrelation_distance(rows, "slow"))


# -- reports and sweeps ----------------------------------------------------------
def test_report_averages_are_station_means():
    rng = np.random.default_rng(0)
    mu, y = rng.normal(size=(6, 8)) + 50, rng.normal(size=(6, 8)) + 50
    var = rng.uniform(0.5, 2, size=(6, 8))
    ids = ["A", "A", "B", "B", "B", "C"]
    rep = build_report(ids, mu, y, var)
    for k, v in rep.average.items():
        assert v == pytest.approx(np.mean([s[k] for s in rep.per_station.values()]))
    a = metrics_point(mu[:2], y[:2])
    assert rep.per_station["A"]["mse"] == pytest.approx(a["mse"])
    np.testing.assert_allclose(rep.per_hour["mse"], np.mean([np.mean((mu[m] - y[m]) ** 2, axis=0) for m in
                               (slice(0, 2), slice(2, 5), slice(5, 6))], axis=0))
    assert rep.dumps() == build_report(ids, mu, y, var).dumps()
    assert rep.per_hour_csv().count("\n") == 9 and rep.per_station_csv().count("\n") == 4


def test_sweeps(small_data, small_split):
    c, s = location_stats(small_data.reg_stations)
    cfg = ModelConfig(context_len=32, horizon_len=16, d_model=8, d_loc=8, layers=1, d_ff=16, transfer="fc",
                      band_ks=(3, 6, 9), loc_center=c, loc_scale=s)
    model = Forecaster(cfg)
    reqs = valid_requests(small_data, cfg, small_split.test_station_ids, [small_data.start + 200])
    full = evaluate_model(model, small_data, reqs)
    hz, notes = sweep(model, small_data, reqs, "horizon", [8, 16, 20])
    assert sorted(hz) == [8, 16] and len(notes) == 1
    assert hz[16].dumps() == full.dumps()
    np.testing.assert_allclose(hz[8].per_hour["mse"], hz[16].per_hour["mse"][:8])
    cx, notes = sweep(model, small_data, reqs, "context_len", [32, 12, 8, 0])
    assert sorted(cx) == [0, 8, 32] and "12" in notes[0]
    assert cx[32].per_station == full.per_station
    with pytest.raises(ValueError, match="axis"):
        sweep(model, small_data, reqs, "stride", [1])
