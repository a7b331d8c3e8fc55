import numpy as np
import pytest

from gradcheck import BLOCKS, TOL, _cfg, toy_batch
from rarf.data import Station
from rarf.diffcore import Checkpoint
from rarf.forecaster import (
    Forecaster,
    GaussianForecast,
    ModelConfig,
    ModelError,
    Request,
    TransferError,
    assemble,
    band_inputs,
    build_transfer,
    forecast_zero_shot,
    gnn_adjacency,
    idw_weights,
    location_stats,
    predict_requests,
    valid_requests,
)
from rarf.multires import BandSpec, decompose
from rarf.retrieval import RetrievalConfig


@pytest.mark.parametrize("block", sorted(BLOCKS))
def test_block_gradients(block):
    for seed in range(2):
        assert BLOCKS[block](seed) < TOL


def test_idw_weights_are_normalised_inverse_distance():
    d = np.array([[1.0, 3.0, 9.0]])
    w = idw_weights(d, eps=0.0)
    np.testing.assert_allclose(w, (1 / d) / (1 / d).sum())
    np.testing.assert_allclose(idw_weights(d).sum(), 1.0)


def test_gnn_adjacency_symmetric_normalised():
    pair = np.array([[[0.0, 10.0], [10.0, 0.0]]])
    a = gnn_adjacency(pair, 10.0)
    w = np.exp(-1.0)
    np.testing.assert_allclose(a[0], np.array([[1, w], [w, 1]]) / (1 + w))


def test_band_inputs_match_decompose():
    cfg = ModelConfig(context_len=32, horizon_len=16)
    ctx = np.random.default_rng(0).normal(size=(2, 32, 5))
    out = band_inputs(ctx, cfg)
    bs = decompose(ctx[1], BandSpec(3))
    np.testing.assert_allclose(out["fast"][1], bs.coeffs["d1"], atol=1e-12)
    np.testing.assert_allclose(out["slow"][1][:, :5], bs.coeffs["d3"], atol=1e-12)
    np.testing.assert_allclose(out["slow"][1][:, 5:], bs.coeffs["a3"], atol=1e-12)


def test_forward_shapes_all_transfers():
    for kind in ("fc", "gnn", "loc_attn", "none"):
        cfg = _cfg(transfer=kind, band_ks=(2, 3, 4) if kind != "none" else (10, 25, 50))
        model = Forecaster(cfg)
        mu, var = model.forward(toy_batch(cfg, 0))
        assert mu.shape == (2, cfg.horizon_len) and var is None
        if kind != "none":
            assert model.calls == [("fast", 2), ("moderate", 3), ("slow", 4)]


def test_probabilistic_variance_positive():
    cfg = _cfg(probabilistic=True)
    mu, var = Forecaster(cfg).forward(toy_batch(cfg, 1))
    assert var.shape == mu.shape and np.all(var.data > 0)


def test_level_zero_model_and_zero_context():
    cfg = _cfg(levels=0, band_ks=(3,), transfer="loc_attn")
    model = Forecaster(cfg)
    mu, _ = model.forward(toy_batch(cfg, 2))
    assert np.all(np.isfinite(mu.data))
    for kind in ("fc", "gnn", "loc_attn"):
        cfg = _cfg(transfer=kind)
        mu, _ = Forecaster(cfg).forward(toy_batch(cfg, 3, lc=0))
        assert np.all(np.isfinite(mu.data))
    cfg = _cfg(transfer="none", band_ks=(10, 25, 50))
    mu, _ = Forecaster(cfg).forward(toy_batch(cfg, 3, lc=8))
    assert np.all(np.isfinite(mu.data))


def test_same_seed_same_output_and_checkpoint_roundtrip():
    cfg = _cfg(transfer="gnn")
    a, b = Forecaster(cfg), Forecaster(cfg)
    batch = toy_batch(cfg, 4)
    np.testing.assert_array_equal(a.forward(batch)[0].data, b.forward(batch)[0].data)
    ck = Checkpoint.from_bytes(a.checkpoint({"t2m": (1.0, 2.0)}).to_bytes())
    c = Forecaster.from_checkpoint(ck)
    assert c.cfg == cfg
    np.testing.assert_array_equal(c.forward(batch)[0].data, a.forward(batch)[0].data)
    assert set(c.transfer_names()) == {n for n in c.store.names() if ".transfer." in n}


def test_config_validation():
    with pytest.raises(ModelError, match="divisible"):
        ModelConfig(context_len=20)
    with pytest.raises(ModelError, match="strictly increasing"):
        ModelConfig(band_ks=(50, 25, 10))
    with pytest.raises(ModelError, match="one k per band"):
        ModelConfig(band_ks=(10, 25))
    with pytest.raises(ModelError, match="unknown transfer"):
        ModelConfig(transfer="rnn")
    with pytest.raises(ModelError, match="unknown model config keys"):
        ModelConfig.from_json({"levels": 3, "colour": 1})
    with pytest.raises(TransferError):
        build_transfer("rnn", None, "x", 4, 4, 4, None)


def test_gaussian_forecast_interval():
    f = GaussianForecast(np.array([0.0]), np.array([4.0]))
    lo, hi = f.interval()
    assert hi[0] == pytest.approx(2 * 1.959964)
    with pytest.raises(ModelError):
        GaussianForecast(np.zeros(1), np.zeros(1))


# -- pipeline on the small synthetic dataset ----------------------------------
def _small_cfg(data, **kw):
    c, s = location_stats(data.reg_stations)
    base = dict(context_len=32, horizon_len=16, d_model=8, d_loc=8, layers=1, d_ff=16, transfer="fc",
                band_ks=(3, 6, 9), loc_center=c, loc_scale=s)
    base.update(kw)
    return ModelConfig(**base)


def _requests(data, cfg, ids):
    return valid_requests(data, cfg, ids, [data.start + 200, data.start + 300])


def test_target_never_retrieves_itself(small_data, small_split):
    cfg = _small_cfg(small_data)
    sid = small_split.train_station_ids[0]
    batch, _ = assemble(small_data, cfg, [Request(sid, small_data.start + 200)])
    self_pos = small_data.reg_pos[sid]
    for idx in batch.nb_idx.values():
        assert self_pos not in idx[0]


def test_zero_shot_matches_batched_path(small_data, small_split):
    cfg = _small_cfg(small_data)
    model = Forecaster(cfg)
    reqs = _requests(small_data, cfg, small_split.test_station_ids)
    mu, _, y = predict_requests(model, small_data, reqs)
    r = reqs[0]
    row = np.array([small_data.panel.index(r.station_id)])
    ctx = small_data.context(row, r.t0, cfg.context_len)[0]
    st = small_data.ds.stations[r.station_id]
    one = forecast_zero_shot(st, ctx, small_data, None, model, r.t0)
    np.testing.assert_allclose(one, mu[0], atol=1e-9)
    # an explicit plan with the same neighbours gives the same forecast
    plan = small_data.index.plan(st, RetrievalConfig(3, 6, 9))
    np.testing.assert_allclose(forecast_zero_shot(st, ctx, small_data, plan, model, r.t0), mu[0], atol=1e-9)


def test_prefix_horizon_and_cold_start(small_data, small_split):
    cfg = _small_cfg(small_data)
    model = Forecaster(cfg)
    reqs = _requests(small_data, cfg, small_split.test_station_ids)
    full, _, _ = predict_requests(model, small_data, reqs)
    cold, _, _ = predict_requests(model, small_data, reqs, 0)
    assert full.shape == cold.shape and np.all(np.isfinite(cold))
    with pytest.raises(ModelError, match="divisible"):
        predict_requests(model, small_data, reqs, 12)


def test_unknown_station_far_away(small_data):
    cfg = _small_cfg(small_data)
    model = Forecaster(cfg)
    far = Station("FAR", 10.0, 10.0, 0.0)
    ctx = np.zeros((32, 5))
    out = forecast_zero_shot(far, ctx, small_data, None, model, small_data.start + 200)
    assert out.shape == (16,) and np.all(np.isfinite(out))
    with pytest.raises(ModelError, match="incompatible"):
        forecast_zero_shot(far, np.zeros((12, 5)), small_data, None, model, small_data.start + 200)
