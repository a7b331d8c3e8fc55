import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rarf.diffcore import Checkpoint
from rarf.forecaster import ModelConfig, location_stats
from rarf.training import TrainConfig, TrainingError, loss_mse, loss_nll, train_phase1, train_phase2


def test_nll_trivial_cases():
    y = np.random.default_rng(0).normal(size=48)
    assert loss_nll(y, np.ones(48), y).item() == pytest.approx(0.0, abs=1e-15)
    assert loss_nll(y, np.full(48, np.e), y).item() == pytest.approx(24.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_nll_matches_direct_formula(seed):
    rng = np.random.default_rng(seed)
    mu, y = rng.normal(size=(3, 12)), rng.normal(size=(3, 12))
    var = rng.uniform(0.1, 4.0, size=(3, 12))
    direct = np.mean([0.5 * sum(np.log(v) + (a - b) ** 2 / v for a, b, v in zip(m, t, s))
                      for m, t, s in zip(mu, y, var)])
    assert loss_nll(mu, var, y).item() == pytest.approx(direct, rel=1e-12)


def test_loss_errors():
    with pytest.raises(ValueError, match="strictly positive"):
        loss_nll(np.zeros(3), np.array([1.0, 0.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError, match="shape"):
        loss_mse(np.zeros(3), np.zeros(4))
    assert loss_mse(np.array([1.0, 3.0]), np.array([0.0, 0.0])).item() == 5.0


def test_train_config_validation():
    with pytest.raises(TrainingError):
        TrainConfig(loss="mae")
    with pytest.raises(TrainingError):
        TrainConfig(batch_size=10, anchors_per_batch=3)
    with pytest.raises(TrainingError, match="unknown"):
        TrainConfig.from_json({"epochs": 2, "momentum": 0.9})
    tc = TrainConfig(context_lengths=(96, 48))
    assert TrainConfig.from_json(tc.to_json()) == tc


def _setup(small_data, **kw):
    c, s = location_stats(small_data.reg_stations)
    base = dict(context_len=32, horizon_len=16, d_model=8, d_loc=8, layers=1, d_ff=16, transfer="fc",
                band_ks=(3, 6, 9), loc_center=c, loc_scale=s)
    base.update(kw)
    return ModelConfig(**base), TrainConfig(epochs=2, steps_per_epoch=4, batch_size=4, phase2_epochs=2,
                                            phase2_steps=3, phase2_lr=1e-2)


@pytest.fixture(scope="module")
def phase1(small_ds, small_split, small_data):
    mcfg, tcfg = _setup(small_data)
    return train_phase1(small_ds, small_split, mcfg, tcfg, small_data), tcfg


def test_phase1_is_deterministic(phase1, small_ds, small_split, small_data):
    first, tcfg = phase1
    again = train_phase1(small_ds, small_split, first.model.cfg, tcfg, small_data)
    assert again.checkpoint.to_bytes() == first.checkpoint.to_bytes()
    assert len(first.log["epochs"]) == 2 and first.log["best_epoch"] in (0, 1)


def test_phase2_freeze_contract(phase1, small_ds, small_split, small_data):
    first, tcfg = phase1
    ck = Checkpoint.from_bytes(first.checkpoint.to_bytes())
    sid = small_split.train_station_ids[0]
    res = train_phase2(ck, sid, small_ds, small_split, tcfg, small_data)
    after = res.checkpoint.params
    transfer = set(first.model.transfer_names())
    changed = [n for n in transfer if not np.array_equal(after[n], ck.params[n])]
    assert changed
    for n, arr in ck.params.items():
        if n not in transfer:
            assert after[n].tobytes() == arr.tobytes(), n
    assert res.log["station"] == sid
    assert res.model.store.trainable_names() == res.model.store.names()


def test_phase2_rejects_models_without_transfer(small_ds, small_split, small_data):
    mcfg, tcfg = _setup(small_data, levels=0, transfer="none", band_ks=(10,))
    res = train_phase1(small_ds, small_split, mcfg, TrainConfig(epochs=1, steps_per_epoch=1, batch_size=2),
                       small_data)
    with pytest.raises(TrainingError, match="no transfer"):
        train_phase2(res.checkpoint, small_split.train_station_ids[0], small_ds, small_split, tcfg, small_data)
