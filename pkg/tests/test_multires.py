import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import pywt_coeffs, pywt_inverse
from rarf.multires import (
    BandSet,
    BandSpec,
    DecompositionError,
    analysis_matrix,
    band_forecast_lengths,
    band_slices,
    decompose,
    reconstruct,
)

WAVELETS = ("haar", "db2")
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def signals(n):
    return arrays(np.float64, n, elements=finite)


@pytest.mark.parametrize("wavelet", WAVELETS)
@pytest.mark.parametrize("levels", [1, 2, 3])
def test_matches_pywt_periodization(wavelet, levels):
    x = np.random.default_rng(levels).normal(size=96)
    bs = decompose(x, BandSpec(levels, wavelet))
    ref = pywt_coeffs(x, wavelet, levels)
    for k, v in ref.items():
        np.testing.assert_allclose(bs.coeffs[k], v, atol=1e-12)
    np.testing.assert_allclose(reconstruct(bs), pywt_inverse(ref, wavelet, levels), atol=1e-12)


@given(signals(96), st.sampled_from(WAVELETS), st.integers(1, 3))
def test_perfect_reconstruction(x, wavelet, levels):
    bs = decompose(x, BandSpec(levels, wavelet))
    assert np.max(np.abs(reconstruct(bs) - x)) <= 1e-9 * max(1.0, np.max(np.abs(x)))


@given(signals(64), st.sampled_from(WAVELETS))
def test_parseval(x, wavelet):
    bs = decompose(x, BandSpec(3, wavelet))
    e_in = float(np.sum(x * x))
    e_out = sum(float(np.sum(c * c)) for c in bs.coeffs.values())
    assert abs(e_out - e_in) <= 1e-9 * max(e_in, 1.0)


@given(signals(48), signals(48), st.floats(-5, 5), st.sampled_from(WAVELETS))
def test_linearity(x, y, a, wavelet):
    spec = BandSpec(3, wavelet)
    bx, by, bz = decompose(x, spec), decompose(y, spec), decompose(a * x + y, spec)
    for k in bz.coeffs:
        np.testing.assert_allclose(bz.coeffs[k], a * bx.coeffs[k] + by.coeffs[k], atol=1e-8)


def test_constant_signal_has_zero_details():
    bs = decompose(np.full(64, 5.0), BandSpec(3, "haar"))
    for j in (1, 2, 3):
        assert np.all(np.abs(bs.coeffs[f"d{j}"]) < 1e-12)
    np.testing.assert_allclose(bs.coeffs["a3"], 5.0 * 2**1.5)


def test_haar_detail_closed_form():
    x = np.arange(8.0) ** 2
    d1 = decompose(x, BandSpec(1, "haar")).coeffs["d1"]
    np.testing.assert_allclose(d1, (x[0::2] - x[1::2]) / np.sqrt(2))


def test_band_grouping_and_lengths():
    spec = BandSpec(3)
    assert spec.band_names() == ("fast", "moderate", "slow")
    assert spec.bands() == {"fast": ["d1"], "moderate": ["d2"], "slow": ["d3", "a3"]}
    assert band_forecast_lengths(48, spec) == (24, 12, 6, 6)
    bs = decompose(np.zeros(96), spec)
    assert bs.band("slow").shape == (12, 2)


def test_analysis_matrix_is_orthonormal():
    for w in WAVELETS:
        A = analysis_matrix(32, BandSpec(3, w))
        np.testing.assert_allclose(A @ A.T, np.eye(32), atol=1e-12)
        sl = band_slices(32, BandSpec(3, w))
        x = np.random.default_rng(0).normal(size=32)
        np.testing.assert_allclose((A @ x)[sl["d2"]], decompose(x, BandSpec(3, w)).coeffs["d2"], atol=1e-12)


def test_multichannel_axis0():
    x = np.random.default_rng(1).normal(size=(32, 4))
    bs = decompose(x, BandSpec(2, "db2"))
    np.testing.assert_allclose(reconstruct(bs), x, atol=1e-12)
    np.testing.assert_allclose(bs.coeffs["d1"][:, 2], decompose(x[:, 2], BandSpec(2, "db2")).coeffs["d1"])


def test_errors():
    with pytest.raises(DecompositionError, match="divisible"):
        decompose(np.zeros(20), BandSpec(3))
    with pytest.raises(DecompositionError):
        BandSpec(0)
    with pytest.raises(DecompositionError, match="unknown wavelet"):
        BandSpec(3, "sym9")
    with pytest.raises(DecompositionError, match="non-finite"):
        decompose(np.r_[np.zeros(7), np.nan], BandSpec(3))
    bs = decompose(np.zeros(16), BandSpec(2))
    bad = BandSet({k: v for k, v in bs.coeffs.items() if k != "d1"}, 16, bs.spec)
    with pytest.raises(DecompositionError, match="missing"):
        reconstruct(bad)
