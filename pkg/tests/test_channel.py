import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from commloc.channel import (
    ChannelParams,
    LobeModel,
    invert_ld,
    ld_model,
    lobe_gain,
    noisy_rssi,
    sample_rssi,
)

FREE = ChannelParams(p_n=-63.0, gamma_l=2.0, sigma_shadow=0.0, lobe=None)


@pytest.mark.parametrize(
    "rho, p_n, expected",
    [(1.0, -63.0, -63.0), (10.0, -63.0, -83.0), (2.5, -68.0, -75.9588)],
)
def test_ld_model(rho, p_n, expected):
    assert ld_model(rho, ChannelParams(p_n=p_n, gamma_l=2.0)) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("s, expected", [(-63.0, 1.0), (-83.0, 10.0), (-70.0, 2.2387)])
def test_invert_ld(s, expected):
    assert invert_ld(s, FREE) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_ld_model_domain(bad):
    with pytest.raises(ValueError):
        ld_model(bad, FREE)
    with pytest.raises(ValueError):
        sample_rssi(bad, 0.0, FREE, np.random.default_rng(0))


def test_params_validation():
    with pytest.raises(ValueError):
        ChannelParams(gamma_l=0.0)
    with pytest.raises(ValueError):
        ChannelParams(sigma_shadow=-1.0)
    with pytest.raises(ValueError):
        LobeModel(order=3, cosine_coeffs=(1, 1), sine_coeffs=(1, 1, 1))


@given(st.floats(0.1, 50.0), st.floats(1.0, 6.0))
def test_invert_round_trip(rho, gamma):
    p = ChannelParams(p_n=-63.0, gamma_l=gamma)
    assert invert_ld(ld_model(rho, p), p) == pytest.approx(rho, rel=1e-9)


def test_ld_strictly_decreasing():
    r = np.linspace(0.05, 60, 5000)
    assert np.all(np.diff(ld_model(r, FREE)) < 0)


def test_lobe_gain_values():
    null = LobeModel(order=2, cosine_coeffs=(0, 0), sine_coeffs=(0, 0))
    assert lobe_gain(1.234, null) == 0.0
    assert lobe_gain(0.7, None) == 0.0
    assert lobe_gain(0.0, LobeModel.unitary(3)) == pytest.approx(3.0, abs=1e-12)


@given(st.floats(-10, 10))
def test_lobe_gain_periodic(beta):
    lobe = LobeModel.unitary(3)
    assert lobe_gain(beta, lobe) == pytest.approx(lobe_gain(beta + 2 * math.pi, lobe), abs=1e-9)


def test_sample_rssi_noiseless_is_deterministic():
    rng = np.random.default_rng(1)
    assert sample_rssi(1.0, 0.4, FREE, rng) == -63.0
    lobed = ChannelParams(p_n=-63.0, gamma_l=2.0, sigma_shadow=0.0)
    assert sample_rssi(1.0, 0.0, lobed, rng) == pytest.approx(-60.0, abs=1e-12)


def test_sample_rssi_consumes_one_variate():
    a = np.random.default_rng(7)
    b = np.random.default_rng(7)
    sample_rssi(2.0, 0.3, ChannelParams(), a)
    b.standard_normal()
    assert a.standard_normal() == b.standard_normal()


def test_sample_rssi_statistics():
    params = ChannelParams(p_n=-63.0, gamma_l=2.0, sigma_shadow=5.0)
    rng = np.random.default_rng(2024)
    n = 100_000
    rho, beta = 2.3, 0.8
    s = np.array([sample_rssi(rho, beta, params, rng) for _ in range(n)])
    resid = s - ld_model(rho, params) - lobe_gain(beta, params.lobe)
    assert resid.std(ddof=1) == pytest.approx(5.0, abs=0.1)
    assert abs(resid.mean()) < 3 * 5.0 / math.sqrt(n)


def test_quantized_rssi_is_integral():
    p = ChannelParams(quantize=True)
    s = noisy_rssi(np.array([1.3, 2.7]), np.array([0.1, 2.0]), p, np.array([0.3, -1.2]))
    np.testing.assert_array_equal(s, np.round(s))
