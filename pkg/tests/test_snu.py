import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd import channel, snu
from cvqkd.errors import ConfigError, DegenerateCalibration, NegativeLoss


def test_normalization_factor_definition():
    cal = snu.CalibrationRecord.from_variances(2.0, 1.0)
    assert cal.shot_noise_raw == 1.0
    assert cal.v_el == 1.0


def test_vel_from_simulated_frames_50_to_1(rng):
    n = 10**7
    el_var = 0.3
    ele = math.sqrt(el_var) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    vac = math.sqrt(50 * el_var) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    cal = snu.calibrate(vac, ele)
    assert cal.v_el == pytest.approx(1 / 49, rel=0.01)


@pytest.mark.parametrize("vac,ele", [(1.0, 1.0), (0.5, 1.0), (1.0, 0.0)])
def test_degenerate_calibration(vac, ele):
    with pytest.raises(DegenerateCalibration):
        snu.CalibrationRecord.from_variances(vac, ele)


def test_calibrate_is_split_invariant(rng):
    vac = rng.standard_normal(2**16) * 3 + 0j
    ele = rng.standard_normal(2**16) + 0j
    whole = snu.calibrate(vac, ele)
    parts = snu.calibrate([vac[: 2**15], vac[2**15 :]], [ele[: 2**15], ele[2**15 :]])
    assert parts.vacuum_variance_raw == pytest.approx(whole.vacuum_variance_raw, rel=1e-12)
    np.testing.assert_allclose(parts.vacuum_psd, whole.vacuum_psd, rtol=1e-12)


def test_to_snu_vacuum_unit_variance(on_scenario):
    vac, ele = channel.simulate_calibration(on_scenario, 10**6)
    cal = snu.calibrate(vac, ele)
    x = snu.to_snu(vac, cal)
    # vacuum capture includes electronic noise: variance 1 + V_el
    v = snu.quadrature_variance(x) - cal.v_el
    assert v == pytest.approx(1.0, abs=0.01)


def test_to_snu_zero_and_linearity(rng):
    cal = snu.CalibrationRecord.from_variances(4.0, 0.5)
    assert np.all(snu.to_snu(np.zeros(8), cal) == 0)
    x = rng.standard_normal(16)
    np.testing.assert_allclose(snu.to_snu(3.5 * x, cal), 3.5 * snu.to_snu(x, cal), rtol=1e-15)


@given(st.floats(1e-6, 1e6), st.floats(0, 0.99), st.floats(-1e3, 1e3))
def test_snu_round_trip(vac, frac, x):
    cal = snu.CalibrationRecord.from_variances(vac, max(vac * frac, vac * 1e-9))
    assert snu.to_snu(snu.from_snu(x, cal), cal) == pytest.approx(x, rel=1e-14, abs=1e-300)


def test_calibration_vacuum_within_sampling_interval(rng):
    # 99.999% interval for the per-quadrature variance of n complex samples
    n = 10**6
    z = 4.417
    vac = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    cal = snu.CalibrationRecord.from_variances(snu.quadrature_variance(vac) + 1e-3, 1e-3)
    v = snu.quadrature_variance(snu.to_snu(vac, cal))
    assert abs(v - 1) < z * math.sqrt(2 / (2 * n)) + 1e-3


def test_db_to_transmittance_examples():
    assert snu.db_to_transmittance(0) == 1.0
    assert snu.db_to_transmittance(20.17) == pytest.approx(0.0096, abs=5e-5)
    assert snu.db_to_transmittance(17) == pytest.approx(0.01995, abs=1e-5)
    assert snu.db_to_transmittance(3.0103) == pytest.approx(0.5, abs=1e-6)
    with pytest.raises(NegativeLoss):
        snu.db_to_transmittance(-1)


@given(st.floats(0, 100), st.floats(1e-6, 50))
def test_db_strictly_decreasing(a, d):
    assert snu.db_to_transmittance(a + d) < snu.db_to_transmittance(a)


def test_backpropagation():
    assert snu.backpropagate_excess_noise(0.489e-3, 0.685) == pytest.approx(0.714e-3, abs=1e-6)
    assert snu.backpropagate_excess_noise(0.3, 1.0) == 0.3
    with pytest.raises(ConfigError):
        snu.backpropagate_excess_noise(0.3, 0.0)


@pytest.mark.parametrize("field,value", [("eta", 0.0), ("eta", 1.5), ("tau", 1.2), ("xi", -1e-3),
                                         ("V_el", -0.1), ("V_M", -1.0)])
def test_channel_params_validation_names_field(field, value):
    kw = dict(V_M=9.41, eta=0.0184, xi=0.76e-3, tau=0.685, V_el=19.25e-3)
    kw[field] = value
    with pytest.raises(ConfigError) as e:
        snu.ChannelParams(**kw)
    assert e.value.field == field


def test_calibration_record_serialization(tmp_path, small_cal):
    path = tmp_path / "cal.json"
    small_cal.save(path)
    back = snu.CalibrationRecord.load(path)
    assert back == small_cal
    np.testing.assert_array_equal(back.vacuum_psd, small_cal.vacuum_psd)
    assert json.loads(path.read_text())["schema"] == snu.CALIBRATION_SCHEMA
