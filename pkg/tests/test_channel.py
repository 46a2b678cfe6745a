import math

import numpy as np
import pytest

from cvqkd import channel, rng as crng, snu, tx
from cvqkd.errors import AliasRisk, ConfigError
from oracles import wiener_increment_variance


def test_apply_loss():
    w = tx.draw_symbols(10**5, 4.71, seed=1).tx_symbols
    assert np.array_equal(channel.apply_loss(w, 1.0), w)
    out = channel.apply_loss(w, 0.0096)
    assert np.sum(np.abs(out) ** 2) / np.sum(np.abs(w) ** 2) == pytest.approx(0.0096, abs=1e-12)
    with pytest.raises(ConfigError):
        channel.apply_loss(w, 0.0)


def test_phase_noise_identity_and_modulus():
    w = tx.draw_symbols(4096, 1.0, seed=2).tx_symbols
    assert np.array_equal(channel.apply_phase_noise(w, 0.0, 1e9, 1), w)
    out = channel.apply_phase_noise(w, 200.0, 1e9, 1)
    np.testing.assert_allclose(np.abs(out), np.abs(w), rtol=1e-14)


def test_wiener_ensemble_variance():
    # 1e4 independent paths; oracle: Var(theta_k - theta_0) = 2 pi lw k / fs
    g = crng.generator(5, 0, 99)
    fs, lw, k = 1e9, 200.0, 5000
    paths = np.empty(10_000)
    for i in range(paths.size):
        paths[i] = channel.wiener_phase(k + 1, lw, fs, g)[-1]
    assert np.var(paths) == pytest.approx(wiener_increment_variance(lw, fs, k), rel=0.05)


def test_frequency_offset_group_and_alias():
    w = tx.draw_symbols(8192, 1.0, seed=3).tx_symbols
    assert np.array_equal(channel.apply_frequency_offset(w, 0.0, 1e9), w)
    ab = channel.apply_frequency_offset(channel.apply_frequency_offset(w, 13e6, 1e9), -40e6, 1e9)
    np.testing.assert_allclose(ab, channel.apply_frequency_offset(w, -27e6, 1e9), atol=1e-9)
    with pytest.raises(AliasRisk):
        channel.apply_frequency_offset(w, 300e6, 1e9, band=(45e6, 220e6))


def test_pilot_moves_to_receiver_convention():
    n = 10**5
    c = tx.TxConfig(frame_len=n)
    pilot = tx.add_pilot(np.zeros(n, complex), c.f_pilot, 1.0, c.dac_rate)
    out = channel.apply_frequency_offset(pilot, -240e6, 1e9)
    f = np.fft.fftfreq(n, 1e-9)
    assert f[np.argmax(np.abs(np.fft.fft(out)))] == pytest.approx(-20e6, abs=1e9 / n)


def test_excess_noise_per_symbol_and_linearity():
    c = tx.TxConfig(frame_len=2**21)
    zero = np.zeros(c.frame_len, complex)
    assert np.array_equal(channel.add_excess_noise(zero, 0.0, c, 1), zero)

    def recovered(xi):
        w = channel.add_excess_noise(zero, xi, c, crng.generator(3, 0, crng.EXCESS))
        bb = w * tx.tone(w.size, -c.f_signal, c.dac_rate)
        y = tx.matched_filter(bb, 8, c.rrc_rolloff)
        return 0.5 * (np.var(y.real) + np.var(y.imag))

    r1 = recovered(0.01)
    r2 = recovered(0.02)
    assert r1 == pytest.approx(0.01, rel=0.01)
    # same stream: doubling xi doubles the recovered noise exactly
    assert r2 / r1 == pytest.approx(2.0, rel=1e-9)


def test_detector_vacuum_and_electronic_ratio():
    n = 2**21
    zero = np.zeros(n, complex)
    out = channel.detect_heterodyne(zero, 1.0, 0.0, 11)
    assert snu.quadrature_variance(out) == pytest.approx(1.0, abs=0.005)
    sc = channel.ChannelScenario(snu.table1_params("table1-100km-on"), detector_bandwidth=None)
    vac, ele = channel.simulate_calibration(sc, 10**6)
    ratio = snu.quadrature_variance(ele) / (snu.quadrature_variance(vac) - snu.quadrature_variance(ele))
    assert ratio == pytest.approx(0.01925, rel=0.02)


def test_detector_scales_signal_by_tau():
    n = 2**20
    sig = np.full(n, 2.0 + 0j)
    a = channel.detect_heterodyne(sig, 0.5, 0.0, 4)
    b = channel.detect_heterodyne(np.zeros(n, complex), 0.5, 0.0, 4)
    np.testing.assert_allclose(a - b, math.sqrt(0.5 / 2) * sig, atol=1e-12)


def identity_scenario(**kw):
    p = snu.ChannelParams(V_M=1.0, eta=1.0, xi=0.0, tau=1.0, V_el=0.0, linewidth_tx=0.0,
                          linewidth_rx=0.0, delta_f=0.0)
    return channel.ChannelScenario(p, detector_bandwidth=None, **kw)


def test_identity_link_is_signal_plus_shot_noise():
    c = tx.TxConfig(frame_len=2**18)
    wave, _ = tx.transmit_frame(c, 1.0)
    sc = identity_scenario(seed=9)
    fr = channel.simulate_link(wave, sc, c)
    shot = channel.detect_heterodyne(np.zeros_like(wave), 1.0, 0.0, crng.generator(9, 0, crng.SHOT))
    np.testing.assert_allclose(fr.samples, math.sqrt(0.5) * wave + shot, atol=1e-12)


def test_loss_and_offset_commute(small_tx, on_scenario):
    # excess noise is injected at the signal frequency, so it only commutes with loss; drop it here
    wave, _ = tx.transmit_frame(small_tx, 9.41)
    sc0 = channel.ChannelScenario(on_scenario.params.replace(xi=0.0), seed=on_scenario.seed)
    a = channel.simulate_link(wave, sc0, small_tx, order=("loss", "phase", "offset"))
    b = channel.simulate_link(wave, sc0, small_tx, order=("offset", "phase", "loss"))
    np.testing.assert_allclose(a.samples, b.samples, atol=1e-9)


def test_simulate_link_deterministic(small_tx, on_scenario):
    wave, _ = tx.transmit_frame(small_tx, 9.41, frame_id=3)
    a = channel.simulate_link(wave, on_scenario, small_tx, frame_id=3)
    b = channel.simulate_link(wave, on_scenario, small_tx, frame_id=3)
    assert np.array_equal(a.samples, b.samples)
    c = channel.simulate_link(wave, on_scenario, small_tx, frame_id=4)
    assert not np.array_equal(a.samples, c.samples)


def test_received_variance_without_excess_or_phase_noise():
    # measured per-quadrature variance of received symbols: tau eta V_M / 2 + 1 + V_el
    p = snu.ChannelParams(V_M=9.41, eta=0.5, xi=0.0, tau=0.685, V_el=0.02, linewidth_tx=0.0,
                          linewidth_rx=0.0, delta_f=0.0)
    c = tx.TxConfig(frame_len=2**21)
    wave, blk = tx.transmit_frame(c, p.V_M, with_pilot=False)
    fr = channel.simulate_link(wave, channel.ChannelScenario(p, detector_bandwidth=None, seed=2), c)
    bb = fr.samples * tx.tone(fr.samples.size, -c.f_signal, c.dac_rate)
    y = tx.matched_filter(bb, 8, c.rrc_rolloff)
    v = 0.5 * (np.var(y.real) + np.var(y.imag))
    expect = p.tau * p.eta * p.V_M / 2 + 1 + p.V_el
    n = y.size
    assert abs(v - expect) < 5 * expect * math.sqrt(1 / n)


def test_raman_knob():
    with pytest.raises(ConfigError):
        channel.ChannelScenario(snu.table1_params("table1-100km-on"), raman_noise=-1.0)
