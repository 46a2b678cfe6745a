import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd import tx
from cvqkd.errors import AliasRisk, ConfigError, SpectralOverlap
from oracles import direct_convolution


def test_config_defaults_and_geometry():
    c = tx.TxConfig()
    assert c.samples_per_symbol == 8
    assert c.symbols_per_frame == 1_250_000
    assert c.signal_band_edge == pytest.approx(195e6)
    assert c.f_signal - c.occupied_bandwidth / 2 == pytest.approx(45e6)


@pytest.mark.parametrize("kw,err", [
    ({"rrc_rolloff": 1.0}, ConfigError),
    ({"f_pilot": 190e6}, SpectralOverlap),
    ({"f_pilot": 600e6}, AliasRisk),
    ({"dac_rate": 1.1e9}, ConfigError),
])
def test_config_validation(kw, err):
    with pytest.raises(err):
        tx.TxConfig(**kw)


def test_draw_symbols_variance_and_determinism():
    b = tx.draw_symbols(1_200_000, 9.41, seed=3)
    v = 0.5 * (np.var(b.tx_symbols.real) + np.var(b.tx_symbols.imag))
    assert v == pytest.approx(9.41, abs=0.04)
    again = tx.draw_symbols(1_200_000, 9.41, seed=3)
    assert np.array_equal(b.tx_symbols, again.tx_symbols)
    assert np.all(tx.draw_symbols(10, 0.0, seed=1).tx_symbols == 0)


def test_rrc_taps_properties():
    h = tx.rrc_taps(0.2, 40, 8)
    assert h.size == 321
    assert np.sum(h**2) == pytest.approx(1.0, abs=1e-9)
    assert np.array_equal(h, h[::-1])
    rc = direct_convolution(h, h)
    c = rc.size // 2
    assert rc[c] == pytest.approx(1.0, abs=1e-3)
    others = np.abs(rc[c % 8 :: 8])
    others = np.delete(others, c // 8)
    assert others.max() < 1e-3


def test_shape_fir_impulse_response():
    h = tx.rrc_taps(0.2, 40, 8)
    out = tx.shape_and_upsample(np.array([1.0 + 0j]), 8, taps=h)
    assert out.size == 8 + h.size - 1
    np.testing.assert_allclose(out[: h.size].real, h, atol=1e-12)
    assert np.all(np.abs(out[h.size :]) < 1e-12)


def test_fir_round_trip():
    sym = tx.draw_symbols(2048, 1.0, seed=1).tx_symbols
    h = tx.rrc_taps(0.2, 40, 8)
    w = tx.shape_and_upsample(sym, 8, taps=h)
    back = tx.matched_filter(w, 8, taps=h)
    assert back.size == sym.size
    # truncated RRC leaves residual ISI of order 1e-3
    assert np.sqrt(np.mean(np.abs(back[20:-20] - sym[20:-20]) ** 2)) < 2e-3


def test_spectral_loopback_exact():
    sym = tx.draw_symbols(125_000, 9.41, seed=2).tx_symbols
    back = tx.matched_filter(tx.shape_and_upsample(sym, 8), 8)
    rms = np.sqrt(np.mean(np.abs(back[20:-20] - sym[20:-20]) ** 2))
    assert rms < 1e-6


def test_shape_determinism():
    c = tx.TxConfig(frame_len=2**16)
    w1, _ = tx.transmit_frame(c, 4.71, frame_id=5)
    w2, _ = tx.transmit_frame(c, 4.71, frame_id=5)
    assert np.array_equal(w1, w2)


@settings(max_examples=20, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False))
def test_tx_chain_linear(a, b):
    s1 = tx.draw_symbols(512, 1.0, seed=1).tx_symbols
    s2 = tx.draw_symbols(512, 1.0, seed=2).tx_symbols

    def chain(s):
        return tx.ssb_shift(tx.shape_and_upsample(s, 8), 120e6, 1e9, 150e6)

    lhs = chain(a * s1 + b * s2)
    rhs = a * chain(s1) + b * chain(s2)
    scale = max(np.max(np.abs(rhs)), 1e-300)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * scale + 1e-300


def test_ssb_shift():
    w = tx.draw_symbols(4096, 1.0, seed=4).tx_symbols
    assert np.array_equal(tx.ssb_shift(w, 0, 1e9), w)
    sh = tx.ssb_shift(w, 120e6, 1e9, 150e6)
    assert abs(np.sum(np.abs(sh) ** 2) / np.sum(np.abs(w) ** 2) - 1) < 1e-9
    n = 2**14
    spec = np.abs(np.fft.fft(tx.ssb_shift(np.ones(n, complex), 120e6, 1e9)))
    f = np.fft.fftfreq(n, 1e-9)
    assert f[np.argmax(spec)] == pytest.approx(120e6, abs=1e9 / n)
    with pytest.raises(AliasRisk):
        tx.ssb_shift(w, 450e6, 1e9, 150e6)


def test_add_pilot():
    n = 100_000  # pilot falls exactly on a bin
    w = tx.draw_symbols(n // 8, 1.0, seed=1).tx_symbols
    base = tx.ssb_shift(tx.shape_and_upsample(w, 8), 120e6, 1e9, 150e6)
    assert np.array_equal(tx.add_pilot(base, 220e6, 0.0, 1e9), base)
    only = tx.add_pilot(np.zeros(n, complex), 220e6, 1.0, 1e9)
    f = np.fft.fftfreq(n, 1e-9)
    p = np.abs(np.fft.fft(only)) ** 2
    assert f[np.argmax(p)] == pytest.approx(220e6, abs=1e9 / n)
    assert np.sort(p)[-2] < 1e-12 * p.max()
    with pytest.raises(SpectralOverlap):
        tx.add_pilot(base, 150e6, 1.0, 1e9, signal_band=(45e6, 195e6))


def test_signal_band_unchanged_by_pilot():
    # PSD integration oracle over the occupied band
    c = tx.TxConfig(frame_len=10**6)
    w, _ = tx.transmit_frame(c, 9.41, with_pilot=False)
    wp, _ = tx.transmit_frame(c, 9.41, with_pilot=True)
    f = np.fft.fftfreq(w.size, 1 / c.dac_rate)
    band = (f >= 45e6) & (f <= 195e6)
    p0 = np.sum(np.abs(np.fft.fft(w))[band] ** 2)
    p1 = np.sum(np.abs(np.fft.fft(wp))[band] ** 2)
    assert abs(p1 / p0 - 1) < 1e-6


def test_pilot_amplitude_20db():
    c = tx.TxConfig()
    assert c.pilot_amplitude(9.41) ** 2 / (2 * 9.41) == pytest.approx(100.0)


def test_tone_precision():
    from fractions import Fraction

    t = tx.tone(10**6, -20000040.7, 1e9, start=3)
    fr = Fraction(-20000040.7) / Fraction(10**9)
    for k in (0, 4095, 4096, 999_999):
        exact = np.exp(2j * np.pi * float((fr * (k + 3)) % 1))
        assert abs(t[k] - exact) < 1e-11
