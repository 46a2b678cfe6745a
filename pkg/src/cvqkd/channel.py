"""Physical channel and trusted heterodyne detector model.

Order of operations in :func:`simulate_link`: loss, in-band excess noise,
laser phase noise, LO frequency offset, heterodyne detection.  Waveforms are
complex analytic signals in SNU-per-sample: white noise with unit
per-quadrature variance maps to 1 SNU per symbol after the unit-energy
matched filter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from . import rng as _rng
from .errors import AliasRisk, ConfigError
from .snu import ChannelParams
from .tx import SampleFrame, TxConfig, shape_and_upsample, ssb_shift, tone


@dataclass(frozen=True)
class ChannelScenario:
    params: ChannelParams
    fs: float = 1e9
    raman_noise: float = 0.0  # white, per quadrature, SNU at channel output
    seed: int = 0
    detector_bandwidth: float | None = 250e6
    detector_order: int = 2
    adc_gain: float = 1.0

    def __post_init__(self):
        if self.raman_noise < 0:
            raise ConfigError("must be non-negative", "raman_noise")
        if self.adc_gain <= 0:
            raise ConfigError("must be positive", "adc_gain")
        if self.detector_bandwidth is not None and self.detector_bandwidth <= 0:
            raise ConfigError("must be positive", "detector_bandwidth")


def apply_loss(waveform, eta):
    if not 0 < eta <= 1:
        raise ConfigError(f"must lie in (0, 1], got {eta}", "eta")
    w = np.asarray(waveform, dtype=complex)
    return w if eta == 1 else w * math.sqrt(eta)


def wiener_phase(n, combined_linewidth, fs, rng):
    """Wiener phase path starting at 0 with increment variance 2*pi*linewidth/fs."""
    if combined_linewidth < 0:
        raise ConfigError("must be non-negative", "linewidth")
    theta = np.zeros(n)
    if combined_linewidth > 0 and n > 1:
        step = math.sqrt(2 * math.pi * combined_linewidth / fs)
        np.cumsum(rng.standard_normal(n - 1) * step, out=theta[1:])
    return theta


def apply_phase_noise(waveform, combined_linewidth, fs, seed, return_phase=False):
    w = np.asarray(waveform, dtype=complex)
    g = _rng.as_generator(seed)
    theta = wiener_phase(w.size, combined_linewidth, fs, g)
    out = w.copy() if combined_linewidth == 0 else w * np.exp(1j * theta)
    return (out, theta) if return_phase else out


def apply_frequency_offset(waveform, delta_f, fs, band=None):
    """Rotate by ``exp(i 2 pi delta_f t)``; ``band`` is the occupied (lo, hi) before rotation."""
    if band is not None and max(abs(band[0] + delta_f), abs(band[1] + delta_f)) >= fs / 2:
        raise AliasRisk(f"offset {delta_f / 1e6:g} MHz moves the band past fs/2", "delta_f")
    if band is None and abs(delta_f) >= fs / 2:
        raise AliasRisk("offset beyond fs/2", "delta_f")
    w = np.asarray(waveform, dtype=complex)
    return w.copy() if delta_f == 0 else w * tone(w.size, delta_f, fs)


def add_excess_noise(waveform, xi, tx: TxConfig, seed):
    """Add RRC-shaped Gaussian noise so each symbol sees ``xi`` per quadrature.

    Noise is drawn on the symbol grid and shaped exactly like the signal, so
    ``xi`` is defined per symbol at the channel output.
    """
    if xi < 0:
        raise ConfigError("must be non-negative", "xi")
    w = np.asarray(waveform, dtype=complex)
    if xi == 0:
        return w.copy()
    sps = tx.samples_per_symbol
    if w.size % sps:
        raise ConfigError("waveform length must be a multiple of sps", "waveform")
    g = _rng.as_generator(seed)
    q = g.standard_normal((2, w.size // sps))
    noise = math.sqrt(xi) * (q[0] + 1j * q[1])
    shaped = shape_and_upsample(noise, sps, tx.rrc_rolloff)
    return w + ssb_shift(shaped, tx.f_signal, tx.dac_rate, tx.occupied_bandwidth)


def detector_response(n, fs, bandwidth, order=2):
    """Zero-phase Butterworth-magnitude detector response on the FFT grid."""
    f = sfft.fftfreq(n, d=1 / fs)
    return 1.0 / np.sqrt(1.0 + (np.abs(f) / bandwidth) ** (2 * order))


def _white(n, var, g):
    q = g.standard_normal((2, n))
    return math.sqrt(var) * (q[0] + 1j * q[1])


def detect_heterodyne(waveform, tau, V_el, seed, fs=1e9, bandwidth=None, order=2,
                      adc_gain=1.0, electronic_seed=None):
    """Trusted heterodyne detection of a complex field waveform.

    The signal is scaled by ``sqrt(tau / 2)``; unit shot noise and electronic
    noise of variance ``V_el`` are added per quadrature.  With ``bandwidth``
    set, everything passes the detector response before the ADC gain.
    """
    if not 0 < tau <= 1:
        raise ConfigError(f"must lie in (0, 1], got {tau}", "tau")
    if V_el < 0:
        raise ConfigError("must be non-negative", "V_el")
    w = np.asarray(waveform, dtype=complex)
    g = _rng.as_generator(seed)
    out = math.sqrt(tau / 2) * w + _white(w.size, 1.0, g)
    if V_el > 0:
        ge = g if electronic_seed is None else _rng.as_generator(electronic_seed)
        out += _white(w.size, V_el, ge)
    if bandwidth is not None:
        out = sfft.ifft(sfft.fft(out) * detector_response(w.size, fs, bandwidth, order))
    if adc_gain != 1.0:
        out *= adc_gain
    return out


def simulate_link(tx_waveform, scenario: ChannelScenario, tx: TxConfig, frame_id=0,
                  order=("loss", "excess", "phase", "offset")):
    """Propagate one transmitted frame and detect it; returns a raw :class:`SampleFrame`."""
    p = scenario.params
    if abs(scenario.fs - tx.dac_rate) > 1e-6:
        raise ConfigError("channel and transmitter sample rates differ", "fs")
    seed = scenario.seed
    w = np.asarray(tx_waveform, dtype=complex)
    band = (tx.f_signal - tx.occupied_bandwidth / 2, max(tx.f_pilot, tx.signal_band_edge))
    theta = None
    for step in order:
        if step == "loss":
            w = apply_loss(w, p.eta)
        elif step == "excess":
            w = add_excess_noise(w, p.xi, tx, _rng.generator(seed, frame_id, _rng.EXCESS))
            if scenario.raman_noise > 0:
                w = w + _white(w.size, scenario.raman_noise, _rng.generator(seed, frame_id, _rng.RAMAN))
        elif step == "phase":
            w, theta = apply_phase_noise(w, p.combined_linewidth, scenario.fs,
                                         _rng.generator(seed, frame_id, _rng.PHASE), return_phase=True)
        elif step == "offset":
            # the heterodyne beat moves the spectrum down by the LO offset
            w = apply_frequency_offset(w, -p.delta_f, scenario.fs, band)
        else:
            raise ConfigError(f"unknown channel step {step!r}", "order")
    raw = detect_heterodyne(
        w, p.tau, p.V_el, _rng.generator(seed, frame_id, _rng.SHOT), scenario.fs,
        scenario.detector_bandwidth, scenario.detector_order, scenario.adc_gain,
        electronic_seed=_rng.generator(seed, frame_id, _rng.ELECTRONIC),
    )
    return SampleFrame(raw, scenario.fs, frame_id, "raw", {"true_phase": theta})


def simulate_calibration(scenario: ChannelScenario, n_samples, frame_id=0):
    """Raw vacuum (signal blocked) and electronic (LO blocked) captures."""
    p = scenario.params
    zeros = np.zeros(n_samples, dtype=complex)
    vac = detect_heterodyne(
        zeros, 1.0, p.V_el, _rng.generator(scenario.seed, frame_id, _rng.CAL_VACUUM), scenario.fs,
        scenario.detector_bandwidth, scenario.detector_order, scenario.adc_gain,
    )
    ge = _rng.generator(scenario.seed, frame_id, _rng.CAL_ELECTRONIC)
    ele = _white(n_samples, p.V_el, ge) if p.V_el > 0 else np.zeros(n_samples, dtype=complex)
    if scenario.detector_bandwidth is not None:
        ele = sfft.ifft(sfft.fft(ele) * detector_response(n_samples, scenario.fs,
                                                            scenario.detector_bandwidth,
                                                            scenario.detector_order))
    return vac, ele * scenario.adc_gain
