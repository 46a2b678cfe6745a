"""Receiver DSP chain.

whitening -> pilot extraction -> frequency offset -> UKF phase tracking ->
baseband shift and phase correction -> matched RRC filter -> symbols.

The pilot bandpass, whitening and matched filter are all zero-phase
frequency-domain filters, so no group-delay compensation is needed between
the pilot phase estimate and the quantum band.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.fft as sfft
from scipy import signal
from scipy.ndimage import uniform_filter1d

from .errors import (
    ConfigError,
    DivergenceDetected,
    PilotNotFound,
    SingularPsd,
    SyncFailure,
    UnwrapFailure,
)
from .snu import CalibrationRecord, to_snu
from .tx import SampleFrame, SymbolBlock, TxConfig, matched_filter, tone

PILOT_BANDWIDTH = 1e6
PILOT_MIN_SNR_DB = 10.0


# --------------------------------------------------------------------------
# whitening


def whitening_response(n, cal: CalibrationRecord, fs=None, smooth_bins=33):
    """Equalizer ``sqrt(mean(P) / P(f))`` from the calibration vacuum PSD.

    Preserves the total vacuum variance, so the SNU scale of the calibration
    record still applies after filtering.
    """
    if cal.vacuum_psd is None:
        raise SingularPsd("calibration record carries no vacuum PSD")
    fs = cal.fs if fs is None else fs
    psd = np.asarray(cal.vacuum_psd, dtype=float)
    if np.any(~np.isfinite(psd)) or np.any(psd <= 0):
        raise SingularPsd("calibration PSD has non-positive bins")
    if smooth_bins > 1:
        psd = uniform_filter1d(psd, smooth_bins, mode="wrap")
    f = sfft.fftfreq(n, d=1 / fs)
    p = np.interp(f, cal.psd_freqs, psd)
    return np.sqrt(psd.mean() / p)


def whitening_filter(samples, cal: CalibrationRecord, fs=None, smooth_bins=33):
    x = np.asarray(samples, dtype=complex)
    return sfft.ifft(sfft.fft(x) * whitening_response(x.size, cal, fs, smooth_bins))


# --------------------------------------------------------------------------
# pilot


@dataclass
class Pilot:
    samples: np.ndarray  # complex, full rate
    fs: float
    f_coarse: float
    snr_db: float
    power: float  # mean pilot power per sample
    noise_density: float  # white-noise variance per sample, complex
    bandwidth: float
    mask: np.ndarray = field(repr=False, default=None)


def _bandpass_mask(f, f0, bw, taper=0.2):
    d = np.abs(f - f0)
    flat = bw / 2 * (1 - taper)
    edge = bw / 2
    m = np.zeros_like(d)
    m[d <= flat] = 1.0
    mid = (d > flat) & (d < edge)
    m[mid] = 0.5 * (1 + np.cos(np.pi * (d[mid] - flat) / (edge - flat)))
    return m


def extract_pilot(samples, f_guess, fs, bw=PILOT_BANDWIDTH, search_bw=40e6, spectrum=None):
    """Locate the pilot near ``f_guess`` and isolate it with a ``bw`` bandpass.

    Pass a precomputed ``spectrum`` (FFT of ``samples``) to avoid a second FFT.
    """
    X = sfft.fft(np.asarray(samples, dtype=complex)) if spectrum is None else spectrum
    n = X.size
    f = sfft.fftfreq(n, d=1 / fs)
    power = np.abs(X) ** 2
    window = np.flatnonzero(np.abs(f - f_guess) <= search_bw / 2)
    if window.size == 0:
        raise PilotNotFound(f"search window around {f_guess / 1e6:g} MHz is empty")
    f_c = f[window[np.argmax(power[window])]]
    # white-noise level from a ring 2-6 bandwidths away from the pilot
    ring = (np.abs(f - f_c) > 2 * bw) & (np.abs(f - f_c) < 6 * bw)
    noise_bin = float(np.median(power[ring]) / math.log(2))  # median of exp(1) -> mean
    mask = _bandpass_mask(f, f_c, bw)
    band_power = float(np.sum(power * mask**2))
    noise_band = noise_bin * float(np.sum(mask**2))
    p_sig = max(band_power - noise_band, 0.0)
    snr = p_sig / noise_band if noise_band > 0 else np.inf
    snr_db = 10 * math.log10(snr) if snr > 0 else -np.inf
    if not snr_db >= PILOT_MIN_SNR_DB:
        raise PilotNotFound(f"pilot SNR {snr_db:.1f} dB below {PILOT_MIN_SNR_DB:g} dB near {f_c / 1e6:g} MHz")
    pil = sfft.ifft(X * mask)
    return Pilot(pil, fs, f_c, snr_db, p_sig / n**2, noise_bin / n, bw, mask)


def estimate_freq_offset(pilot, fs, trim=None, max_wrap_fraction=0.01):
    """Tone frequency from a least-squares fit to the unwrapped pilot phase.

    Real input is first turned into its analytic signal with the Hilbert
    transform.  ``trim`` samples are dropped at both ends to skip the
    circular-filter edge transient.
    """
    z = np.asarray(pilot.samples if isinstance(pilot, Pilot) else pilot)
    if not np.iscomplexobj(z):
        z = signal.hilbert(z)
    if trim is None:
        trim = int(20 * fs / PILOT_BANDWIDTH) if z.size > 200 * fs / PILOT_BANDWIDTH else 0
    z = z[trim : z.size - trim] if trim else z
    if z.size < 3:
        raise UnwrapFailure("too few pilot samples")
    inc = np.angle(z[1:] * np.conj(z[:-1]))
    typical = np.median(inc)
    jumps = np.mean(np.abs(np.angle(np.exp(1j * (inc - typical)))) > np.pi / 2)
    if jumps > max_wrap_fraction:
        raise UnwrapFailure(f"{jumps:.1%} of phase increments exceed pi/2; pilot SNR too low")
    phase = np.unwrap(np.angle(z))
    t = np.arange(z.size, dtype=float)
    t -= t.mean()
    slope = np.dot(t, phase - phase.mean()) / np.dot(t, t)
    return slope * fs / (2 * np.pi)


# --------------------------------------------------------------------------
# UKF


@dataclass(frozen=True)
class UkfConfig:
    process_noise_var: float  # rad^2 per filter step
    measurement_noise_var: float  # complex noise variance of one pilot sample
    init_phase_var: float = 1.0
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 2.0

    def __post_init__(self):
        for name in ("process_noise_var", "measurement_noise_var", "init_phase_var"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError("must be positive", name)

    @classmethod
    def for_link(cls, combined_linewidth, step_rate, measurement_noise_var, **kw):
        q = 2 * math.pi * combined_linewidth / step_rate
        return cls(max(q, 1e-15), measurement_noise_var, **kw)


@dataclass
class PhaseTrack:
    freq_offset_hat: float  # LO minus transmitter carrier, Hz
    pilot_freq_hat: float  # observed pilot frequency at the receiver, Hz
    phase_trajectory: np.ndarray  # residual pilot phase per sample after removing pilot_freq_hat
    pilot_snr_hat: float  # dB within the pilot bandwidth
    residual_phase_var: float  # steady-state posterior variance, rad^2
    decimation: int = 1
    posterior_var: np.ndarray = field(default=None, repr=False)
    step_phase: np.ndarray = field(default=None, repr=False)


@numba.njit(cache=True)
def _ukf_kernel(zr, zi, amp, q, r, theta0, p0, alpha, beta, kappa):
    n = zr.size
    theta = np.empty(n)
    post = np.empty(n)
    nis = np.empty(n)
    lam = alpha * alpha * (1.0 + kappa) - 1.0
    wm0 = lam / (1.0 + lam)
    wc0 = wm0 + (1.0 - alpha * alpha + beta)
    wi = 0.5 / (1.0 + lam)
    th = theta0
    P = p0
    rc = r / 2.0  # per-component measurement variance
    for k in range(n):
        Pm = P + q
        s = math.sqrt((1.0 + lam) * Pm)
        x0 = th
        x1 = th + s
        x2 = th - s
        a0, b0 = amp * math.cos(x0), amp * math.sin(x0)
        a1, b1 = amp * math.cos(x1), amp * math.sin(x1)
        a2, b2 = amp * math.cos(x2), amp * math.sin(x2)
        ma = wm0 * a0 + wi * (a1 + a2)
        mb = wm0 * b0 + wi * (b1 + b2)
        d0a, d0b = a0 - ma, b0 - mb
        d1a, d1b = a1 - ma, b1 - mb
        d2a, d2b = a2 - ma, b2 - mb
        saa = wc0 * d0a * d0a + wi * (d1a * d1a + d2a * d2a) + rc
        sbb = wc0 * d0b * d0b + wi * (d1b * d1b + d2b * d2b) + rc
        sab = wc0 * d0a * d0b + wi * (d1a * d1b + d2a * d2b)
        ca = wi * (s * d1a - s * d2a)
        cb = wi * (s * d1b - s * d2b)
        det = saa * sbb - sab * sab
        ia, ib, iab = sbb / det, saa / det, -sab / det
        ka = ca * ia + cb * iab
        kb = ca * iab + cb * ib
        ea = zr[k] - ma
        eb = zi[k] - mb
        th = th + ka * ea + kb * eb
        P = Pm - (ka * (saa * ka + sab * kb) + kb * (sab * ka + sbb * kb))
        if P < 1e-30:
            P = 1e-30
        theta[k] = th
        post[k] = P
        nis[k] = ea * (ia * ea + iab * eb) + eb * (iab * ea + ib * eb)
    return theta, post, nis


def ukf_filter(z, amplitude, config: UkfConfig, theta0=None):
    """Run the scalar random-walk-phase UKF on complex pilot samples.

    Returns ``(theta, posterior_var, nis)`` per step.
    """
    z = np.ascontiguousarray(z, dtype=complex)
    if theta0 is None:
        theta0 = float(np.angle(z[0]))
    th, post, nis = _ukf_kernel(
        np.ascontiguousarray(z.real), np.ascontiguousarray(z.imag), float(amplitude),
        config.process_noise_var, config.measurement_noise_var, float(theta0),
        config.init_phase_var, config.alpha, config.beta, config.kappa,
    )
    if not np.all(np.isfinite(th)):
        raise DivergenceDetected("non-finite UKF phase estimate")
    _check_divergence(nis)
    return th, post, nis


def _check_divergence(nis, chunks=10, threshold=10.0):
    if nis.size < 10 * chunks:
        return
    m = np.array([c.mean() for c in np.array_split(nis, chunks)])
    # NIS of a two-component measurement has mean 2 when the filter is consistent
    if np.all(np.diff(m) > 0) and m[-1] > threshold * 2:
        raise DivergenceDetected(f"innovation variance keeps growing (last window NIS {m[-1]:.1f})")


def decimate_mean(z, factor):
    n = (z.size // factor) * factor
    return z[:n].reshape(-1, factor).mean(axis=1)


def _dirichlet_power(f, factor, fs):
    x = np.pi * f / fs
    num = np.sin(factor * x)
    den = factor * np.sin(x)
    out = np.ones_like(f)
    nz = np.abs(den) > 1e-15
    out[nz] = (num[nz] / den[nz]) ** 2
    return out


def pilot_measurement_noise(pilot: Pilot, f_hat, decimation):
    """Variance of the white-noise part of one block-averaged pilot sample."""
    n = pilot.mask.size
    f = sfft.fftfreq(n, d=1 / pilot.fs)
    gain = pilot.mask**2 * _dirichlet_power(f - f_hat, decimation, pilot.fs)
    return pilot.noise_density * float(gain.sum()) / n


def ukf_phase_track(pilot: Pilot, freq_hat, config: UkfConfig | None = None, decimation=1000,
                    combined_linewidth=200.0, f_pilot_tx=None, ukf_kw=None):
    """Track the pilot phase after removing the estimated tone frequency.

    The UKF runs on block averages of ``decimation`` samples; the per-sample
    phase is linearly interpolated between block centers.  Without an
    explicit ``config`` the noise variances come from the link and the pilot,
    and ``ukf_kw`` (init_phase_var, alpha, beta, kappa) is passed through.
    """
    fs = pilot.fs
    n = pilot.samples.size
    decimation = max(1, min(int(decimation), n))
    bb = pilot.samples * tone(n, -freq_hat, fs)
    z = decimate_mean(bb, decimation)
    if config is None:
        r = pilot_measurement_noise(pilot, freq_hat, decimation)
        config = UkfConfig.for_link(combined_linewidth, fs / decimation, r, **(ukf_kw or {}))
    amp = math.sqrt(pilot.power)
    th, post, _ = ukf_filter(z, amp, config)
    centers = (np.arange(z.size) + 0.5) * decimation - 0.5
    traj = np.interp(np.arange(n, dtype=float), centers, th)
    steady = post[post.size // 10 :] if post.size >= 10 else post
    freq_offset = (f_pilot_tx - freq_hat) if f_pilot_tx is not None else float("nan")
    return PhaseTrack(freq_offset, freq_hat, traj, pilot.snr_db, float(np.mean(steady)),
                      decimation, post, th)


# --------------------------------------------------------------------------
# demodulation


def align_symbols(tx, rx, max_lag=16, min_sigma=5.0):
    """Integer lag of ``rx`` relative to ``tx`` from the cross-correlation peak.

    Raises :class:`SyncFailure` when the peak does not stand ``min_sigma``
    sidelobe standard deviations above the sidelobe mean.
    """
    n = min(tx.size, rx.size)
    nfft = sfft.next_fast_len(2 * n)
    c = sfft.ifft(sfft.fft(rx[:n], nfft) * np.conj(sfft.fft(tx[:n], nfft)))
    lags = np.r_[0 : max_lag + 1, -max_lag:0]
    mags = np.abs(c[lags])
    k = int(np.argmax(mags))
    side = np.delete(mags, k)
    far = np.abs(c[max_lag + 1 : nfft - max_lag])
    ref = far if far.size > 32 else side
    sigma = ref.std()
    if not (sigma > 0 and (mags[k] - ref.mean()) / sigma >= min_sigma):
        raise SyncFailure("tx/rx cross-correlation peak is not significant")
    return int(lags[k])


def pair_symbols(tx, rx, lag):
    if lag > 0:
        return tx[:-lag], rx[lag:]
    if lag < 0:
        return tx[-lag:], rx[:lag]
    return tx, rx


def demod_and_match(samples, track: PhaseTrack, tx: TxConfig, tx_symbols=None, trim=None,
                    max_lag=16, frame_id=0):
    """Baseband shift, phase correction, matched filter and symbol pairing.

    ``samples`` are whitened and in SNU.  The quantum band sits at the
    pilot frequency minus the transmitted pilot-to-signal spacing.
    """
    x = np.asarray(samples, dtype=complex)
    n = x.size
    f_sig_rx = track.pilot_freq_hat - (tx.f_pilot - tx.f_signal)
    bb = x * tone(n, -f_sig_rx, tx.dac_rate) * np.exp(-1j * track.phase_trajectory[:n])
    rx = matched_filter(bb, tx.samples_per_symbol, tx.rrc_rolloff)
    trim = tx.rrc_span // 2 if trim is None else trim
    rx = rx[trim : rx.size - trim]
    if tx_symbols is None:
        return SymbolBlock(np.full(rx.size, np.nan + 0j), rx, frame_id)
    txs = np.asarray(tx_symbols)[trim : len(tx_symbols) - trim]
    lag = align_symbols(txs, rx, max_lag)
    txs, rx = pair_symbols(txs, rx, lag)
    return SymbolBlock(txs, rx, frame_id, {"lag": lag})


@dataclass
class DspResult:
    block: SymbolBlock
    track: PhaseTrack
    diagnostics: dict


def run_dsp(frame: SampleFrame, cal: CalibrationRecord, tx: TxConfig, tx_symbols=None,
            nominal_offset=240e6, combined_linewidth=200.0, decimation=1000, ukf: UkfConfig | None = None,
            ukf_kw=None):
    """Full receiver chain on one raw frame."""
    X = sfft.fft(np.asarray(frame.samples, dtype=complex))
    X *= whitening_response(X.size, cal, frame.fs)
    X = to_snu(X, cal)
    guess = tx.f_pilot - nominal_offset
    pilot = extract_pilot(None, guess, frame.fs, spectrum=X)
    f_hat = estimate_freq_offset(pilot, frame.fs)
    track = ukf_phase_track(pilot, f_hat, ukf, decimation, combined_linewidth, tx.f_pilot, ukf_kw)
    del pilot
    x = sfft.ifft(X)
    del X
    block = demod_and_match(x, track, tx, tx_symbols, frame_id=frame.frame_id)
    diag = {
        "frame_index": frame.frame_id,
        "freq_offset_hz": track.freq_offset_hat,
        "pilot_freq_hz": track.pilot_freq_hat,
        "pilot_snr_db": track.pilot_snr_hat,
        "residual_phase_var_rad2": track.residual_phase_var,
        "n_symbols": block.count,
        "lag_symbols": block.meta.get("lag", 0),
    }
    return DspResult(block, track, diag)
