"""Transmitter DSP: Gaussian symbols, RRC shaping, SSB shift and pilot tone."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import signal

from . import rng as _rng
from .errors import AliasRisk, ConfigError, SpectralOverlap


@dataclass(frozen=True)
class TxConfig:
    symbol_rate: float = 125e6
    dac_rate: float = 1e9
    rrc_rolloff: float = 0.2
    rrc_span: int = 40  # symbols
    f_signal: float = 120e6
    f_pilot: float = 220e6
    pilot_power_db: float = 20.0  # relative to the mean quantum symbol power
    pilot_guard: float = 5e6
    frame_len: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        sps = self.dac_rate / self.symbol_rate
        if abs(sps - round(sps)) > 1e-9 or round(sps) < 2:
            raise ConfigError("dac_rate must be an integer multiple (>=2) of symbol_rate", "dac_rate")
        if not 0 < self.rrc_rolloff < 1:
            raise ConfigError(f"must lie in (0, 1), got {self.rrc_rolloff}", "rrc_rolloff")
        if self.rrc_span < 2 or self.rrc_span % 2:
            raise ConfigError("must be a positive even number of symbols", "rrc_span")
        if self.signal_band_edge >= self.f_pilot - self.pilot_guard:
            raise SpectralOverlap(
                f"signal band edge {self.signal_band_edge / 1e6:.1f} MHz reaches the pilot guard band",
                "f_pilot",
            )
        if not self.f_pilot < self.dac_rate / 2:
            raise AliasRisk("pilot must lie below dac_rate/2", "f_pilot")
        if self.frame_len % self.samples_per_symbol:
            raise ConfigError("must be a multiple of samples_per_symbol", "frame_len")

    @property
    def samples_per_symbol(self):
        return int(round(self.dac_rate / self.symbol_rate))

    @property
    def symbols_per_frame(self):
        return self.frame_len // self.samples_per_symbol

    @property
    def occupied_bandwidth(self):
        return self.symbol_rate * (1 + self.rrc_rolloff)

    @property
    def signal_band_edge(self):
        return self.f_signal + self.occupied_bandwidth / 2

    def pilot_amplitude(self, V_M):
        """Pilot amplitude giving ``pilot_power_db`` over the symbol power 2*V_M."""
        return math.sqrt(10 ** (self.pilot_power_db / 10) * 2 * V_M)


@dataclass
class SymbolBlock:
    """Paired symbols of one frame, complex ``x + i p`` in SNU."""

    tx_symbols: np.ndarray
    rx_symbols: np.ndarray | None = None
    frame_id: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rx_symbols is not None and len(self.rx_symbols) != len(self.tx_symbols):
            raise ConfigError("tx and rx symbol sequences differ in length", "rx_symbols")

    @property
    def count(self):
        return len(self.tx_symbols)


@dataclass
class SampleFrame:
    """Complex detector output of one frame at the converter rate."""

    samples: np.ndarray
    fs: float
    frame_id: int = 0
    units: str = "raw"
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)


def draw_symbols(n, V_M, seed, frame_id=0):
    """I.i.d. complex Gaussian symbols with variance ``V_M`` per quadrature."""
    if n <= 0:
        raise ConfigError("must be positive", "n")
    if V_M < 0:
        raise ConfigError("must be non-negative", "V_M")
    if isinstance(seed, np.random.Generator):
        g = seed
    else:
        g = _rng.generator(seed, frame_id, _rng.SYMBOLS)
    q = g.standard_normal((2, n))
    sym = math.sqrt(V_M) * (q[0] + 1j * q[1])
    return SymbolBlock(sym, frame_id=frame_id)


def rrc_taps(rolloff, span_symbols, sps):
    """Unit-energy root-raised-cosine FIR of ``span_symbols * sps + 1`` taps."""
    half = span_symbols * sps // 2
    t = np.arange(-half, half + 1) / sps
    h = np.empty_like(t)
    b = rolloff
    center = t == 0
    singular = np.isclose(np.abs(4 * b * t), 1.0)
    regular = ~(center | singular)
    tr = t[regular]
    h[regular] = (np.sin(np.pi * tr * (1 - b)) + 4 * b * tr * np.cos(np.pi * tr * (1 + b))) / (
        np.pi * tr * (1 - (4 * b * tr) ** 2)
    )
    h[center] = 1 - b + 4 * b / np.pi
    h[singular] = b / math.sqrt(2) * (
        (1 + 2 / np.pi) * math.sin(np.pi / (4 * b)) + (1 - 2 / np.pi) * math.cos(np.pi / (4 * b))
    )
    h /= math.sqrt(np.sum(h**2))
    # enforce exact symmetry against rounding
    return 0.5 * (h + h[::-1])


def raised_cosine(F, rolloff):
    """Raised-cosine spectrum in symbol-rate units; sums to 1 over integer shifts."""
    a = np.abs(np.asarray(F, dtype=float))
    lo, hi = (1 - rolloff) / 2, (1 + rolloff) / 2
    out = np.zeros_like(a)
    out[a <= lo] = 1.0
    mid = (a > lo) & (a < hi)
    out[mid] = 0.5 * (1 + np.cos(np.pi / rolloff * (a[mid] - lo)))
    return out


def rrc_response(n_samples, sps, rolloff):
    """Exact RRC frequency response on an ``n_samples`` FFT grid (unit energy)."""
    F = sfft.fftfreq(n_samples) * sps
    return np.sqrt(sps * raised_cosine(F, rolloff))


def shape_and_upsample(symbols, sps, rolloff=0.2, taps=None):
    """Upsample by ``sps`` and pulse-shape.

    With ``taps`` the filter is applied as a linear FIR and the output carries
    ``len(taps) - 1`` transient samples.  Without taps the exact RRC response
    is applied circularly over the frame, giving exactly ``n * sps`` samples
    with no truncation ISI.
    """
    s = np.asarray(symbols, dtype=complex)
    if taps is not None:
        up = np.zeros(s.size * sps, dtype=complex)
        up[::sps] = s
        return signal.oaconvolve(up, taps)
    n = s.size * sps
    spec = np.tile(sfft.fft(s), sps) * rrc_response(n, sps, rolloff)
    return sfft.ifft(spec)


def matched_filter(waveform, sps, rolloff=0.2, taps=None):
    """Matched RRC filter followed by symbol-rate sampling.

    Inverse of :func:`shape_and_upsample` for the same ``taps`` argument; the
    FIR variant trims the combined filter delay.
    """
    w = np.asarray(waveform, dtype=complex)
    if taps is not None:
        y = signal.oaconvolve(w, taps)
        delay = len(taps) - 1
        n_sym = (w.size - (len(taps) - 1)) // sps
        return y[delay : delay + n_sym * sps : sps]
    if w.size % sps:
        raise ConfigError("waveform length must be a multiple of sps", "waveform")
    m = w.size // sps
    spec = sfft.fft(w) * rrc_response(w.size, sps, rolloff)
    return sfft.ifft(spec.reshape(sps, m).sum(axis=0)) / sps


def ssb_shift(waveform, f_shift, fs, occupied_bandwidth=0.0):
    """Translate a complex waveform by ``f_shift`` Hz."""
    if abs(f_shift) + occupied_bandwidth / 2 >= fs / 2:
        raise AliasRisk(f"shift {f_shift / 1e6:g} MHz plus half bandwidth exceeds fs/2", "f_shift")
    w = np.asarray(waveform, dtype=complex)
    if f_shift == 0:
        return w.copy()
    return w * tone(w.size, f_shift, fs)


def tone(n, f, fs, start=0):
    """``exp(i 2 pi f k / fs)`` for ``k = start .. start + n - 1``."""
    n = int(n)
    if n <= 4096:
        k = np.arange(start, start + n, dtype=float)
        # reduce the phase in turns before scaling to radians to keep precision
        return np.exp(2j * np.pi * np.mod(k * (f / fs), 1.0))
    # outer product of a coarse and a fine grid: exact to a few ulp, far cheaper
    b = 4096
    rows = -(-n // b)
    step = np.mod(b * (f / fs), 1.0)
    coarse = tone(rows, step, 1.0) * np.exp(2j * np.pi * np.mod(start * (f / fs), 1.0))
    fine = tone(b, f, fs)
    return np.outer(coarse, fine).ravel()[:n]


def add_pilot(waveform, f_pilot, amplitude, fs, signal_band=None):
    """Add a complex pilot tone; ``signal_band=(lo, hi)`` guards against overlap."""
    if abs(f_pilot) >= fs / 2:
        raise AliasRisk("pilot outside Nyquist band", "f_pilot")
    if amplitude < 0:
        raise ConfigError("must be non-negative", "amplitude")
    if signal_band is not None and signal_band[0] <= f_pilot <= signal_band[1]:
        raise SpectralOverlap(
            f"pilot at {f_pilot / 1e6:g} MHz lies inside the signal band", "f_pilot"
        )
    w = np.asarray(waveform, dtype=complex)
    if amplitude == 0:
        return w.copy()
    return w + amplitude * tone(w.size, f_pilot, fs)


def transmit_frame(config: TxConfig, V_M, frame_id=0, with_pilot=True):
    """Full transmitter chain for one frame; returns ``(waveform, SymbolBlock)``."""
    block = draw_symbols(config.symbols_per_frame, V_M, config.seed, frame_id)
    wave = shape_and_upsample(block.tx_symbols, config.samples_per_symbol, config.rrc_rolloff)
    wave = ssb_shift(wave, config.f_signal, config.dac_rate, config.occupied_bandwidth)
    if with_pilot:
        band = (config.f_signal - config.occupied_bandwidth / 2, config.signal_band_edge)
        wave = add_pilot(wave, config.f_pilot, config.pilot_amplitude(V_M), config.dac_rate, band)
    return wave, block
