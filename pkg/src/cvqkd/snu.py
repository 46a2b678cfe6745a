"""Shot-noise units, detector calibration and channel parameters.

Conventions used throughout the package
---------------------------------------
* Quadratures are scaled so that vacuum has variance 1 (SNU).  A coherent
  state with amplitude ``alpha`` has quadrature means ``(2 Re alpha, 2 Im alpha)``
  and Gaussian modulation of variance ``V_M`` puts ``V_M`` on each quadrature.
* Received symbols are the calibrated heterodyne outputs.  Calibration fixes
  the vacuum-only output to 1 per quadrature, so a symbol is::

      y = sqrt(tau * eta / 2) * x + n,   Var(n) = 1 + V_el + tau * xi / 2

  where ``V_el`` is the measured electronic-to-shot-noise variance ratio
  and ``xi`` is the excess noise at the channel output (before the trusted
  detector efficiency ``tau``).  The factor 1/2 is the heterodyne split.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import signal

from .errors import ConfigError, DegenerateCalibration, NegativeLoss

CALIBRATION_SCHEMA = "cvqkd.calibration/1"
WELCH_SEGMENT = 2**14


def quadrature_variance(samples):
    """Per-quadrature variance of complex samples (mean of Var(Re), Var(Im))."""
    z = np.asarray(samples)
    if np.iscomplexobj(z):
        return 0.5 * (np.var(z.real) + np.var(z.imag))
    return float(np.var(z))


def welch_psd(samples, fs, nperseg=WELCH_SEGMENT):
    """Two-sided averaged periodogram, frequencies ascending.

    Scaled so that ``psd.mean() * fs`` equals the mean power ``E|z|^2``.
    Segments do not overlap, so PSDs of frames cut on segment boundaries pool
    exactly into the PSD of the whole capture.
    """
    z = np.asarray(samples)
    nperseg = min(nperseg, z.size)
    f, p = signal.welch(z, fs=fs, nperseg=nperseg, noverlap=0, return_onesided=False,
                        detrend=False, scaling="density")
    order = np.argsort(f)
    return f[order], p[order]


@dataclass(frozen=True)
class CalibrationRecord:
    """Vacuum and electronic noise statistics defining the SNU scale.

    Variances are per quadrature, in raw ADC units.  ``psd_freqs`` and the two
    PSDs come from Welch averaging and feed the whitening filter.
    """

    vacuum_variance_raw: float
    electronic_variance_raw: float
    n_samples: int
    fs: float = 1e9
    psd_freqs: np.ndarray = field(default=None, repr=False, compare=False)
    vacuum_psd: np.ndarray = field(default=None, repr=False, compare=False)
    electronic_psd: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (math.isfinite(self.vacuum_variance_raw) and math.isfinite(self.electronic_variance_raw)):
            raise DegenerateCalibration("calibration variances must be finite")
        if self.electronic_variance_raw <= 0:
            raise DegenerateCalibration("electronic noise variance must be positive")
        if self.vacuum_variance_raw <= self.electronic_variance_raw:
            raise DegenerateCalibration(
                f"vacuum variance {self.vacuum_variance_raw:g} does not exceed electronic "
                f"variance {self.electronic_variance_raw:g}; check LO power and detector"
            )

    @classmethod
    def from_variances(cls, vacuum_variance_raw, electronic_variance_raw, n_samples=0, fs=1e9):
        return cls(float(vacuum_variance_raw), float(electronic_variance_raw), int(n_samples), fs)

    @property
    def shot_noise_raw(self):
        """SNU normalization factor: raw variance corresponding to 1 SNU."""
        return self.vacuum_variance_raw - self.electronic_variance_raw

    @property
    def v_el(self):
        """Electronic noise in SNU."""
        return self.electronic_variance_raw / self.shot_noise_raw

    def to_dict(self):
        d = {
            "schema": CALIBRATION_SCHEMA,
            "vacuum_variance_raw": self.vacuum_variance_raw,
            "electronic_variance_raw": self.electronic_variance_raw,
            "n_samples": self.n_samples,
            "fs_hz": self.fs,
        }
        if self.vacuum_psd is not None:
            d["psd_freqs_hz"] = np.asarray(self.psd_freqs).tolist()
            d["vacuum_psd_raw_per_hz"] = np.asarray(self.vacuum_psd).tolist()
            d["electronic_psd_raw_per_hz"] = np.asarray(self.electronic_psd).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("schema") != CALIBRATION_SCHEMA:
            raise ConfigError(f"unsupported calibration schema {d.get('schema')!r}", "schema")
        arr = lambda k: None if k not in d else np.asarray(d[k], dtype=float)
        return cls(
            float(d["vacuum_variance_raw"]),
            float(d["electronic_variance_raw"]),
            int(d["n_samples"]),
            float(d["fs_hz"]),
            arr("psd_freqs_hz"),
            arr("vacuum_psd_raw_per_hz"),
            arr("electronic_psd_raw_per_hz"),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def calibrate(vacuum_frames, electronic_frames, fs=1e9, nperseg=WELCH_SEGMENT):
    """Build a :class:`CalibrationRecord` from raw detector captures.

    ``vacuum_frames`` are recorded with the LO on and the signal blocked,
    ``electronic_frames`` with both blocked.  Each argument is an array or a
    sequence of arrays; statistics are pooled by sample count so the result
    does not depend on how the capture was split into frames.
    """
    vac = _as_frames(vacuum_frames, "vacuum_frames")
    ele = _as_frames(electronic_frames, "electronic_frames")
    vac_var, n_vac = _pooled_variance(vac)
    ele_var, _ = _pooled_variance(ele)
    freqs, vac_psd = _pooled_psd(vac, fs, nperseg)
    _, ele_psd = _pooled_psd(ele, fs, nperseg)
    return CalibrationRecord(vac_var, ele_var, n_vac, fs, freqs, vac_psd, ele_psd)


def _as_frames(frames, name):
    if isinstance(frames, np.ndarray) and frames.ndim == 1:
        frames = [frames]
    frames = [np.asarray(f) for f in frames]
    if not frames or any(f.size == 0 for f in frames):
        raise ConfigError("at least one non-empty frame is required", name)
    return frames


def _pooled_variance(frames):
    n = sum(f.size for f in frames)
    s1 = sum(np.sum(f) for f in frames)
    s2 = sum(np.sum(np.abs(f) ** 2) for f in frames)
    mean = s1 / n
    if np.iscomplexobj(mean):
        var = (s2 / n - abs(mean) ** 2) / 2
    else:
        var = s2 / n - mean**2
    return float(var), n


def _pooled_psd(frames, fs, nperseg):
    total = None
    weight = 0
    for f in frames:
        freqs, p = welch_psd(f, fs, nperseg)
        if total is not None and p.shape != total.shape:
            raise ConfigError("calibration frames must all be at least one segment long", "frames")
        nseg = max(f.size // nperseg, 1)
        total = p * nseg if total is None else total + p * nseg
        weight += nseg
    return freqs, total / weight


def to_snu(raw, cal):
    """Scale raw samples so that 1 SNU of shot noise has unit variance."""
    return np.asarray(raw) / math.sqrt(cal.shot_noise_raw)


def from_snu(x, cal):
    return np.asarray(x) * math.sqrt(cal.shot_noise_raw)


def db_to_transmittance(loss_db):
    loss_db = np.asarray(loss_db, dtype=float)
    if np.any(loss_db < 0):
        raise NegativeLoss("loss must be non-negative", "loss_db")
    t = 10.0 ** (-loss_db / 10.0)
    return float(t) if t.ndim == 0 else t


def transmittance_to_db(eta):
    return -10.0 * np.log10(eta)


def backpropagate_excess_noise(xi_at_receiver, tau):
    """Refer excess noise measured behind the detector back to the channel output."""
    if not 0 < tau <= 1:
        raise ConfigError(f"tau must lie in (0, 1], got {tau}", "tau")
    return xi_at_receiver / tau


@dataclass(frozen=True)
class ChannelParams:
    """Link parameters in SNU and Hz.

    ``xi`` is referred to the channel output.  ``delta_f`` is the LO frequency
    minus the transmitter carrier frequency.
    """

    V_M: float
    eta: float
    xi: float
    tau: float
    V_el: float
    linewidth_tx: float = 100.0
    linewidth_rx: float = 100.0
    delta_f: float = 240e6

    def __post_init__(self):
        checks = [
            ("V_M", self.V_M >= 0, "must be non-negative"),
            ("eta", 0 < self.eta <= 1, "must lie in (0, 1]"),
            ("tau", 0 < self.tau <= 1, "must lie in (0, 1]"),
            ("xi", self.xi >= 0, "must be non-negative"),
            ("V_el", self.V_el >= 0, "must be non-negative"),
            ("linewidth_tx", self.linewidth_tx >= 0, "must be non-negative"),
            ("linewidth_rx", self.linewidth_rx >= 0, "must be non-negative"),
        ]
        for name, ok, msg in checks:
            value = getattr(self, name)
            if not (ok and math.isfinite(value)):
                raise ConfigError(f"{msg}, got {value!r}", name)

    @property
    def combined_linewidth(self):
        return self.linewidth_tx + self.linewidth_rx

    @property
    def loss_db(self):
        return float(transmittance_to_db(self.eta))

    def replace(self, **changes):
        return replace(self, **changes)


# Measured link configurations: (km, V_M, eta, xi [mSNU], tau, V_el [mSNU], N, CWDM on)
TABLE1 = {
    "table1-100km-off": (100, 9.41, 0.0180, 0.714, 0.685, 19.62, 1e8, False),
    "table1-100km-on": (100, 9.41, 0.0184, 0.760, 0.685, 19.25, 1e8, True),
    "table1-100km-on-1g6": (100, 9.41, 0.0183, 0.712, 0.685, 19.26, 1.6e9, True),
    "table1-120km-on": (120, 4.71, 0.0096, 0.444, 0.685, 18.99, 1e8, True),
}


def table1_params(name):
    _, vm, eta, xi, tau, vel, _, _ = TABLE1[name]
    return ChannelParams(V_M=vm, eta=eta, xi=xi * 1e-3, tau=tau, V_el=vel * 1e-3)
