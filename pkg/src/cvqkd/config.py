"""Scenario files.

YAML documents with explicit units in the field names.  Every numeric value
is coerced with ``float``/``int`` so that ``1e9`` (a string to YAML 1.1)
works as expected.  Bundled scenarios live in ``cvqkd/scenarios``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .channel import ChannelScenario
from .errors import ConfigError
from .io import sha256_text
from .security import BETA_PRESETS, EpsilonBudget
from .snu import ChannelParams
from .tx import TxConfig

DEFAULTS = {
    "name": "unnamed",
    "description": "",
    "channel": {
        "V_M_snu": None,
        "eta": None,
        "xi_msnu": None,
        "tau": None,
        "V_el_msnu": None,
        "linewidth_tx_hz": 100.0,
        "linewidth_rx_hz": 100.0,
        "delta_f_hz": 240e6,
        "raman_noise_msnu": 0.0,
        "detector_bandwidth_hz": 250e6,
        "detector_order": 2,
        "adc_gain": 1.0,
        "classical_channels": False,
    },
    "tx": {
        "symbol_rate_hz": 125e6,
        "dac_rate_hz": 1e9,
        "rrc_rolloff": 0.2,
        "rrc_span_symbols": 40,
        "f_signal_hz": 120e6,
        "f_pilot_hz": 220e6,
        "pilot_power_db": 20.0,
        "pilot_guard_hz": 5e6,
        "frame_len_samples": 10_000_000,
    },
    "ukf": {
        "decimation": 1000,
        "init_phase_var_rad2": 1.0,
        "alpha": 1.0,
        "beta": 2.0,
        "kappa": 2.0,
    },
    "security": {
        "beta_preset": "finite",
        "beta": None,
        "fer": None,
        "N_symbols": 1e8,
        "eps_PE": 1e-10,
        "eps_PA": 1e-10,
        "eps_bar": 1e-10,
        "pe_fraction": 0.0,
    },
    "run": {
        "frames": 20,
        "master_seed": 1,
        "calibration_samples": 10_000_000,
    },
    "sweep": {
        "loss_db_min": 10.0,
        "loss_db_max": 25.0,
        "loss_db_step": 0.5,
        "sweep_beta": 0.96,
        "N_grid": [float(k) * 1e9 for k in range(1, 41)],
        "beta_grid": [1.0, 0.99, 0.98, 0.97, 0.96],
        "sweep_fer": 0.3,
    },
}

_INT_FIELDS = {"detector_order", "rrc_span_symbols", "frame_len_samples", "decimation", "frames",
               "master_seed", "calibration_samples"}
_STR_FIELDS = {"name", "description", "beta_preset"}
_BOOL_FIELDS = {"classical_channels"}

# dataclass attribute -> scenario key, for error messages
_YAML_NAMES = {
    "V_M": "V_M_snu", "xi": "xi_msnu", "V_el": "V_el_msnu", "linewidth_tx": "linewidth_tx_hz",
    "linewidth_rx": "linewidth_rx_hz", "delta_f": "delta_f_hz", "raman_noise": "raman_noise_msnu",
    "detector_bandwidth": "detector_bandwidth_hz", "symbol_rate": "symbol_rate_hz",
    "dac_rate": "dac_rate_hz", "rrc_span": "rrc_span_symbols", "f_signal": "f_signal_hz",
    "f_pilot": "f_pilot_hz", "pilot_guard": "pilot_guard_hz", "frame_len": "frame_len_samples",
    "ukf.init_phase_var_rad2": "init_phase_var_rad2", "ukf.decimation": "decimation",
}


@dataclass(frozen=True)
class UkfSettings:
    decimation: int = 1000
    init_phase_var: float = 1.0
    alpha: float = 1.0
    beta: float = 2.0
    kappa: float = 2.0

    def __post_init__(self):
        if self.decimation < 1:
            raise ConfigError("must be at least 1", "ukf.decimation")
        if not self.init_phase_var > 0:
            raise ConfigError("must be positive", "ukf.init_phase_var_rad2")


@dataclass(frozen=True)
class Scenario:
    name: str
    tx: TxConfig
    channel: ChannelScenario
    ukf: UkfSettings
    budget: EpsilonBudget
    beta: float
    fer: float
    beta_preset: str
    N: float
    frames: int
    master_seed: int
    calibration_samples: int
    pe_fraction: float
    classical_channels: bool
    sweep: dict
    resolved: dict

    @property
    def params(self) -> ChannelParams:
        return self.channel.params

    @property
    def config_hash(self):
        return sha256_text(json.dumps(self.resolved, sort_keys=True))

    @property
    def symbols_per_run(self):
        return self.frames * self.tx.symbols_per_frame

    def check_finite_from_data(self):
        """Finite-size evaluation on simulated data needs at least N symbols."""
        if self.symbols_per_run < self.N:
            raise ConfigError(
                f"{self.frames} frames carry {self.symbols_per_run} symbols < N={self.N:g}", "run.frames"
            )

    def provenance(self):
        return {"scenario": self.name, "config_sha256": self.config_hash, "master_seed": self.master_seed}


def bundled_names():
    return sorted(p.name[:-5] for p in resources.files("cvqkd.scenarios").iterdir() if p.name.endswith(".yaml"))


def _read_source(source):
    if isinstance(source, dict):
        return copy.deepcopy(source)
    text = None
    p = Path(str(source))
    if p.exists():
        text = p.read_text()
    else:
        res = resources.files("cvqkd.scenarios") / f"{source}.yaml"
        if res.is_file():
            text = res.read_text()
    if text is None:
        raise ConfigError(f"no scenario file or bundled scenario named {source!r}", "scenario")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed YAML: {e}", "scenario") from None
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a mapping", "scenario")
    return doc


def _merge(defaults, doc, prefix=""):
    out = {}
    for k, v in doc.items():
        if k not in defaults:
            raise ConfigError("unknown field", prefix + k)
    for k, d in defaults.items():
        v = doc.get(k, d)
        key = prefix + k
        if isinstance(d, dict):
            if not isinstance(v, dict):
                raise ConfigError("must be a mapping", key)
            out[k] = _merge(d, v, key + ".")
        else:
            out[k] = _coerce(v, k, key)
    return out


def _coerce(v, k, key):
    if v is None:
        return None
    try:
        if k in _STR_FIELDS:
            return str(v)
        if k in _BOOL_FIELDS:
            if isinstance(v, str):
                return v.strip().lower() in ("1", "true", "yes", "on")
            return bool(v)
        if isinstance(v, list):
            return [float(x) for x in v]
        if k in _INT_FIELDS:
            f = float(v)
            if f != int(f):
                raise ValueError
            return int(f)
        f = float(v)
        if not math.isfinite(f):
            raise ValueError
        return f
    except (TypeError, ValueError):
        raise ConfigError(f"invalid value {v!r}", key) from None


def _apply_overrides(doc, overrides):
    for dotted, value in (overrides or {}).items():
        node = doc
        parts = dotted.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    return doc


def load_scenario(source, overrides=None) -> Scenario:
    """Load, validate and resolve a scenario; ``overrides`` maps dotted keys to values."""
    doc = _apply_overrides(_read_source(source), overrides)
    r = _merge(DEFAULTS, doc)
    ch, txd, uk, sec, run = r["channel"], r["tx"], r["ukf"], r["security"], r["run"]
    for f in ("V_M_snu", "eta", "xi_msnu", "tau", "V_el_msnu"):
        if ch[f] is None:
            raise ConfigError("required", "channel." + f)

    def build(cls, field_prefix, **kw):
        try:
            return cls(**kw)
        except ConfigError as e:
            msg = str(e).split(": ", 1)[-1] if e.field else str(e)
            name = _YAML_NAMES.get(e.field, e.field) or cls.__name__
            raise type(e)(msg, field_prefix + name) from None

    params = build(ChannelParams, "channel.", V_M=ch["V_M_snu"], eta=ch["eta"], xi=ch["xi_msnu"] * 1e-3,
                   tau=ch["tau"], V_el=ch["V_el_msnu"] * 1e-3, linewidth_tx=ch["linewidth_tx_hz"],
                   linewidth_rx=ch["linewidth_rx_hz"], delta_f=ch["delta_f_hz"])
    seed = run["master_seed"]
    if seed < 0 or seed >= 2**64:
        raise ConfigError("must be an unsigned 64-bit integer", "run.master_seed")
    tx = build(TxConfig, "tx.", symbol_rate=txd["symbol_rate_hz"], dac_rate=txd["dac_rate_hz"],
               rrc_rolloff=txd["rrc_rolloff"], rrc_span=txd["rrc_span_symbols"], f_signal=txd["f_signal_hz"],
               f_pilot=txd["f_pilot_hz"], pilot_power_db=txd["pilot_power_db"],
               pilot_guard=txd["pilot_guard_hz"], frame_len=txd["frame_len_samples"], seed=seed)
    chan = build(ChannelScenario, "channel.", params=params, fs=tx.dac_rate,
                 raman_noise=ch["raman_noise_msnu"] * 1e-3, seed=seed,
                 detector_bandwidth=ch["detector_bandwidth_hz"], detector_order=ch["detector_order"],
                 adc_gain=ch["adc_gain"])
    ukf = build(UkfSettings, "ukf.", decimation=uk["decimation"], init_phase_var=uk["init_phase_var_rad2"],
                alpha=uk["alpha"], beta=uk["beta"], kappa=uk["kappa"])
    preset = sec["beta_preset"]
    if preset not in BETA_PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(BETA_PRESETS)}", "security.beta_preset")
    beta = BETA_PRESETS[preset].beta if sec["beta"] is None else sec["beta"]
    fer = BETA_PRESETS[preset].fer if sec["fer"] is None else sec["fer"]
    if not 0 <= beta <= 1:
        raise ConfigError("must lie in [0, 1]", "security.beta")
    if not 0 <= fer < 1:
        raise ConfigError("must lie in [0, 1)", "security.fer")
    budget = build(EpsilonBudget, "security.", eps_PE=sec["eps_PE"], eps_PA=sec["eps_PA"], eps_bar=sec["eps_bar"])
    if not sec["N_symbols"] >= 1:
        raise ConfigError("must be at least 1", "security.N_symbols")
    if not 0 <= sec["pe_fraction"] < 1:
        raise ConfigError("must lie in [0, 1)", "security.pe_fraction")
    if run["frames"] < 1:
        raise ConfigError("must be at least 1", "run.frames")
    if run["calibration_samples"] < 2**14:
        raise ConfigError("must be at least one Welch segment (16384)", "run.calibration_samples")
    return Scenario(r["name"], tx, chan, ukf, budget, beta, fer, preset, sec["N_symbols"], run["frames"],
                    seed, run["calibration_samples"], sec["pe_fraction"], ch["classical_channels"],
                    r["sweep"], r)
