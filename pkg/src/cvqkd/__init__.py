"""Simulator and security calculator for a local-local-oscillator CV-QKD link.

Stages: :mod:`~cvqkd.snu` (units and calibration), :mod:`~cvqkd.tx`,
:mod:`~cvqkd.channel`, :mod:`~cvqkd.rx`, :mod:`~cvqkd.estimation`,
:mod:`~cvqkd.security`, and :mod:`~cvqkd.harness` tying them together.
"""

from .errors import *  # noqa: F401,F403
from .snu import CalibrationRecord, ChannelParams, calibrate, table1_params, to_snu
from .tx import SampleFrame, SymbolBlock, TxConfig
from .channel import ChannelScenario
from .estimation import ParamEstimate, estimate_params
from .security import EpsilonBudget, KeyRateReport, holevo_bound, key_rate, mutual_information

__version__ = "0.1.0"
