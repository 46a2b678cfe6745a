"""Channel parameter estimation from paired symbols.

Model per real quadrature (x and p pooled, ``m = 2 N`` samples)::

    y = t x + n,   t = sqrt(tau * eta / 2),   Var(n) = sigma^2 = 1 + V_el + tau * xi / 2

so ``eta = 2 t^2 / tau`` and ``xi = 2 (sigma^2 - 1 - V_el) / tau`` (channel-output
referred).  Point estimates::

    t_hat      = sum(x y) / sum(x^2)
    sigma2_hat = sum(y^2) / m - t_hat^2 sum(x^2) / m

Estimator spreads used for the confidence bounds::

    sigma_t     = sqrt((V_y + t^2 V_M) / (m V_M))     # Var of the covariance estimator / V_M
    sigma_noise = V_y * sqrt(2 / m)                    # Var of the Bob variance estimator

The key-rate worst case moves each parameter one-sided by ``z = Phi^-1(1 - eps_PE)``;
display intervals are two-sided with ``z = Phi^-1(1 - eps / 2)``.

Sufficient statistics ``(m, sum x^2, sum y^2, sum x y)`` are kept as exact
fractions so that pooling is associative and commutative bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, InsufficientData, NegativeTransmittance
from .snu import ChannelParams

MIN_SYMBOLS = 100_000
DEFAULT_EPS = 1e-10


@numba.njit(cache=True)
def _products_sum(a, b):
    # Neumaier-compensated sum of a*b; fixed order, so deterministic
    s = 0.0
    c = 0.0
    for i in range(a.size):
        v = a[i] * b[i]
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


def z_quantile(eps, two_sided=True):
    """Gaussian quantile for failure probability ``eps``."""
    if not 0 < eps < 1:
        raise ConfigError("must lie in (0, 1)", "epsilon")
    return float(-ndtri(eps / 2 if two_sided else eps))


@dataclass(frozen=True)
class SufficientStats:
    m: int  # real samples (two per complex symbol)
    sxx: Fraction
    syy: Fraction
    sxy: Fraction

    @classmethod
    def from_symbols(cls, tx, rx):
        x = np.asarray(tx)
        y = np.asarray(rx)
        if x.shape != y.shape:
            raise ConfigError("tx and rx differ in length", "block")
        if np.iscomplexobj(x) or np.iscomplexobj(y):
            x = np.concatenate([np.real(x), np.imag(x)])
            y = np.concatenate([np.real(y), np.imag(y)])
        xf = np.ascontiguousarray(x, dtype=float)
        yf = np.ascontiguousarray(y, dtype=float)
        # compensated per-block sums; everything after this is exact
        return cls(
            x.size,
            Fraction(_products_sum(xf, xf)),
            Fraction(_products_sum(yf, yf)),
            Fraction(_products_sum(xf, yf)),
        )

    def __add__(self, other):
        return SufficientStats(self.m + other.m, self.sxx + other.sxx, self.syy + other.syy,
                               self.sxy + other.sxy)

    @property
    def n_symbols(self):
        return self.m // 2

    def moments(self):
        """``(V_M_hat, V_y_hat, t_hat, sigma2_hat)`` as floats."""
        m = self.m
        vx = self.sxx / m
        vy = self.syy / m
        t = self.sxy / self.sxx
        s2 = vy - t * t * vx
        return float(vx), float(vy), float(t), float(s2)


@dataclass(frozen=True)
class ParamEstimate:
    eta_hat: float
    xi_hat: float  # SNU, channel output
    n_symbols: int
    cov_xy: float  # per real quadrature
    var_rx: float  # per real quadrature
    var_tx: float
    t_hat: float
    sigma2_hat: float
    tau: float
    V_el: float
    worst_case: tuple  # (eta_wc, xi_wc)
    epsilon_PE: float = DEFAULT_EPS
    frame_id: int = 0
    stats: SufficientStats = field(default=None, repr=False)

    @property
    def eta_wc(self):
        return self.worst_case[0]

    @property
    def xi_wc(self):
        return self.worst_case[1]

    def spreads(self):
        return estimator_spreads(self.t_hat, self.var_tx, self.var_rx, 2 * self.n_symbols)


@dataclass(frozen=True)
class Interval:
    eta_low: float
    eta_high: float
    xi_low: float
    xi_high: float
    z: float

    @property
    def xi_half_width(self):
        return 0.5 * (self.xi_high - self.xi_low)


def estimator_spreads(t, V_M, V_y, m):
    sigma_t = math.sqrt((V_y + t * t * V_M) / (m * V_M))
    sigma_noise = V_y * math.sqrt(2.0 / m)
    return sigma_t, sigma_noise


def _bounds(t, s2, sigma_t, sigma_noise, z, tau, V_el):
    t_lo = max(t - z * sigma_t, 0.0)
    t_hi = t + z * sigma_t
    eta_lo = 2 * t_lo**2 / tau
    eta_hi = 2 * t_hi**2 / tau
    xi_lo = 2 * (s2 - z * sigma_noise - 1 - V_el) / tau
    xi_hi = 2 * (s2 + z * sigma_noise - 1 - V_el) / tau
    return eta_lo, eta_hi, xi_lo, xi_hi


def estimate_from_stats(stats: SufficientStats, tau, V_el, epsilon_PE=DEFAULT_EPS, frame_id=0):
    if not 0 < tau <= 1:
        raise ConfigError(f"must lie in (0, 1], got {tau}", "tau")
    if stats.m <= 0 or stats.sxx <= 0:
        raise InsufficientData("no modulated symbols to estimate from")
    vx, vy, t, s2 = stats.moments()
    if t < 0:
        raise NegativeTransmittance(
            f"tx/rx covariance is negative ({t:.3g}); symbols are probably mis-paired",
            frame_index=frame_id,
        )
    eta = 2 * t * t / tau
    xi = 2 * (s2 - 1 - V_el) / tau
    st, sn = estimator_spreads(t, vx, vy, stats.m)
    z1 = z_quantile(epsilon_PE, two_sided=False)
    eta_wc, _, _, xi_wc = _bounds(t, s2, st, sn, z1, tau, V_el)
    return ParamEstimate(eta, xi, stats.n_symbols, float(stats.sxy / stats.m), vy, vx, t, s2,
                         tau, V_el, (eta_wc, xi_wc), epsilon_PE, frame_id, stats)


def estimate_params(block, tau, V_el, V_M=None, epsilon_PE=DEFAULT_EPS):
    """Estimate ``(eta, xi)`` and the one-sided worst case from a paired block.

    ``V_M`` is the nominal modulation variance; the estimator uses the
    empirical transmitted variance, and ``V_M`` only serves as a sanity check.
    """
    if block.rx_symbols is None:
        raise ConfigError("block carries no received symbols", "block")
    stats = SufficientStats.from_symbols(block.tx_symbols, block.rx_symbols)
    est = estimate_from_stats(stats, tau, V_el, epsilon_PE, block.frame_id)
    if V_M is not None and V_M > 0 and est.n_symbols >= 1000:
        rel = abs(est.var_tx / V_M - 1)
        if rel > 10 / math.sqrt(est.n_symbols) + 1e-3:
            raise ConfigError(f"transmitted variance {est.var_tx:.4g} is far from V_M={V_M:g}", "V_M")
    return est


def confidence_interval(est: ParamEstimate, epsilon_PE=DEFAULT_EPS, two_sided=True, min_symbols=MIN_SYMBOLS):
    """Gaussian confidence bounds on ``(eta, xi)``.

    Needs at least ``min_symbols`` symbols (default 1e5) for the Gaussian
    approximation of the estimator distributions to be meaningful.
    """
    if est.n_symbols < min_symbols:
        raise InsufficientData(f"{est.n_symbols} symbols is below the Gaussian-regime floor {min_symbols}",
                               frame_index=est.frame_id)
    z = z_quantile(epsilon_PE, two_sided)
    st, sn = est.spreads()
    return Interval(*_bounds(est.t_hat, est.sigma2_hat, st, sn, z, est.tau, est.V_el), z)


def pool(*estimates, epsilon_PE=None):
    """Merge estimates through their sufficient statistics."""
    if not estimates:
        raise InsufficientData("nothing to pool")
    first = estimates[0]
    stats = first.stats
    for e in estimates[1:]:
        if e.tau != first.tau or e.V_el != first.V_el:
            raise ConfigError("estimates use different calibrations", "tau")
        stats = stats + e.stats
    eps = first.epsilon_PE if epsilon_PE is None else epsilon_PE
    return estimate_from_stats(stats, first.tau, first.V_el, eps, estimates[-1].frame_id)


@dataclass(frozen=True)
class SeriesRow:
    frame_index: int
    accumulated_symbols: int
    xi_hat: float
    ci_low: float
    ci_high: float
    classical_channels: bool = False


def cumulative_series(estimates, epsilon=DEFAULT_EPS, classical_channels=False):
    """Pooled excess noise and two-sided interval after each frame."""
    rows = []
    acc = None
    for e in estimates:
        acc = e if acc is None else pool(acc, e)
        ci = confidence_interval(acc, epsilon, two_sided=True, min_symbols=0)
        rows.append(SeriesRow(e.frame_id, acc.n_symbols, acc.xi_hat, ci.xi_low, ci.xi_high,
                              classical_channels))
    return rows


def expected_statistics(params: ChannelParams):
    """Population ``(t, V_M, V_y, sigma^2)`` of the symbol model."""
    t = math.sqrt(params.tau * params.eta / 2)
    s2 = 1 + params.V_el + params.tau * params.xi / 2
    return t, params.V_M, t * t * params.V_M + s2, s2


def pe_symbols(N, pe_fraction=0.0):
    """Symbols available for parameter estimation (all of them when ``pe_fraction`` is 0)."""
    if not 0 <= pe_fraction < 1:
        raise ConfigError("must lie in [0, 1)", "pe_fraction")
    return N if pe_fraction == 0 else N * pe_fraction


def expected_worst_case(params: ChannelParams, N, epsilon_PE=DEFAULT_EPS, pe_fraction=0.0):
    """Worst-case ``(eta, xi)`` that a block of ``N`` symbols would give on average."""
    t, vm, vy, s2 = expected_statistics(params)
    m = 2 * pe_symbols(N, pe_fraction)
    st, sn = estimator_spreads(t, vm, vy, m)
    z = z_quantile(epsilon_PE, two_sided=False)
    eta_wc, _, _, xi_wc = _bounds(t, s2, st, sn, z, params.tau, params.V_el)
    return eta_wc, xi_wc
