"""Secret key rate for Gaussian-modulated coherent states with heterodyne detection.

    R = max(0, beta * I_AB - chi_E - Delta(n))

* ``I_AB`` covers both quadratures: ``log2(1 + SNR)`` with
  ``SNR = (tau eta V_M / 2) / (1 + V_el + tau xi / 2)`` (see :mod:`cvqkd.snu`).
* ``chi_E = S(AB) - S(ACD | B)`` for the entanglement-based picture: Alice
  holds half of an EPR state of variance ``V = V_M + 1``, the untrusted channel
  has transmittance ``eta`` and output excess noise ``xi``, and the trusted
  detector is a beamsplitter of transmittance ``tau`` mixing mode B with one
  half (C) of an EPR pair CD whose variance ``nu = 1 + 2 V_el / (1 - tau)``
  makes the detector add exactly ``V_el`` per measured quadrature.
* In finite-size mode the worst-case parameters of :mod:`cvqkd.estimation`
  replace the true ones and the privacy-amplification term
  ``Delta(n) = 7 sqrt(log2(2 / eps_bar) / n) + 2 / n log2(1 / eps_PA)`` is
  subtracted.

Two independent routes evaluate ``chi_E``: the symplectic spectrum of the
assembled covariance matrices (``method="covariance"``) and the closed-form
eigenvalues (``method="closed_form"``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize

from . import estimation
from .errors import ConfigError, DomainError, NoPositiveRate, NumericalInstability
from .snu import ChannelParams, db_to_transmittance

SYMBOL_RATE = 125e6
EIG_TOL = 1e-9


@dataclass(frozen=True)
class EpsilonBudget:
    """Failure probabilities; the total composes as ``2 eps_bar + eps_PE + eps_PA``."""

    eps_PE: float = 1e-10
    eps_PA: float = 1e-10
    eps_bar: float = 1e-10

    def __post_init__(self):
        for name in ("eps_PE", "eps_PA", "eps_bar"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError("must lie in (0, 1)", name)

    @property
    def eps_total(self):
        return 2 * self.eps_bar + self.eps_PE + self.eps_PA


@dataclass(frozen=True)
class BetaPreset:
    beta: float
    fer: float = 0.0


BETA_PRESETS = {
    "asymptotic": BetaPreset(0.96, 0.0),
    "finite": BetaPreset(0.974, 0.0),
    "actual_key": BetaPreset(0.9373, 0.3),
}


@dataclass
class KeyRateReport:
    I_AB: float
    chi_E: float
    delta_n: float
    rate_asymptotic: float
    rate_finite: float | None
    rate_clamped_zero: bool
    beta: float
    fer: float
    n: float | None
    mode: str
    params: dict
    worst_case_params: dict | None
    symbol_rate: float
    skr_bps: float  # rate x symbol rate; frame losses reported separately
    skr_bps_net: float  # rate x symbol rate x (1 - FER)
    epsilon: dict = field(default_factory=dict)

    @property
    def rate(self):
        return self.rate_asymptotic if self.mode == "asymptotic" else self.rate_finite

    def to_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# entropy and symplectic algebra


def g_entropy(x):
    """Von Neumann entropy (bits) of a thermal mode with symplectic eigenvalue ``x``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 1 - EIG_TOL) or np.any(~np.isfinite(x)):
        raise DomainError(f"g is defined for x >= 1, got min {np.min(x)!r}")
    x = np.maximum(x, 1.0)
    a = (x + 1) / 2
    b = (x - 1) / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        tb = np.where(b > 0, b * np.log2(np.where(b > 0, b, 1.0)), 0.0)
    out = a * np.log2(a) - tb
    return float(out) if out.ndim == 0 else out


def symplectic_form(n_modes):
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def symplectic_eigenvalues(gamma):
    """Symplectic spectrum from the moduli of the eigenvalues of ``i Omega gamma``."""
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.shape[0] // 2
    ev = np.abs(np.linalg.eigvals(1j * symplectic_form(n) @ gamma))
    return np.sort(ev)[::2]


def _checked_entropy(eigs, what):
    if np.any(eigs < 1 - EIG_TOL):
        raise NumericalInstability(f"unphysical {what}: symplectic eigenvalue {eigs.min():.12g} < 1")
    return float(np.sum(g_entropy(np.maximum(eigs, 1.0))))


def _two_mode(a, b, c):
    I2 = np.eye(2)
    Z = np.diag([1.0, -1.0])
    return np.block([[a * I2, c * Z], [c * Z, b * I2]])


def covariance_matrix(params: ChannelParams):
    """Covariance matrices ``(gamma_AB, gamma_ABCD)`` in (x1, p1, x2, p2, ...) order.

    ``gamma_ABCD`` is ordered A, B (after the detector beamsplitter), C, D.
    """
    V = params.V_M + 1
    T = params.eta
    tau = params.tau
    b = T * V + 1 - T + params.xi
    c_ab = math.sqrt(T) * math.sqrt(V * V - 1)
    gamma_ab = _two_mode(V, b, c_ab)
    if tau == 1:
        if params.V_el > 0:
            raise ConfigError("a unit-efficiency detector cannot add electronic noise in this model", "V_el")
        return gamma_ab, gamma_ab.copy()
    nu = 1 + 2 * params.V_el / (1 - tau)
    gamma_cd = _two_mode(nu, nu, math.sqrt(nu * nu - 1))
    g4 = np.zeros((8, 8))
    g4[:4, :4] = gamma_ab
    g4[4:, 4:] = gamma_cd
    s = math.sqrt(tau)
    r = math.sqrt(1 - tau)
    S = np.eye(8)
    I2 = np.eye(2)
    S[2:6, 2:6] = np.block([[s * I2, r * I2], [-r * I2, s * I2]])
    return gamma_ab, S @ g4 @ S.T


def _heterodyne_conditional(gamma, idx_b=(2, 3)):
    idx_b = list(idx_b)
    rest = [i for i in range(gamma.shape[0]) if i not in idx_b]
    gb = gamma[np.ix_(idx_b, idx_b)]
    gr = gamma[np.ix_(rest, rest)]
    sig = gamma[np.ix_(rest, idx_b)]
    return gr - sig @ np.linalg.inv(gb + np.eye(2)) @ sig.T


def _holevo_covariance(params):
    gamma_ab, gamma_full = covariance_matrix(params)
    s_ab = _checked_entropy(symplectic_eigenvalues(gamma_ab), "gamma_AB")
    cond = _heterodyne_conditional(gamma_full)
    s_cond = _checked_entropy(symplectic_eigenvalues(cond), "conditional state")
    return s_ab - s_cond


def closed_form_eigenvalues(params: ChannelParams):
    """``(l1, l2, l3, l4)``: spectra of gamma_AB and of the conditional state."""
    V = params.V_M + 1
    T = params.eta
    tau = params.tau
    chi_line = 1 / T - 1 + params.xi / T
    chi_het = (2 - tau + 2 * params.V_el) / tau
    chi_tot = chi_line + chi_het / T
    A = V * V * (1 - 2 * T) + 2 * T + T * T * (V + chi_line) ** 2
    B = T * T * (V * chi_line + 1) ** 2
    den = (T * (V + chi_tot)) ** 2
    C = (A * chi_het**2 + B + 1 + 2 * chi_het * (V * math.sqrt(B) + T * (V + chi_line))
         + 2 * T * (V * V - 1)) / den
    D = (V + math.sqrt(B) * chi_het) ** 2 / den

    def pair(s, p):
        disc = s * s - 4 * p
        if disc < 0:
            if disc < -1e-9 * s * s:
                raise NumericalInstability("negative discriminant in closed-form eigenvalues")
            disc = 0.0
        r = math.sqrt(disc)
        hi = (s + r) / 2
        # the product form avoids cancellation for the small root
        lo = p / hi
        return math.sqrt(hi), math.sqrt(lo)

    l1, l2 = pair(A, B)
    l3, l4 = pair(C, D)
    return l1, l2, l3, l4


def _holevo_closed_form(params):
    l1, l2, l3, l4 = closed_form_eigenvalues(params)
    e = np.array([l1, l2, l3, l4])
    if np.any(e < 1 - EIG_TOL):
        raise NumericalInstability(f"unphysical closed-form symplectic eigenvalue {e.min():.12g}")
    g = g_entropy(np.maximum(e, 1.0))
    return float(g[0] + g[1] - g[2] - g[3])


def holevo_bound(params: ChannelParams, method="closed_form"):
    """Holevo information ``chi_E`` (bits per symbol), clipped at 0 from rounding."""
    if method == "closed_form":
        chi = _holevo_closed_form(params)
    elif method == "covariance":
        chi = _holevo_covariance(params)
    else:
        raise ConfigError(f"unknown method {method!r}", "method")
    if chi < -1e-9:
        raise NumericalInstability(f"negative Holevo bound {chi:g}")
    return max(chi, 0.0)


def mutual_information(params: ChannelParams):
    """Alice-Bob mutual information for both quadratures of a heterodyne measurement."""
    signal = params.tau * params.eta * params.V_M / 2
    noise = 1 + params.V_el + params.tau * params.xi / 2
    return math.log2(1 + signal / noise)


def empirical_mutual_information(tx, rx):
    """``-log2(1 - rho^2)`` from the sample correlation of pooled quadratures."""
    x = np.concatenate([np.real(tx), np.imag(tx)])
    y = np.concatenate([np.real(rx), np.imag(rx)])
    rho = np.corrcoef(x, y)[0, 1]
    return -math.log2(1 - rho * rho)


def delta_n(n, eps_bar=1e-10, eps_PA=1e-10, dominant_only=False):
    if n < 1:
        raise ConfigError("must be at least 1", "n")
    d = 7 * math.sqrt(math.log2(2 / eps_bar) / n)
    if not dominant_only:
        d += 2 / n * math.log2(1 / eps_PA)
    return d


# --------------------------------------------------------------------------
# key rate


def key_symbols(N, pe_fraction=0.0, fer=0.0):
    """Symbols entering privacy amplification: untouched by PE and decoded."""
    return N * (1 - pe_fraction) * (1 - fer)


def key_rate(params: ChannelParams, beta, n=None, budget: EpsilonBudget | None = None, mode="asymptotic",
             fer=0.0, symbol_rate=SYMBOL_RATE, worst_case=None, pe_fraction=0.0,
             method="closed_form"):
    """Secret key rate report.

    ``n`` is the block size N.  In ``finite`` mode the worst-case parameters
    are either given (``worst_case=(eta_wc, xi_wc)``) or the expected ones
    for a block of N symbols, and Delta is evaluated on the key symbols
    ``N (1 - pe_fraction)(1 - fer)``.
    """
    if not 0 <= beta <= 1:
        raise ConfigError("must lie in [0, 1]", "beta")
    if not 0 <= fer < 1:
        raise ConfigError("must lie in [0, 1)", "fer")
    budget = budget or EpsilonBudget()
    I_true = mutual_information(params)
    chi_true = holevo_bound(params, method)
    r_asym = max(0.0, beta * I_true - chi_true)
    if mode == "asymptotic":
        I, chi, dn, r_fin, wc = I_true, chi_true, 0.0, None, None
        raw = beta * I_true - chi_true
    elif mode == "finite":
        if n is None:
            raise ConfigError("finite mode needs the block size", "n")
        if worst_case is None:
            worst_case = estimation.expected_worst_case(params, n, budget.eps_PE, pe_fraction)
        eta_wc, xi_wc = worst_case
        if eta_wc <= 0:
            wc = {"eta": eta_wc, "xi": xi_wc}
            I, chi, dn, raw = 0.0, 0.0, delta_n(max(key_symbols(n, pe_fraction, fer), 1), budget.eps_bar,
                                               budget.eps_PA), -np.inf
        else:
            p_wc = params.replace(eta=min(eta_wc, 1.0), xi=max(xi_wc, 0.0))
            wc = {"eta": p_wc.eta, "xi": p_wc.xi}
            I = mutual_information(p_wc)
            chi = holevo_bound(p_wc, method)
            dn = delta_n(key_symbols(n, pe_fraction, fer), budget.eps_bar, budget.eps_PA)
            raw = beta * I - chi - dn
        r_fin = max(0.0, raw)
    else:
        raise ConfigError(f"unknown mode {mode!r}", "mode")
    rate = r_asym if mode == "asymptotic" else r_fin
    return KeyRateReport(
        I_AB=I, chi_E=chi, delta_n=dn, rate_asymptotic=r_asym, rate_finite=r_fin,
        rate_clamped_zero=bool(raw <= 0), beta=beta, fer=fer, n=n, mode=mode,
        params=asdict(params), worst_case_params=wc, symbol_rate=symbol_rate,
        skr_bps=rate * symbol_rate, skr_bps_net=rate * symbol_rate * (1 - fer),
        epsilon={"eps_PE": budget.eps_PE, "eps_PA": budget.eps_PA, "eps_bar": budget.eps_bar,
                 "eps_total": budget.eps_total},
    )


def _raw_rate(params, beta, n, budget, mode, fer, pe_fraction):
    """Unclamped rate, used by root finders."""
    if mode == "asymptotic":
        return beta * mutual_information(params) - holevo_bound(params)
    eta_wc, xi_wc = estimation.expected_worst_case(params, n, budget.eps_PE, pe_fraction)
    if eta_wc <= 0:
        return -1.0
    p = params.replace(eta=min(eta_wc, 1.0), xi=max(xi_wc, 0.0))
    return (beta * mutual_information(p) - holevo_bound(p)
            - delta_n(key_symbols(n, pe_fraction, fer), budget.eps_bar, budget.eps_PA))


# --------------------------------------------------------------------------
# sweeps


@dataclass
class LossSweep:
    loss_db: np.ndarray
    rate: np.ndarray
    cutoff_db: float | None  # loss where the rate first reaches zero; None if never within the grid
    reports: list = field(default_factory=list, repr=False)


def rate_vs_loss_sweep(base: ChannelParams, loss_db, beta, mode="asymptotic", n=None,
                       budget: EpsilonBudget | None = None, fer=0.0, pe_fraction=0.0):
    """Key rate on a loss grid with ``xi`` held fixed at the channel output."""
    budget = budget or EpsilonBudget()
    loss_db = np.asarray(loss_db, dtype=float)
    reports = []
    for L in loss_db:
        p = base.replace(eta=db_to_transmittance(L))
        reports.append(key_rate(p, beta, n, budget, mode, fer, pe_fraction=pe_fraction))
    rate = np.array([r.rate for r in reports], dtype=float)
    cutoff = None
    pos = rate > 0
    if loss_db.size and pos[0] and not pos.all():
        k = int(np.argmin(pos))  # first non-positive grid point
        f = lambda L: _raw_rate(base.replace(eta=db_to_transmittance(L)), beta, n, budget, mode, fer,
                                pe_fraction)
        try:
            cutoff = optimize.brentq(f, loss_db[k - 1], loss_db[k], xtol=1e-6)
        except ValueError:
            cutoff = float(loss_db[k])
    return LossSweep(loss_db, rate, cutoff, reports)


def loss_cutoff(base: ChannelParams, beta, lo_db=0.0, hi_db=40.0, **kw):
    """Loss at which the rate reaches zero, by bracketing and bisection."""
    grid = np.linspace(lo_db, hi_db, int((hi_db - lo_db) * 2) + 1)
    return rate_vs_loss_sweep(base, grid, beta, **kw).cutoff_db


@dataclass
class FeasibilityGrid:
    N: np.ndarray
    beta: np.ndarray
    rate: np.ndarray  # shape (len(beta), len(N))
    min_N: list  # per beta, smallest grid N with a positive rate, or None


def blocksize_beta_grid(params: ChannelParams, N_grid, beta_grid, budget: EpsilonBudget | None = None,
                        fer=0.0, pe_fraction=0.0):
    budget = budget or EpsilonBudget()
    N_grid = np.asarray(N_grid, dtype=float)
    beta_grid = np.asarray(beta_grid, dtype=float)
    rate = np.zeros((beta_grid.size, N_grid.size))
    # the worst-case parameters depend on N only
    cache = {}
    for j, N in enumerate(N_grid):
        eta_wc, xi_wc = estimation.expected_worst_case(params, N, budget.eps_PE, pe_fraction)
        if eta_wc <= 0:
            cache[j] = None
            continue
        p = params.replace(eta=min(eta_wc, 1.0), xi=max(xi_wc, 0.0))
        cache[j] = (mutual_information(p), holevo_bound(p),
                    delta_n(key_symbols(N, pe_fraction, fer), budget.eps_bar, budget.eps_PA))
    for i, b in enumerate(beta_grid):
        for j in range(N_grid.size):
            if cache[j] is not None:
                I, chi, dn = cache[j]
                rate[i, j] = max(0.0, b * I - chi - dn)
    min_N = []
    for i in range(beta_grid.size):
        ok = np.flatnonzero(rate[i] > 0)
        min_N.append(float(N_grid[ok[0]]) if ok.size else None)
    return FeasibilityGrid(N_grid, beta_grid, rate, min_N)


def minimum_block_size(params, beta, budget=None, fer=0.0, pe_fraction=0.0, lo=1e6, hi=1e14):
    """Continuous minimal N with a positive finite-size rate (None if none below ``hi``)."""
    budget = budget or EpsilonBudget()
    f = lambda lg: _raw_rate(params, beta, 10**lg, budget, "finite", fer, pe_fraction)
    a, b = math.log10(lo), math.log10(hi)
    if f(b) <= 0:
        return None
    if f(a) > 0:
        return lo
    return 10 ** optimize.brentq(f, a, b, xtol=1e-9)


# --------------------------------------------------------------------------
# modulation variance


@dataclass(frozen=True)
class PhaseNoiseModel:
    """Linear excess-noise model ``xi(V_M) = xi_base + c V_M``.

    Residual phase error of variance ``s`` rotates a fraction of the signal
    into noise: at the channel output ``xi_pn = eta V_M s``, so ``c = eta s``.
    """

    xi_base: float
    c: float

    def __post_init__(self):
        if self.c < 0:
            raise ConfigError("must be non-negative", "c")
        if self.xi_base < 0:
            raise ConfigError("must be non-negative", "xi_base")

    def xi(self, V_M):
        return self.xi_base + self.c * V_M

    @classmethod
    def from_phase_variance(cls, xi_base, residual_phase_var, eta):
        return cls(xi_base, eta * residual_phase_var)


def fit_phase_noise_model(points, eta_target):
    """Fit ``xi = xi_base + eta V_M s`` to two or more ``(V_M, eta, xi)`` points.

    Returns the model at ``eta_target`` and the fitted phase variance ``s``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ConfigError("need at least two (V_M, eta, xi) points", "points")
    A = np.column_stack([np.ones(len(pts)), pts[:, 1] * pts[:, 0]])
    (xi_base, s), *_ = np.linalg.lstsq(A, pts[:, 2], rcond=None)
    if s < 0:
        s = 0.0
        xi_base = float(pts[:, 2].mean())
    return PhaseNoiseModel(max(float(xi_base), 0.0), float(eta_target * s)), float(s)


@dataclass
class ModulationOptimum:
    V_M: float
    rate: float
    report: KeyRateReport


def optimize_modulation_variance(base: ChannelParams, model: PhaseNoiseModel, beta, mode="asymptotic",
                                 n=None, budget=None, fer=0.0, bounds=(0.1, 50.0), grid_points=200):
    """Maximize the key rate over ``V_M`` with ``xi`` following ``model``.

    A log-spaced grid locates the best bracket, a bounded scalar search refines it.
    """
    budget = budget or EpsilonBudget()

    def rate(vm):
        p = base.replace(V_M=vm, xi=model.xi(vm))
        return key_rate(p, beta, n, budget, mode, fer).rate

    grid = np.geomspace(bounds[0], bounds[1], grid_points)
    rates = np.array([rate(v) for v in grid])
    if not np.any(rates > 0):
        raise NoPositiveRate(f"no positive key rate for V_M in [{bounds[0]:g}, {bounds[1]:g}]")
    k = int(np.argmax(rates))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    res = optimize.minimize_scalar(lambda v: -rate(v), bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-6 * hi})
    vm = float(res.x) if -res.fun >= rates[k] else float(grid[k])
    p = base.replace(V_M=vm, xi=model.xi(vm))
    rep = key_rate(p, beta, n, budget, mode, fer)
    return ModulationOptimum(vm, rep.rate, rep)
