import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cvqkd import estimation as est
from cvqkd import snu
from cvqkd.errors import InsufficientData, NegativeTransmittance
from cvqkd.tx import SymbolBlock
from oracles import inverse_normal_tail


def gaussian_block(p: snu.ChannelParams, n, seed, frame_id=0, noise=None):
    """Direct draw from the symbol-level channel model (no waveforms)."""
    g = np.random.default_rng(seed)
    x = math.sqrt(p.V_M) * (g.standard_normal(n) + 1j * g.standard_normal(n))
    t = math.sqrt(p.tau * p.eta / 2)
    s2 = 1 + p.V_el + p.tau * p.xi / 2
    if noise is None:
        noise = g.standard_normal(n) + 1j * g.standard_normal(n)
    return SymbolBlock(x, t * x + math.sqrt(s2) * noise, frame_id)


ON = snu.table1_params("table1-100km-on")
OFF = snu.table1_params("table1-100km-off")


def test_identity_channel():
    p = snu.ChannelParams(V_M=10.0, eta=1.0, xi=0.0, tau=1.0, V_el=0.0)
    e = est.estimate_params(gaussian_block(p, 10**6, 1), 1.0, 0.0, 10.0)
    assert e.eta_hat == pytest.approx(1.0, abs=5e-3)
    assert e.xi_hat == pytest.approx(0.0, abs=1e-2)


def test_closed_loop_100km_on_within_own_interval():
    e = est.estimate_params(gaussian_block(ON, 2 * 10**6, 2), ON.tau, ON.V_el, ON.V_M)
    ci = est.confidence_interval(e)
    assert ci.eta_low <= ON.eta <= ci.eta_high
    assert ci.xi_low <= ON.xi <= ci.xi_high
    assert e.eta_wc <= e.eta_hat and e.xi_wc >= e.xi_hat


def test_two_sided_quantile():
    assert est.z_quantile(1e-10) == pytest.approx(6.467, abs=1e-3)
    assert est.z_quantile(1e-10) == pytest.approx(inverse_normal_tail(0.5e-10), abs=1e-9)
    assert est.z_quantile(1e-10, two_sided=False) == pytest.approx(inverse_normal_tail(1e-10), abs=1e-9)


def test_interval_shrinks_as_inverse_sqrt_n():
    p = ON
    t, vm, vy, _ = est.expected_statistics(p)
    w = [est.estimator_spreads(t, vm, vy, 2 * n) for n in (1e6, 1e8)]
    assert w[0][0] / w[1][0] == pytest.approx(10.0, rel=1e-12)
    assert w[0][1] / w[1][1] == pytest.approx(10.0, rel=1e-12)
    # empirical, across two decades
    half = []
    for n in (10**5, 10**7):
        e = est.estimate_params(gaussian_block(p, n, 3), p.tau, p.V_el)
        half.append(est.confidence_interval(e).xi_half_width)
    assert half[0] / half[1] == pytest.approx(10.0, rel=0.1)


def test_worst_case_converges_to_point_estimate():
    lo = est.expected_worst_case(ON, 1e8)
    hi = est.expected_worst_case(ON, 1e12)
    assert abs(hi[1] - ON.xi) < abs(lo[1] - ON.xi) / 50
    assert abs(hi[0] - ON.eta) < abs(lo[0] - ON.eta) / 50


def test_single_frame_error_bars_overlap():
    # one frame of 1.25e6 symbols: both row means lie inside each interval
    for p in (ON, OFF):
        e = est.estimate_params(gaussian_block(p, 1_250_000, 4), p.tau, p.V_el)
        ci = est.confidence_interval(e)
        assert ci.xi_low < 0.714e-3 < ci.xi_high
        assert ci.xi_low < 0.760e-3 < ci.xi_high


def test_coverage_at_relaxed_epsilon():
    eps = 1e-2
    trials, n = 400, 10**5
    hits = 0
    for k in range(trials):
        e = est.estimate_params(gaussian_block(ON, n, 1000 + k), ON.tau, ON.V_el)
        ci = est.confidence_interval(e, eps)
        hits += (ci.xi_low <= ON.xi <= ci.xi_high) and (ci.eta_low <= ON.eta <= ci.eta_high)
    # 1 - 2 eps expected for the joint event; allow three binomial sigmas
    assert hits / trials >= 1 - 2 * eps - 3 * math.sqrt(2 * eps / trials)


def test_xi_recovery_is_linear():
    n = 10**6
    g = np.random.default_rng(5)
    noise = g.standard_normal(n) + 1j * g.standard_normal(n)
    xs = np.array([0.5e-3, 1.0e-3, 2.0e-3])
    ys = []
    for xi in xs:
        p = snu.ChannelParams(V_M=ON.V_M, eta=ON.eta, xi=xi, tau=ON.tau, V_el=ON.V_el)
        ys.append(est.estimate_params(gaussian_block(p, n, 6, noise=noise), p.tau, p.V_el).xi_hat)
    slope, icept = np.polyfit(xs, ys, 1)
    assert slope == pytest.approx(1.0, abs=0.02)
    resid = np.array(ys) - (slope * xs + icept)
    assert np.max(np.abs(resid)) < 1e-6


def test_backpropagation_convention():
    e = est.estimate_params(gaussian_block(ON, 10**5, 7), ON.tau, ON.V_el)
    receiver_referred = 2 * (e.sigma2_hat - 1 - ON.V_el)
    assert e.xi_hat == pytest.approx(snu.backpropagate_excess_noise(receiver_referred, ON.tau), rel=1e-12)
    assert e.eta_hat == pytest.approx(2 * e.t_hat**2 / ON.tau, rel=1e-12)


def test_negative_xi_not_clipped():
    p = snu.ChannelParams(V_M=ON.V_M, eta=ON.eta, xi=0.0, tau=ON.tau, V_el=ON.V_el)
    vals = [est.estimate_params(gaussian_block(p, 10**4, s), p.tau, p.V_el).xi_hat for s in range(20)]
    assert min(vals) < 0


def test_negative_covariance_raises():
    b = gaussian_block(ON, 10**4, 8)
    with pytest.raises(NegativeTransmittance):
        est.estimate_params(SymbolBlock(-b.tx_symbols, b.rx_symbols), ON.tau, ON.V_el)


def test_insufficient_data():
    e = est.estimate_params(gaussian_block(ON, 5000, 9), ON.tau, ON.V_el)
    with pytest.raises(InsufficientData):
        est.confidence_interval(e)


def test_single_frame_series_equals_estimate():
    e = est.estimate_params(gaussian_block(ON, 10**5, 10), ON.tau, ON.V_el)
    (row,) = est.cumulative_series([e])
    ci = est.confidence_interval(e)
    assert row.xi_hat == e.xi_hat
    assert (row.ci_low, row.ci_high) == (ci.xi_low, ci.xi_high)
    assert row.accumulated_symbols == e.n_symbols


def test_pooling_equals_concatenation():
    a = gaussian_block(ON, 3000, 11)
    b = gaussian_block(ON, 5000, 12)
    cat = SymbolBlock(np.concatenate([a.tx_symbols, b.tx_symbols]), np.concatenate([a.rx_symbols, b.rx_symbols]))
    ea, eb = (est.estimate_params(x, ON.tau, ON.V_el) for x in (a, b))
    pooled = est.pool(ea, eb)
    whole = est.estimate_params(cat, ON.tau, ON.V_el)
    assert pooled.xi_hat == pytest.approx(whole.xi_hat, rel=1e-12, abs=1e-15)
    assert pooled.n_symbols == 8000


arrays = st.integers(1, 40).flatmap(
    lambda n: st.tuples(*[st.lists(st.floats(-1e3, 1e3), min_size=n, max_size=n) for _ in range(2)])
)


@settings(max_examples=60, deadline=None)
@given(arrays, arrays, arrays)
def test_pool_associative_exactly(a, b, c):
    s = [est.SufficientStats.from_symbols(np.array(x) + 1.0, np.array(y)) for x, y in (a, b, c)]
    left = (s[0] + s[1]) + s[2]
    right = s[0] + (s[1] + s[2])
    assert left == right
    assert s[0] + s[1] == s[1] + s[0]


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1e-3, 5e-3), st.integers(10**4, 10**5))
def test_worst_case_brackets_point(seed, xi, n):
    p = snu.ChannelParams(V_M=ON.V_M, eta=ON.eta, xi=xi, tau=ON.tau, V_el=ON.V_el)
    e = est.estimate_params(gaussian_block(p, n, seed), p.tau, p.V_el)
    assert e.eta_wc <= e.eta_hat
    assert e.xi_wc >= e.xi_hat


def test_eighty_frames_off_pooled_within_interval():
    frames = [est.estimate_params(gaussian_block(OFF, 1_250_000, 100 + k, frame_id=k), OFF.tau, OFF.V_el)
              for k in range(80)]
    rows = est.cumulative_series(frames)
    last = rows[-1]
    assert last.accumulated_symbols == 80 * 1_250_000
    assert last.ci_low <= OFF.xi <= last.ci_high
    widths = [r.ci_high - r.ci_low for r in rows]
    assert all(b < a for a, b in zip(widths, widths[1:]))
