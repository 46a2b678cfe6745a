"""Independent reference computations used by the tests.

Nothing here imports the package under test.
"""

import math

import numpy as np


def inverse_normal_tail(p, lo=0.0, hi=40.0):
    """z with P(Z > z) = p, by bisection on the complementary error function."""
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if 0.5 * math.erfc(mid / math.sqrt(2)) > p:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def riccati_steady_state(q, r):
    """Posterior variance of the scalar random walk ``x_k = x_{k-1} + w``, ``y = x + v``."""
    prior = 0.5 * (q + math.sqrt(q * q + 4 * q * r))
    return prior * r / (prior + r)


def delta_dominant(n, eps_bar):
    return 7 * math.sqrt(math.log2(2 / eps_bar) / n)


def entropy_g(x):
    if x == 1:
        return 0.0
    return (x + 1) / 2 * math.log2((x + 1) / 2) - (x - 1) / 2 * math.log2((x - 1) / 2)


def direct_convolution(a, b):
    out = [0.0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return np.array(out)


def wiener_increment_variance(linewidth, fs, k):
    return 2 * math.pi * linewidth * k / fs


# Frozen oracle outputs for the key-rate chain, from a separate throwaway
# implementation (covariance matrices assembled by hand, heterodyne
# conditioning via the Schur complement).  Keys: (V_M, eta, xi, tau, V_el).
FROZEN_HOLEVO = {
    (4.71, 0.0096, 0.444e-3, 0.685, 18.99e-3): 0.020008895249393532,
    (9.41, 0.0184, 0.760e-3, 0.685, 19.25e-3): 0.07676186472382218,
    (9.41, 0.0180, 0.714e-3, 0.685, 19.62e-3): 0.07501788153619948,
}
FROZEN_MI_120KM = 0.021757728101650626
FROZEN_RATE_120KM = 3.8462330028360067e-4  # beta 0.9373, asymptotic
FROZEN_FINITE_ROW3 = 4.245637966721321e-05  # 100 km, N 1.6e9, beta 0.974
