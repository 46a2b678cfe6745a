"""Choosing the modulation variance when phase noise scales with it.

Residual phase error after carrier recovery turns a fixed fraction of the
signal into excess noise, so xi grows linearly with V_M.  A larger V_M
raises the mutual information but also the noise; the optimum sits in
between.
"""

import numpy as np

from cvqkd import security, snu
from cvqkd.snu import TABLE1

# %% Fit xi = xi_base + eta * V_M * s over the measured rows
points = [(vm, eta, xi * 1e-3) for (_, vm, eta, xi, *_rest) in TABLE1.values()]
row = snu.table1_params("table1-120km-on")
model, s = security.fit_phase_noise_model(points, eta_target=row.eta)
print(f"residual phase variance s = {s:.3e} rad^2, xi_base = {model.xi_base * 1e3:.3f} mSNU")
print(f"at the 120 km transmittance: c = {model.c:.3e} SNU per SNU of V_M")

# %% Optimize at 120 km
for beta in (0.96, 0.9373):
    opt = security.optimize_modulation_variance(row, model, beta)
    print(f"beta={beta}: V_M* = {opt.V_M:.2f} SNU, R = {opt.rate:.3e} bit/use "
          f"(xi there {model.xi(opt.V_M) * 1e3:.3f} mSNU)")

# %% Without the phase-noise term the optimum moves up
flat = security.PhaseNoiseModel(model.xi_base, 0.0)
print(f"no phase-noise scaling: V_M* = {security.optimize_modulation_variance(row, flat, 0.96).V_M:.2f} SNU")

# %% Rate curve, for a plot
vm = np.geomspace(0.5, 30, 12)
for v in vm:
    r = security.key_rate(row.replace(V_M=v, xi=model.xi(v)), 0.96).rate
    print(f"  V_M={v:6.2f}  R={r:.3e}")
