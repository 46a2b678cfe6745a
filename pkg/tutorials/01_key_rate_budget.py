"""Key-rate budget for the four measured link configurations.

Runs in well under a second: everything here is closed-form security math,
no waveforms.  The sections follow the way one would size a link: the rate
on the measured parameters, how much loss it tolerates, and how large a
block must be before finite-size effects leave anything over.
"""

import numpy as np

from cvqkd import security, snu
from cvqkd.config import load_scenario

# %% Rate on the measured parameters
# The 120 km row at the efficiency and frame-error rate of the actual
# reconciliation run.  skr_bps is rate x symbol rate; skr_bps_net also
# drops the frames that failed to decode.
row = snu.table1_params("table1-120km-on")
rep = security.key_rate(row, beta=0.9373, fer=0.3)
print(f"I_AB   {rep.I_AB:.5f} bit/use")
print(f"chi_E  {rep.chi_E:.5f} bit/use")
print(f"R      {rep.rate_asymptotic:.4e} bit/use -> {rep.skr_bps / 1e3:.1f} kbit/s "
      f"({rep.skr_bps_net / 1e3:.1f} kbit/s after frame losses)")

# Two routes to chi_E: closed-form eigenvalues and the numerical symplectic
# spectrum of the full covariance matrix.  They should agree to ~1e-12.
print("chi_E routes differ by", abs(security.holevo_bound(row) - security.holevo_bound(row, "covariance")))

# %% Finite size
# Worst-case parameters at eps_PE = 1e-10 plus the privacy-amplification
# penalty Delta(n).  At 1e8 symbols nothing is left; at 1.6e9 it is positive.
for name in ("table1-100km-on", "table1-100km-on-1g6"):
    sc = load_scenario(name)
    r = security.key_rate(sc.params, 0.974, n=sc.N, budget=sc.budget, mode="finite")
    print(f"{name:22s} N={sc.N:.1e}  R_finite={r.rate_finite:.3e}  worst case xi="
          f"{r.worst_case_params['xi'] * 1e3:.3f} mSNU  Delta={r.delta_n:.2e}")

# %% Loss budget
# Hold the excess noise at its 120 km value and vary the channel loss.
loss = np.arange(10, 25.01, 0.5)
sweep = security.rate_vs_loss_sweep(row, loss, beta=0.96)
print(f"asymptotic rate reaches zero at {sweep.cutoff_db:.2f} dB")
for L, r in zip(loss[::4], sweep.rate[::4]):
    print(f"  {L:5.1f} dB  {r:.3e}")

# More excess noise eats into the budget
for xi in (0.2e-3, 0.444e-3, 1e-3):
    print(f"xi={xi * 1e3:.3f} mSNU -> cutoff {security.loss_cutoff(row.replace(xi=xi), 0.96):.2f} dB")

# %% Block size versus reconciliation efficiency
grid = security.blocksize_beta_grid(row, np.arange(1, 41) * 1e9, [1.0, 0.99, 0.98, 0.97, 0.96], fer=0.3)
for b, n in zip(grid.beta, grid.min_N):
    print(f"beta={b:.2f}: smallest feasible block {n:.2g}" if n else f"beta={b:.2f}: none up to 4e10")
