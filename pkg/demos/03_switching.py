"""
How good is the estimated switch?
=================================

The best switching rule between two fixed regimes sends x to whichever
branch has the larger conditional value. The simulator can compute that
rule by Monte Carlo, which lets us split the loss of the estimated switch
into an estimation part K and a gain G over the better single regime.
"""

import numpy as np

from proxswitch import dgp, harness
from proxswitch.config import load_scenario

cfg = load_scenario(None, 1)
pipe = harness.fit_pipeline(cfg, dgp.sample_training(cfg, 2000, seed=21), seed=21)

###############################################################################
# Estimated and oracle switch on a covariate grid ("z" marks the h-branch).

g = np.linspace(0.0, 0.5, 6)
grid = np.array([[a, b] for b in g for a in g])
mc = dgp.mc_branch_means(cfg, grid, pipe.regime_z, pipe.regime_w, 20_000, seed=22)
pi_bar = (mc.h_mean >= mc.q_mean).astype(int)
pi_hat = pipe.pi_hat(grid)
for row in range(6):
    sl = slice(6 * row, 6 * row + 6)
    print(" ".join("zw"[1 - p] for p in pi_hat[sl]), "   ", " ".join("zw"[1 - p] for p in pi_bar[sl]))
print(f"agreement on the grid: {np.mean(pi_hat == pi_bar):.0%}")

###############################################################################
# Decomposition V(pi_hat) = max(V(d_z), V(d_w)) - K + G on one test sample.

dec = harness.excess_value_decomposition(pipe, n_test=10_000, n_mc=5_000, seed=23)
print(f"V(d_z) {dec.v_z:.4f}  V(d_w) {dec.v_w:.4f}  V(pi_hat) {dec.v_pi_hat:.4f}  V(pi_bar) {dec.v_pi_bar:.4f}")
print(f"K = {dec.k_hat:.4f} (se {dec.k_se:.4f})   G = {dec.g_bar:.4f} (se {dec.g_se:.4f})")
