"""
One pass of the estimation pipeline
===================================

Fit both bridges by kernel moment restriction, learn a linear regime for
each proxy by weighted hinge classification, build the kernel switching
rule, and score every regime on a large test sample.
"""

import numpy as np

from proxswitch import dgp, harness
from proxswitch.config import load_scenario

cfg = load_scenario(None, 1)
train = dgp.sample_training(cfg, 1000, seed=11)
pipe = harness.fit_pipeline(cfg, train, seed=11)

###############################################################################
# Selected penalties and the fitted bridge coefficients.

print("lambda for h:", pipe.meta["lambda_h"], " for q(+1), q(-1):",
      pipe.meta["lambda_q_pos"], pipe.meta["lambda_q_neg"])
print("h coefficients:", np.round(pipe.h.coef, 3))
print("q(+1) coefficients:", np.round(pipe.q.pos.coef, 3))

###############################################################################
# The two preliminary regimes. Coefficients are on (1, x1, x2, proxy).

for reg in (pipe.regime_z, pipe.regime_w):
    print(f"d_{reg.proxy}: rho = {reg.rho:g}, beta = {np.round(reg.beta, 3)}")
print("union class picks the", pipe.union, "regime")

###############################################################################
# Test-set values. The switching rule is evaluated once and reused.

test = dgp.sample_testing(cfg, 10_000, seed=12)
pi = pipe.pi_hat(test.x)
print(f"switch sends {pi.mean():.0%} of test points to the z-regime")
for name, v in harness.evaluate_regimes(pipe.regimes(), test, pi_values=pi).items():
    print(f"{name:>9s}  {v.value:.4f} +/- {v.se:.4f}")
