"""
Choosing the stick-breaking prior scale
=======================================

The prior variance of the logit coefficients controls how many clusters
the mixture expects a priori.  We trace the prior number of occupied
components over a grid of variances for a birth-cohort style design, and
then match the atom and error-covariance hyperparameters to a plug-in
VAR(1) fit.
"""

import numpy as np

import lsbvar
from lsbvar.simulation import cohort_covariates

Z = cohort_covariates(766, rng=0)
print("design:", Z.shape, "columns: intercept, 3 continuous, 4 binary")

print(f"{'sigma_alpha^2':>14} {'median':>7} {'5%':>4} {'95%':>4} {'largest share':>14}")
for s2 in (0.1, 1.0, 5.0, 10.0, 100.0):
    n_cl, share = lsbvar.prior_cluster_monte_carlo(Z, H=50, sigma_alpha_sq=s2, draws=500, seed=1)
    lo, med, hi = np.percentile(n_cl, [5, 50, 95])
    print(f"{s2:>14g} {med:>7g} {lo:>4g} {hi:>4g} {np.median(share):>14.2f}")

# %%
# Elicitation: a pooled VAR(1) maximum-likelihood fit on complete cases
# sets the centre of the atom prior and the error-covariance prior.
sim = lsbvar.generate_scenario(lsbvar.ScenarioSpec(scenario=1), np.random.default_rng(3))
res = lsbvar.elicit_hyperparams(sim.data)
hp = res.apply(lsbvar.ModelHyperparams.default(3, 1, 2, H=50, sigma_alpha_sq=5.0))
print("plug-in Phi:\n", np.round(res.phi_000.reshape(3, 3), 3))
print("nu =", round(hp.nu, 2), " tau_0 =", round(hp.tau_0, 2))
