"""
Learning the likelihood ratio from an unlabelled mixture
========================================================

Only ID data and an unlabelled ID/OOD mixture are available. A corrected
sigmoid fitted to "ID vs unlabelled" recovers the OOD share of the mixture
and a plugin estimate of ``g``. The standard sigmoid, which treats the
mixture as pure OOD, is shown for contrast.
Run with ``python3 notebooks/learning_g_from_a_mixture.py``.
"""

import numpy as np
from scipy.stats import spearmanr

from scodkit import (FitConfig, GaussianComponent, MixtureDataset, SyntheticWorld,
                     analytic_csm_params, estimate_g, fit_csm, likelihood_ratio, recover_prior,
                     sample_id, sample_mixture)
from scodkit.poscod import add_bias

# %% A shared-covariance world, where the corrected sigmoid is exact
L = np.linalg.cholesky(np.array([[1.0, 0.3], [0.3, 1.0]]))
world = SyntheticWorld([GaussianComponent([0.0, 0.0], L)], [1.0],
                       GaussianComponent([2.0, 1.0], L), shared_covariance=True)

# %% Fit on ID plus a mixture with 30% OOD
X_id, _ = sample_id(world, 50_000, seed=1)
X_u = sample_mixture(world, 50_000, 0.3, seed=2)
data = MixtureDataset.from_parts(X_id, X_u, seed=3)
params, info = fit_csm(data, return_info=True)
truth = analytic_csm_params(world, data.pi_u, 0.3)
print(f"converged in {info.n_epochs} iterations")
print("theta fitted :", np.round(params.theta, 3), " a =", round(params.a, 3))
print("theta exact  :", np.round(truth.theta, 3), " a =", round(truth.a, 3))

# %% The size of the correction gives back the OOD share
prior = recover_prior(params.a, data.pi_u)
print(f"recovered OOD share {prior.value:.3f} (true 0.3)")

# %% The plugin g ranks test points like the true ratio
X = sample_mixture(world, 10_000, 0.5, seed=4)
g_hat = estimate_g(params, data.pi_u, prior.value, add_bias(X))
print(f"Spearman(g_hat, g) = {spearmanr(g_hat, likelihood_ratio(world, X)).statistic:.4f}")

# %% Pinning a at zero gives the standard sigmoid; its prior estimate is stuck at 1
std = fit_csm(data, FitConfig(fix_a_at_zero=True))
print(f"standard sigmoid: a = {std.a}, prior = {recover_prior(std.a, data.pi_u).value}")
