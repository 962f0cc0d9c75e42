"""Selective classification in the presence of out-of-distribution inputs.

Optimal and heuristic selectors over a conditional-risk score ``r`` and an
OOD/ID likelihood ratio ``g``, the plugin learner that estimates ``g`` from
ID data plus an unlabelled mixture, evaluation metrics and tuning protocols.
"""
from .exceptions import (ConfigError, DataError, DegenerateScoreError, FitDivergedError,
                         InvalidArgumentError, ScodError, UnsupportedOracleError)
from .metrics import (ScoredSample, ScoredSamples, aurc, auroc, ausrt, empirical_rates,
                      fold_standard_error, scod_curve, scod_risk_at_tpr, uniform_grid)
from .poscod import (CsmParams, FitConfig, MixtureDataset, PoscodModel, bce_and_gradient,
                     csm_posterior, estimate_g, fit_csm, recover_prior, run_poscod)
from .selectors import (Selector, accept, calibrate_threshold, linear_beta, linear_score,
                        plugin_conditional_risk, sirc_score, sirc_selector_score)
from .synthetic import (GaussianComponent, SyntheticWorld, analytic_csm_params, bayes_classify,
                        likelihood_ratio, log_likelihood_ratio, mixture_posterior_id, posterior,
                        random_world, sample_id, sample_mixture, sample_ood)
from .tables import SampleTable
from .tuning import (SircParams, TuningResult, linear_angle_grid, linear_angle_score, sirc_grid,
                     sirc_plugin_params, tune_on_eval)

__version__ = "0.1.0"
