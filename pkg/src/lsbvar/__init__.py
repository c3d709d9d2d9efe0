"""Bayesian mixtures of VAR(1) models with covariate-dependent logit
stick-breaking weights."""

from .data import (DataError, LongitudinalDataset, Partition, read_long_csv,
                   standardize_covariates, unstandardize_covariates,
                   validate_dataset, write_long_csv)
from .gibbs import SamplerConfig, SamplerError, draw_from_prior, gibbs_sweep, run_chain
from .missing import build_trajectory_law, impute_missing
from .model import ChainState, ModelHyperparams
from .polyagamma import sample_polya_gamma
from .postprocess import (adjusted_rand_index, binder_point_estimate,
                          cluster_count_posterior, predict_ins, predict_oos,
                          predictive_phi, waic)
from .priors import (compute_weights, elicit_hyperparams,
                     prior_cluster_monte_carlo)
from .simulation import (ScenarioSpec, generate_scenario, make_ins_split,
                         make_oos_split)
from .store import SampleStore

__version__ = "0.1.0"
