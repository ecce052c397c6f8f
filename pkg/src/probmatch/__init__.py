"""Matching-based causal inference when key variables are measured with noise.

The package matches observational units whose treatment and/or confounders
are known only as probability distributions, searches covariate-balancing
weights with a genetic algorithm, and ships the balance diagnostics,
effect tests, and synthetic benchmark suites used to evaluate it.
"""

from .analysis import (AteResult, BalanceReport, ate, balance_report,
                       causal_test, ks_two_sample, smd, wilcoxon_signed_rank)
from .core import (MatchConstraints, MatchedPairSet, SchemaError, StudyDataset,
                   load_dataset, load_pairs, save_dataset, save_pairs)
from .distance import (CovarianceTransform, PairDistanceCache, WeightMatrix,
                       covariance_sqrt, mahalanobis_weighted, prob_mahalanobis,
                       rv_distance, unit_distance)
from .experiments import ExperimentConfig, run_experiment
from .genetic import (EvolveResult, GaConfig, LossSpec, evolve_weights,
                      loss_pvalue, loss_quantile_deterministic,
                      loss_quantile_probabilistic)
from .matcher import (MatchRegime, MatchingError, NoAdmissiblePairsError,
                      admissible, infer_regime, match_binary, match_continuous)
from .stochastic import (MonteCarloConfig, StochasticScalar,
                         diff_abs_distribution, prob_less_than, quantiles,
                         ratio_distribution)

__version__ = "0.1.0"
