"""Additive and multiplicative effects models for binary relational data.

The package covers the full pipeline: ingest a concert-archive CSV into a
directed composer network with nodal covariates, fit one of five nested
probit network models by Gibbs sampling, check fit with posterior-predictive
network statistics, and summarise coefficients, additive effects and the
latent multiplicative structure.
"""

from .analysis import (ClusterAssignment, CoefficientSummary, EffectSummary,
                       cluster_multiplicative, coefficient_summary, kmeans,
                       multiplicative_matrix, rank_additive_effects)
from .gibbs import (Chain, NumericalError, effective_sample_size,
                    empirical_bayes_hyper, run_chain, sample_sign_truncated)
from .gof import GofStats, GofTable, gof_stats, gof_stats_matrix, posterior_predictive_gof
from .ingest import (ConcertRecord, CovariateTable, IngestError, IngestReport,
                     aggregate_covariates, build_network, classify_piece,
                     handle_anonymous, ingest_records, read_concert_csv)
from .model import (ModelSpec, ParameterState, PriorHyper, linear_predictor,
                    sample_prior_state, simulate_network)
from .network import DirectedNetwork, read_edge_list, write_edge_list
from .synthetic import GenerativeParams, GenerativeTruth, exact_small_posterior, generate

__version__ = "0.1.0"
