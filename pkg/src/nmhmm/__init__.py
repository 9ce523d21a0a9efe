"""Present/absent discretization of ChIP-seq count tracks.

A 3-state HMM with negative multinomial mixture emissions is fitted by
Baum-Welch against a negative control, decoded by Viterbi and gated by an
atomic quality-control score.
"""

__version__ = "0.1.0"

from .distributions import (
    NBMixtureParams,
    NegBinomialParams,
    NegMultinomialParams,
    nb_log_pmf,
    nm_conditional,
    nm_log_pmf,
    nm_marginal,
    sample_gamma_poisson,
)
from .emissions import NMEmissionParams
from .hmm import HmmModel, StatePath, forward_backward, viterbi
from .nbmix import fit_nb_mixture
from .pipeline import DiscretizationResult, FitConfig, fit
from .simulate import SimScenario, planted_scenario, score_calls, simulate_dataset
from .trackio import CountMatrix, read_count_table, write_count_table

__all__ = [
    "CountMatrix",
    "DiscretizationResult",
    "FitConfig",
    "HmmModel",
    "NBMixtureParams",
    "NMEmissionParams",
    "NegBinomialParams",
    "NegMultinomialParams",
    "SimScenario",
    "StatePath",
    "fit",
    "fit_nb_mixture",
    "forward_backward",
    "nb_log_pmf",
    "nm_conditional",
    "nm_log_pmf",
    "nm_marginal",
    "planted_scenario",
    "read_count_table",
    "sample_gamma_poisson",
    "score_calls",
    "simulate_dataset",
    "viterbi",
    "write_count_table",
]
