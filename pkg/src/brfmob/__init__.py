"""Beta rank function (BRF) analysis of centrality distributions in daily origin-destination networks."""
from .distributions import BrfQuantile, DgbdParams, brf_cdf, brf_log_density, brf_log_mode, brf_moment, \
    brf_quantile, brf_sample, dgbd_eval
from .errors import BatchError, BrfmobError, DomainError, IngestionError, InsufficientDataError, UsageError
from .fitting import fit_dgbd, fit_lognormal, fit_power_law, rank_sample
from .model_selection import compare_models

__version__ = "0.1.0"
