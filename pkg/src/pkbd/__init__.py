"""Clustering on the unit hypersphere with mixtures of Poisson kernel-based
distributions (PKBD): densities, samplers, EM fitting, cluster-count
selection, evaluation metrics and synthetic data."""

__version__ = "0.1.0"

from .densities import MixtureModel, PkbdComponent, VmfComponent, mixture_log_density, pkbd_density
from .em import FitConfig, FitResult, fit, log_likelihood
from .metrics import adjusted_rand_index, contingency, macro_precision_recall
from .samplers import envelope_constants, sample_pkbd, sample_uniform, sample_vmf
from .selection import distance_profile, estimate_k, quadratic_distance
from .sphere import Dataset, normalize
from .synth import ComponentSpec, LdaSpec, centroids_pair, centroids_triple, lda_corpus, sample_mixture

__all__ = [
    "ComponentSpec",
    "Dataset",
    "FitConfig",
    "FitResult",
    "LdaSpec",
    "MixtureModel",
    "PkbdComponent",
    "VmfComponent",
    "adjusted_rand_index",
    "centroids_pair",
    "centroids_triple",
    "contingency",
    "distance_profile",
    "envelope_constants",
    "estimate_k",
    "fit",
    "lda_corpus",
    "log_likelihood",
    "macro_precision_recall",
    "mixture_log_density",
    "normalize",
    "pkbd_density",
    "quadratic_distance",
    "sample_mixture",
    "sample_pkbd",
    "sample_uniform",
    "sample_vmf",
]
