"""shiftlab: domain adaptation under dataset shift, with synthetic ground truth."""

from .core import Dataset, DatasetError, LossKind, RandomStream, class_priors, standardize, validate
from .kernels import KernelSpec, gram, median_heuristic
from .scenarios import ShiftScenario, bayes_error, true_class_weights, true_importance_weights
from .weights import (
    WeightVector,
    class_weight_vector,
    gaussian_ratio_weights,
    kde_ratio_weights,
    kliep_weights,
    kmm_weights,
    lsif_weights,
    voronoi_weights,
)
from .classifiers import LinearModel, empirical_risk, loss_value, predict, train_weighted
from .discrepancy import DiscrepancyReport, hellinger_hist, mmd2, proxy_a_distance, renyi2_gaussian
from .robust import SaddleReport, minimax_weight_train, rba_train
from .subspace import Projection, pca, subspace_align, tca
from .bounds import BoundInputs, ben_david_bound, cortes_iw_bound, estimate_bound_terms, pac_bound

__version__ = "0.1.0"

__all__ = [
    "Dataset", "DatasetError", "LossKind", "RandomStream", "class_priors", "standardize", "validate",
    "KernelSpec", "gram", "median_heuristic",
    "ShiftScenario", "bayes_error", "true_class_weights", "true_importance_weights",
    "WeightVector", "class_weight_vector", "gaussian_ratio_weights", "kde_ratio_weights",
    "kliep_weights", "kmm_weights", "lsif_weights", "voronoi_weights",
    "LinearModel", "empirical_risk", "loss_value", "predict", "train_weighted",
    "DiscrepancyReport", "hellinger_hist", "mmd2", "proxy_a_distance", "renyi2_gaussian",
    "SaddleReport", "minimax_weight_train", "rba_train",
    "Projection", "pca", "subspace_align", "tca",
    "BoundInputs", "ben_david_bound", "cortes_iw_bound", "estimate_bound_terms", "pac_bound",
]
