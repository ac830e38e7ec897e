"""Random-forest-weighted Fréchet regression for metric-space responses.

Supports 1-D distributions on quantile grids (Wasserstein), SPD matrices
(Log-Cholesky and affine-invariant), and spheres; forest kernel weights
with local-constant and local-linear estimators; global/kernel baselines;
and a Monte-Carlo benchmark harness.
"""

from .forest import (ForestConfig, ForestModel, fit_forest, kernel_weights,
                     model_from_dict, model_to_dict)
from .regressors import (fit_gfr, gfr_weights, local_linear_weights,
                         predict_frf, predict_gfr, predict_lfr_kernel,
                         predict_nw, predict_rfwlcfr, predict_rfwllfr,
                         tune_cv)
from .simulate import (Dataset, MonteCarloConfig, SimSetting, evaluate_mse,
                       generate, monte_carlo)
from .spaces import (MetricSpace, distance, embed, sphere_exp, sphere_log,
                     spd_space, sphere_space, unembed, wasserstein_space,
                     weighted_frechet_mean)
from .tree import FrechetTree, TreeConfig, grow_tree, tree_predict

__all__ = [
    "ForestConfig", "ForestModel", "fit_forest", "kernel_weights",
    "model_from_dict", "model_to_dict",
    "fit_gfr", "gfr_weights", "local_linear_weights", "predict_frf",
    "predict_gfr", "predict_lfr_kernel", "predict_nw", "predict_rfwlcfr",
    "predict_rfwllfr", "tune_cv",
    "Dataset", "MonteCarloConfig", "SimSetting", "evaluate_mse", "generate",
    "monte_carlo",
    "MetricSpace", "distance", "embed", "sphere_exp", "sphere_log",
    "spd_space", "sphere_space", "unembed", "wasserstein_space",
    "weighted_frechet_mean",
    "FrechetTree", "TreeConfig", "grow_tree", "tree_predict",
]

__version__ = "0.1.0"
