"""Forest-weighted and baseline Frechet regression estimators.

Forest-based estimators (need a fitted :class:`~frechetforest.forest.ForestModel`):

* ``rfwlcfr`` -- weighted Frechet mean under the forest kernel weights.
* ``rfwllfr`` -- weighted Frechet mean under signed local-linear weights
  built from the forest kernel.
* ``frf``     -- Frechet mean of the per-tree leaf Frechet means.

Baselines (need only the training data):

* ``gfr``        -- global Frechet regression (linear-model weights).
* ``nw``         -- Nadaraya-Watson with a smoothing kernel.
* ``lfr_kernel`` -- local-linear Frechet regression with a smoothing kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from . import spaces
from .forest import ForestConfig, ForestModel, fit_forest, kernel_weights
from .spaces import MetricSpace
from .tree import TreeConfig, tree_predict

FOREST_KINDS = ("rfwlcfr", "rfwllfr", "frf")
KERNEL_KINDS = ("nw", "lfr_kernel")
ALL_KINDS = FOREST_KINDS + ("gfr",) + KERNEL_KINDS

_RIDGE = 1e-8


# ---------------------------------------------------------------------------
# forest-based estimators


def predict_rfwlcfr(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Local-constant prediction: Frechet mean under the forest kernel."""
    alpha = kernel_weights(model, x)
    return spaces.weighted_frechet_mean(model.space, model.Y, alpha)


def local_linear_weights(X: np.ndarray, x: np.ndarray,
                         alpha: np.ndarray) -> np.ndarray:
    """Signed local-linear weights t_i(x) from nonnegative weights alpha.

    Solves the weighted local-linear normal equations; the first row gives
    weights with sum(t) = 1 and sum(t * (X_i - x)) = 0.  A trace-scaled
    ridge is added only if the design is numerically singular.
    """
    X = np.asarray(X, dtype=float)
    x = np.asarray(x, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if alpha.sum() <= 0:
        raise ValueError("total kernel weight must be positive")
    d = X - x
    design = np.concatenate([np.ones((len(X), 1)), d], axis=1)
    M = design.T @ (alpha[:, None] * design)
    e1 = np.zeros(M.shape[0])
    e1[0] = 1.0
    try:
        v = np.linalg.solve(M, e1)
        if not np.all(np.isfinite(v)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        lam = _RIDGE * max(np.trace(M) / M.shape[0], 1.0)
        try:
            v = np.linalg.solve(M + lam * np.eye(M.shape[0]), e1)
        except np.linalg.LinAlgError as exc:
            raise ValueError("local design is singular") from exc
    return alpha * (design @ v)


def predict_rfwllfr(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Local-linear prediction: signed-weight Frechet mean."""
    alpha = kernel_weights(model, x)
    t = local_linear_weights(model.X, x, alpha)
    return spaces.weighted_frechet_mean(model.space, model.Y, t)


def predict_frf(model: ForestModel, x: np.ndarray) -> np.ndarray:
    """Two-stage prediction: Frechet mean of the per-tree predictions."""
    preds = np.stack([tree_predict(t, x, model.Y, model.space)
                      for t in model.trees])
    return spaces.weighted_frechet_mean(model.space, preds,
                                        np.ones(len(preds)))


_FOREST_PREDICTORS = {"rfwlcfr": predict_rfwlcfr,
                      "rfwllfr": predict_rfwllfr,
                      "frf": predict_frf}


def predict_forest_batch(model: ForestModel, X_query: np.ndarray,
                         kind: str) -> np.ndarray:
    fn = _FOREST_PREDICTORS[kind]
    return np.stack([fn(model, x) for x in np.asarray(X_query, dtype=float)])


# ---------------------------------------------------------------------------
# global Frechet regression


@dataclass
class GFRModel:
    X: np.ndarray
    Y: np.ndarray
    space: MetricSpace
    x_mean: np.ndarray
    cov_inv: np.ndarray


def fit_gfr(X: np.ndarray, Y: np.ndarray, space: MetricSpace) -> GFRModel:
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError("global Frechet regression needs n > p")
    x_mean = X.mean(axis=0)
    d = X - x_mean
    cov = d.T @ d / n
    try:
        cov_inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError:
        lam = _RIDGE * max(np.trace(cov) / p, 1.0)
        cov_inv = np.linalg.inv(cov + lam * np.eye(p))
    return GFRModel(X, np.asarray(Y, dtype=float), space, x_mean, cov_inv)


def gfr_weights(model: GFRModel, x: np.ndarray) -> np.ndarray:
    d = model.X - model.x_mean
    s = 1.0 + d @ (model.cov_inv @ (np.asarray(x, dtype=float) - model.x_mean))
    return s / len(model.X)


def predict_gfr(model: GFRModel, x: np.ndarray) -> np.ndarray:
    return spaces.weighted_frechet_mean(model.space, model.Y,
                                        gfr_weights(model, x))


# ---------------------------------------------------------------------------
# kernel baselines


def _kernel_values(u: np.ndarray, kernel: str) -> np.ndarray:
    if kernel == "epanechnikov":
        return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    if kernel == "gaussian":
        return np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi)
    raise ValueError(f"unknown kernel {kernel!r}")


def product_kernel_weights(X: np.ndarray, x: np.ndarray, bandwidth: float,
                           kernel: str = "epanechnikov") -> np.ndarray:
    """Normalized product-kernel weights K_h(X_i - x)."""
    u = (np.asarray(X, dtype=float) - np.asarray(x, dtype=float)) / bandwidth
    w = np.prod(_kernel_values(u, kernel), axis=1)
    total = w.sum()
    if total <= 0:
        raise ValueError("no kernel mass at the query point; "
                         "increase the bandwidth")
    return w / total


def predict_nw(X: np.ndarray, Y: np.ndarray, space: MetricSpace,
               x: np.ndarray, bandwidth: float,
               kernel: str = "epanechnikov") -> np.ndarray:
    """Nadaraya-Watson Frechet prediction."""
    w = product_kernel_weights(X, x, bandwidth, kernel)
    return spaces.weighted_frechet_mean(space, np.asarray(Y, dtype=float), w)


def predict_lfr_kernel(X: np.ndarray, Y: np.ndarray, space: MetricSpace,
                       x: np.ndarray, bandwidth: float,
                       kernel: str = "epanechnikov") -> np.ndarray:
    """Local-linear Frechet prediction with smoothing-kernel weights."""
    w = product_kernel_weights(X, x, bandwidth, kernel)
    t = local_linear_weights(X, x, w)
    return spaces.weighted_frechet_mean(space, np.asarray(Y, dtype=float), t)


def scalar_local_linear_weights(X1: np.ndarray, x: float,
                                alpha: np.ndarray) -> np.ndarray:
    """Closed-form local-linear weights for a single predictor.

    Independent of :func:`local_linear_weights`; kept as the p = 1 reference
    path (moment form with denominator mu0*mu2 - mu1^2).
    """
    X1 = np.asarray(X1, dtype=float).ravel()
    alpha = np.asarray(alpha, dtype=float)
    n = len(X1)
    d = X1 - x
    mu0 = np.sum(alpha) / n
    mu1 = np.sum(alpha * d) / n
    mu2 = np.sum(alpha * d * d) / n
    denom = mu0 * mu2 - mu1 * mu1
    if denom <= 0:
        raise ValueError("degenerate local design")
    return alpha * (mu2 - mu1 * d) / denom / n


# ---------------------------------------------------------------------------
# cross-validation tuning


def _mse_against(space: MetricSpace, preds: np.ndarray,
                 targets: np.ndarray) -> float:
    return float(np.mean([spaces.distance(space, a, b) ** 2
                          for a, b in zip(preds, targets)]))


def default_mtry_grid(p: int) -> list:
    grid = sorted({1, math.ceil(p / 3), math.ceil(math.sqrt(p)), p})
    return [m for m in grid if 1 <= m <= p]


def _kfold_indices(n: int, folds: int, seed: int):
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed,
                                                       spawn_key=(0xCF,)))
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


def _fit_for_cell(X, Y, space, kind, cell, seed, num_trees, base_tree):
    if kind in FOREST_KINDS:
        tcfg = TreeConfig(max_depth=cell["max_depth"],
                          min_leaf=base_tree.min_leaf,
                          mtry=cell.get("mtry", base_tree.mtry),
                          split_method=base_tree.split_method,
                          honest=base_tree.honest)
        fcfg = ForestConfig(num_trees=num_trees, tree=tcfg, master_seed=seed)
        return fit_forest(X, Y, space, fcfg)
    if kind == "gfr":
        return fit_gfr(X, Y, space)
    return None  # kernel kinds carry no fitted state


def _predict_with(X, Y, space, kind, cell, fitted, X_query):
    if kind in FOREST_KINDS:
        return predict_forest_batch(fitted, X_query, kind)
    if kind == "gfr":
        return np.stack([predict_gfr(fitted, x) for x in X_query])
    fn = predict_nw if kind == "nw" else predict_lfr_kernel
    return np.stack([fn(X, Y, space, x, cell["bandwidth"],
                        cell.get("kernel", "epanechnikov"))
                     for x in X_query])


def tune_cv(X: np.ndarray, Y: np.ndarray, space: MetricSpace, kind: str,
            grid: list, folds: int = 5, seed: int = 0,
            num_trees: int = 50, base_tree: Optional[TreeConfig] = None):
    """K-fold cross-validation over a list of hyperparameter cells.

    Each cell is a dict: ``{"max_depth", "mtry"}`` for forest kinds,
    ``{"bandwidth", "kernel"}`` for kernel kinds, ``{}`` for gfr.  Returns
    ``(best_cell, table)`` where the table lists per-cell mean and sd of the
    held-out Frechet MSE.  A failing cell scores infinity.
    """
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if not grid:
        raise ValueError("empty tuning grid")
    if base_tree is None:
        base_tree = TreeConfig()
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    n = len(X)
    parts = _kfold_indices(n, folds, seed)
    table = []
    for cell in grid:
        errors = []
        for f, test_idx in enumerate(parts):
            train_idx = np.setdiff1d(np.arange(n), test_idx)
            try:
                fitted = _fit_for_cell(X[train_idx], Y[train_idx], space,
                                       kind, cell, seed + f, num_trees,
                                       base_tree)
                preds = _predict_with(X[train_idx], Y[train_idx], space,
                                      kind, cell, fitted, X[test_idx])
                errors.append(_mse_against(space, preds, Y[test_idx]))
            except (ValueError, np.linalg.LinAlgError):
                errors.append(math.inf)
        errors = np.asarray(errors)
        table.append({"cell": cell,
                      "mean_error": float(np.mean(errors)),
                      "sd_error": float(np.std(errors, ddof=1))
                      if len(errors) > 1 and np.all(np.isfinite(errors))
                      else math.nan})
    means = [row["mean_error"] for row in table]
    best = int(np.argmin(means))  # argmin keeps the first (lowest) index on ties
    return grid[best], table
