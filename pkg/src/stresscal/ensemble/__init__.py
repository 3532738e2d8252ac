"""From-scratch CART trees, Random Forests and Extremely Randomized Trees."""

from .forest import (
    DecisionTree,
    EnsembleHyperparams,
    TrainedEnsemble,
    feature_importances,
    fit_forest,
    fit_forest_arrays,
    fit_tree,
    gini_impurity,
    predict,
    predict_codes,
    tree_key,
)

__all__ = [
    "DecisionTree",
    "EnsembleHyperparams",
    "TrainedEnsemble",
    "feature_importances",
    "fit_forest",
    "fit_forest_arrays",
    "fit_tree",
    "gini_impurity",
    "predict",
    "predict_codes",
    "tree_key",
]
