"""Model zoo built on in-repo CART, boosting and penalized linear fits."""
from .baseline import BaselineModel, fit_baseline
from .ensemble import BoostParams, ForestParams, TreeEnsemble, fit_forest, fit_gbdt
from .linear import ConvergenceError, LinearModel, fit_linear
from .model import (MODEL_KINDS, ModelFormatError, SchemaError, TrainedModel, argmax_classes,
                    fit_model, load_model, search, score_model)
from .tree import Tree, TreeParams, best_split, fit_cart, fit_tree

__all__ = [
    "BaselineModel", "fit_baseline", "BoostParams", "ForestParams", "TreeEnsemble", "fit_forest",
    "fit_gbdt", "ConvergenceError", "LinearModel", "fit_linear", "MODEL_KINDS", "ModelFormatError",
    "SchemaError", "TrainedModel", "argmax_classes", "fit_model", "load_model", "search",
    "score_model", "Tree", "TreeParams", "best_split", "fit_cart", "fit_tree",
]
