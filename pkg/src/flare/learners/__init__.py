from .dataset import Dataset
from .tree import DecisionTree, fit_tree
from .forest import ForestParams, RandomForest, fit_forest
from .linear import LogisticModel, fit_logreg, logistic_objective_grad
from .boosting import GbtModel, GbtParams, fit_gbt
from .model_selection import GridSearchResult, expand_grid, grid_search, stratified_kfold
from .io import load_model, save_model

__all__ = [
    "Dataset",
    "DecisionTree",
    "fit_tree",
    "ForestParams",
    "RandomForest",
    "fit_forest",
    "LogisticModel",
    "fit_logreg",
    "logistic_objective_grad",
    "GbtModel",
    "GbtParams",
    "fit_gbt",
    "GridSearchResult",
    "expand_grid",
    "grid_search",
    "stratified_kfold",
    "load_model",
    "save_model",
]
