"""Second-order gradient-boosted decision trees with a multiclass softmax objective."""

from .ensemble import Ensemble, fit, load_ensemble, predict, save_ensemble
from .objective import log_loss, softmax_grad_hess
from .tree import BoostConfig, Tree, build_tree, leaf_weight, split_gain, structure_score

__all__ = [
    "BoostConfig", "Ensemble", "Tree", "build_tree", "fit", "leaf_weight", "load_ensemble",
    "log_loss", "predict", "save_ensemble", "softmax_grad_hess", "split_gain", "structure_score",
]
