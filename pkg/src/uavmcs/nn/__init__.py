"""Small numpy neural toolkit with analytic gradients."""

from .layers import (Conv1d, ConvSpec, KANLayer, KanLayerSpec, Linear, Sequential, ShapeError,
                     bspline_basis)
from .params import ParameterSet, adam_step
from .policy import (Actor, Critic, gaussian_entropy, gaussian_log_prob, gaussian_log_prob_grads,
                     gaussian_sample)

__all__ = [
    "Actor", "Conv1d", "ConvSpec", "Critic", "KANLayer", "KanLayerSpec", "Linear",
    "ParameterSet", "Sequential", "ShapeError", "adam_step", "bspline_basis",
    "gaussian_entropy", "gaussian_log_prob", "gaussian_log_prob_grads", "gaussian_sample",
]
