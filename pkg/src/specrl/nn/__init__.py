"""Minimal differentiable substrate: tensors, MLPs, Adam, gradient checks, checkpoints."""
from .autodiff import Tensor, TapeError, backward, concat, maximum, minimum, no_grad, where
from .checkpoint import dumps_arrays, load_params, loads_arrays, save_params
from .gradcheck import grad_check
from .mlp import Mlp, MlpSpec, activate, init_mlp, mlp_forward
from .optim import NonFiniteGradient, OptimizerState, adam_step
from .params import ParamSet, frozen

__all__ = [
    "Tensor", "TapeError", "backward", "concat", "maximum", "minimum", "no_grad", "where",
    "dumps_arrays", "loads_arrays", "save_params", "load_params", "grad_check",
    "Mlp", "MlpSpec", "activate", "init_mlp", "mlp_forward",
    "NonFiniteGradient", "OptimizerState", "adam_step", "ParamSet", "frozen",
]
