from .tensor import Parameter, Tensor, constant, uniform_init, zeros_init
from .ops import (
    LstmCellParams,
    add,
    add_bias,
    affine,
    bce_with_logits,
    concat_cols,
    conv1d_maxpool,
    dropout,
    embed,
    log_softmax,
    lstm_step,
    masked_mean_nll,
    matmul,
    matmul_bt,
    mul,
    pick,
    scale,
    sigmoid,
    slice_cols,
    softplus,
    sum_all,
    tanh,
    weighted_mean_nll,
)
from .optim import Adagrad, Adam, clip_grad_norm
from .gradcheck import grad_check

__all__ = [
    "Adagrad",
    "Adam",
    "LstmCellParams",
    "Parameter",
    "Tensor",
    "add",
    "add_bias",
    "affine",
    "bce_with_logits",
    "clip_grad_norm",
    "concat_cols",
    "constant",
    "conv1d_maxpool",
    "dropout",
    "embed",
    "grad_check",
    "log_softmax",
    "lstm_step",
    "masked_mean_nll",
    "matmul",
    "matmul_bt",
    "mul",
    "pick",
    "scale",
    "sigmoid",
    "slice_cols",
    "softplus",
    "sum_all",
    "tanh",
    "uniform_init",
    "weighted_mean_nll",
    "zeros_init",
]
