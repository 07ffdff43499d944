from .layers import Attention, Block, LayerNorm, Linear, Mlp, Module, trunc_normal
from .tensor import (
    Parameter,
    Tensor,
    add,
    concat,
    div,
    gelu,
    layer_norm,
    linear,
    matmul,
    mean,
    mse_loss,
    mul,
    no_grad,
    reshape,
    scaled_dot_attention,
    set_debug,
    slice_,
    softmax,
    sub,
    sum_,
    take,
    transpose,
)
