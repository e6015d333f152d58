from .gradcheck import finite_diff_check, relative_error
from .layers import BatchNormState, batchnorm, conv2d, conv2d_nhwc, dense, flatten, matmul, to_nchw, to_nhwc
from .optim import AdamState, adam_step
from .tensor import (
    DEFAULT_DTYPE,
    ParameterSet,
    ShapeError,
    Tensor,
    activation,
    add,
    as_tensor,
    backward,
    grad_graph,
    mul,
    relu,
    reshape,
    sigmoid,
    square,
    stop_gradient,
    sub,
    sum_all,
)
