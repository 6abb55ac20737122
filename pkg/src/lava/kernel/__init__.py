"""Dense numpy kernel: layers, parameter storage, Adam and gradient checks."""

from .gradcheck import GradCheckReport, grad_check, numeric_grad, relative_error
from .layers import (
    BN_EPS,
    BN_MOMENTUM,
    DegenerateBatchError,
    ShapeError,
    activation,
    activation_backward,
    adaptive_avg_pool1,
    adaptive_avg_pool1_backward,
    batchnorm1d_backward,
    batchnorm1d_forward,
    conv1d_backward,
    conv1d_forward,
    conv_out_length,
    conv_transpose1d_backward,
    conv_transpose1d_forward,
    conv_transpose_out_length,
    cross_entropy,
    linear_backward,
    linear_forward,
    log_softmax,
    sigmoid,
    softmax,
)
from .network import (
    LAYER_KINDS,
    LayerSpec,
    ParamStore,
    Sequential,
    act,
    batchnorm,
    conv,
    conv_t,
    init_params,
    linear,
)
from .optim import AdamState, adam_step
