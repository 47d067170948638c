from vchgcl.tensor.autograd import (
    Tensor,
    activation,
    as_tensor,
    broadcast_to,
    concat,
    cosine_similarity,
    graph_leaves,
    layer_norm,
    matmul,
    parameter,
    softmax,
    tape_size,
)
from vchgcl.tensor.gradcheck import check_parameters, gradient_check, max_relative_error
from vchgcl.tensor.parameters import Parameter, ParameterStore, load_snapshot, save_snapshot
