from dataclasses import dataclass
from typing import List, Sequence, Tuple

from vchgcl.core.errors import ShapeError
from vchgcl.tensor import ParameterStore, Tensor, activation, matmul


@dataclass
class MLPParams:
    """Affine layers applied in order, with a nonlinearity between consecutive layers."""
    layers: List[Tuple[Tensor, Tensor]]

    @property
    def in_dim(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1][0].shape[1]


def init_mlp(store: ParameterStore, prefix: str, sizes: Sequence[int]) -> MLPParams:
    """Register an MLP with layer widths ``sizes`` (input first, output last)."""
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        weight = store.create(f"{prefix}.w{i}", (fan_in, fan_out))
        bias = store.create(f"{prefix}.b{i}", (fan_out,), fan_in=fan_in)
        layers.append((weight, bias))
    return MLPParams(layers=layers)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """x W + b for a vector or a stack of row vectors."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError("linear input width does not match weight", x.shape, weight.shape)
    if x.ndim == 1:
        return (matmul(x.reshape(1, -1), weight) + bias).reshape(-1)
    return matmul(x, weight) + bias


def mlp_forward(x: Tensor, params: MLPParams, hidden_activation: str = "tanh") -> Tensor:
    last = len(params.layers) - 1
    for i, (weight, bias) in enumerate(params.layers):
        x = linear(x, weight, bias)
        if i < last:
            x = activation(x, hidden_activation)
    return x
