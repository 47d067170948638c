"""Central-difference verification of analytic gradients."""

from typing import Callable, Dict, Iterable, Optional

import numpy as np

from vchgcl.core.errors import ContractError
from vchgcl.tensor.autograd import ArrayLike, Tensor, as_tensor
from vchgcl.tensor.parameters import Parameter


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """Largest |a - n| / max(|a|, |n|, floor) over all coordinates."""
    if analytic.size == 0:
        return 0.0
    denominator = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denominator))


def gradient_check(f: Callable[[Tensor], Tensor], x: ArrayLike, h: float = 1e-5,
                   floor: float = 1e-8) -> float:
    """
    Compare the analytic gradient of a scalar function with central differences.

    Args:
        f: Scalar-valued tensor function
        x: Point at which to check
        h: Finite-difference step
        floor: Lower bound of the relative-error denominator

    Returns:
        The maximum relative error over all coordinates of ``x``
    """
    if h <= 0:
        raise ContractError(f"finite-difference step must be positive, got {h}")
    x0 = as_tensor(x).data.copy()
    leaf = Tensor(x0, requires_grad=True)
    f(leaf).backward()
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x0)

    numeric = np.zeros_like(x0)
    for idx in np.ndindex(x0.shape):
        plus, minus = x0.copy(), x0.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric[idx] = (f(Tensor(plus)).item() - f(Tensor(minus)).item()) / (2.0 * h)
    return max_relative_error(analytic, numeric, floor)


def check_parameters(loss_fn: Callable[[], Tensor], parameters: Iterable[Parameter],
                     h: float = 1e-5, floor: float = 1e-8, max_coords: Optional[int] = None,
                     seed: int = 0) -> Dict[str, float]:
    """
    Gradient-check a closed-over loss with respect to model parameters.

    The loss is rebuilt for every perturbation, so ``loss_fn`` must be deterministic.
    When ``max_coords`` is given, that many coordinates are sampled per parameter.

    Returns:
        Maximum relative error per parameter name
    """
    parameters = list(parameters)
    for param in parameters:
        param.tensor.grad = None
    loss_fn().backward()

    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}
    for param in parameters:
        data = param.tensor.data
        analytic_full = param.tensor.grad if param.tensor.grad is not None else np.zeros_like(data)
        coords = list(np.ndindex(data.shape))
        if max_coords is not None and len(coords) > max_coords:
            picks = rng.choice(len(coords), size=max_coords, replace=False)
            coords = [coords[i] for i in sorted(picks)]

        analytic, numeric = [], []
        for idx in coords:
            original = data[idx]
            data[idx] = original + h
            up = loss_fn().item()
            data[idx] = original - h
            down = loss_fn().item()
            data[idx] = original
            analytic.append(analytic_full[idx])
            numeric.append((up - down) / (2.0 * h))
        errors[param.name] = max_relative_error(np.array(analytic), np.array(numeric), floor)
    return errors
