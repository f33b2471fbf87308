from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .tensor import NamedTensors, Tensor, as_tensor, debug_check, expect_shape


@dataclass
class LinearParams:
    weight: Tensor  # (in, out)
    bias: Tensor    # (out,)

    def __post_init__(self):
        expect_shape("bias", self.bias, (self.weight.shape[1],))

    def named(self, prefix: str) -> NamedTensors:
        return {f"{prefix}.weight": self.weight, f"{prefix}.bias": self.bias}

    @classmethod
    def from_named(cls, tensors: NamedTensors, prefix: str) -> "LinearParams":
        return cls(tensors[f"{prefix}.weight"], tensors[f"{prefix}.bias"])

    @classmethod
    def init(cls, input_size: int, output_size: int, rng: np.random.Generator) -> "LinearParams":
        weight = rng.uniform(-1, 1, (input_size, output_size)) / np.sqrt(input_size)
        return cls(weight, np.zeros(output_size))

    @classmethod
    def zeros(cls, input_size: int, output_size: int) -> "LinearParams":
        return cls(np.zeros((input_size, output_size)), np.zeros(output_size))


def linear_forward(params: LinearParams, inputs: Tensor) -> Tensor:
    """Identity activation: f(z) = z = x w + b."""
    inputs = as_tensor(inputs)
    expect_shape("inputs", inputs, (None, params.weight.shape[0]))
    return debug_check("linear output", inputs @ params.weight + params.bias)


def linear_backward(params: LinearParams, inputs: Tensor, grad_output: Tensor) -> Tuple[LinearParams, Tensor]:
    grad_output = as_tensor(grad_output)
    expect_shape("grad_output", grad_output, (inputs.shape[0], params.weight.shape[1]))
    grads = LinearParams(inputs.T @ grad_output, grad_output.sum(axis=0))
    return grads, grad_output @ params.weight.T


def dropout_forward(inputs: Tensor, keep_prob: float, rng: Optional[np.random.Generator],
                    training: bool) -> Tuple[Tensor, Optional[Tensor]]:
    """Inverted dropout: kept units are scaled by 1/keep_prob.

    Returns the output and the scaled mask (None when nothing was dropped).
    """
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep probability {keep_prob} outside (0, 1]")
    inputs = as_tensor(inputs)
    if not training or keep_prob == 1.0:
        return inputs, None
    mask = (rng.random(inputs.shape) < keep_prob) / keep_prob
    return inputs * mask, mask


def dropout_backward(grad_output: Tensor, mask: Optional[Tensor]) -> Tensor:
    return grad_output if mask is None else grad_output * mask


def mse_loss(pred: Tensor, target: Tensor) -> Tuple[float, Tensor]:
    """Mean of squared differences over every cell, with its gradient."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"prediction {pred.shape} and target {target.shape} differ in shape")
    if pred.size == 0:
        raise ValueError("mse_loss of an empty matrix")
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def masked_mse_loss(pred: Tensor, target: Tensor, mask: Tensor) -> Tuple[float, Tensor]:
    """MSE restricted to cells where mask is set; an empty mask gives zero loss."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError("prediction, target and mask must share a shape")
    if pred.size == 0:
        raise ValueError("masked_mse_loss of an empty matrix")
    weights = (mask != 0).astype(np.float64)
    count = weights.sum()
    if count == 0:
        return 0.0, np.zeros_like(pred)
    diff = (pred - target) * weights
    return float(np.sum(diff ** 2) / count), 2.0 * diff / count
