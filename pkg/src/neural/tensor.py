import os
from typing import Dict

import numpy as np
from dotenv import load_dotenv

load_dotenv()

Tensor = np.ndarray
NamedTensors = Dict[str, np.ndarray]


class NonFiniteError(FloatingPointError):
    pass


def debug_enabled() -> bool:
    return os.getenv("STYLENET_DEBUG", "0").lower() in ("1", "true", "yes")


def as_tensor(values) -> Tensor:
    return np.ascontiguousarray(values, dtype=np.float64)


def check_finite(name: str, values: Tensor) -> Tensor:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"non-finite values in {name}")
    return values


def debug_check(name: str, values: Tensor) -> Tensor:
    """check_finite, but only when STYLENET_DEBUG is set."""
    if debug_enabled():
        check_finite(name, values)
    return values


def sigmoid(x: Tensor) -> Tensor:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def expect_shape(name: str, values: Tensor, shape):
    """Raises ValueError unless values matches shape (None is a wildcard)."""
    if values.ndim != len(shape) or any(want is not None and got != want
                                        for got, want in zip(values.shape, shape)):
        raise ValueError(f"{name} has shape {values.shape}, expected {tuple(shape)}")
