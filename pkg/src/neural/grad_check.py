from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .tensor import NamedTensors

DEFAULT_STEP = 1e-5


@dataclass
class GradCheckReport:
    errors: Dict[str, float]
    checked: Dict[str, int]

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tolerance: float) -> bool:
        return self.max_error < tolerance


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def grad_check(loss_fn: Callable[[NamedTensors], float], params: NamedTensors, analytic: NamedTensors,
               step: float = DEFAULT_STEP, max_entries: Optional[int] = None,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """Compares analytic gradients against central differences of loss_fn.

    loss_fn must be deterministic. A tensor missing from analytic is taken
    to have zero gradient. With max_entries, only that many randomly chosen
    entries of each tensor are checked.
    """
    params = {name: np.array(value, dtype=np.float64) for name, value in params.items()}
    rng = rng or np.random.default_rng(0)

    errors, checked = {}, {}
    for name, tensor in params.items():
        grad = np.asarray(analytic.get(name, np.zeros_like(tensor))).reshape(-1)
        indices = np.arange(tensor.size)
        if max_entries is not None and tensor.size > max_entries:
            indices = np.sort(rng.choice(tensor.size, size=max_entries, replace=False))

        worst = 0.0
        flat = tensor.reshape(-1)
        for index in indices:
            original = flat[index]
            flat[index] = original + step
            loss_plus = loss_fn(params)
            flat[index] = original - step
            loss_minus = loss_fn(params)
            flat[index] = original
            numeric = (loss_plus - loss_minus) / (2 * step)
            worst = max(worst, relative_error(float(grad[index]), numeric))
        errors[name] = worst
        checked[name] = len(indices)

    return GradCheckReport(errors, checked)
