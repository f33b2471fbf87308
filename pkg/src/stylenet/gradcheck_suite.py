from dataclasses import dataclass
from typing import Callable, Dict, List, Tuple

import numpy as np

from ..neural.grad_check import grad_check
from ..neural.layers import (LinearParams, dropout_backward, dropout_forward, linear_backward, linear_forward,
                             mse_loss)
from ..neural.lstm import BiLstmParams, LstmParams, bilstm_backward, bilstm_forward, lstm_backward, lstm_forward
from ..neural.tensor import NamedTensors
from .model import INPUT_WIDTH, StyleNetParams, backward, forward, init_params

# desk-scale dimensions for the composed model
INTERP_HIDDEN = 4
GENRE_HIDDEN = 6
STEPS = 12
GENRES = ("classical", "jazz")
ENTRIES_PER_TENSOR = 8


@dataclass
class GradCheckRow:
    layer: str
    max_error: float
    passed: bool


Case = Tuple[Callable[[NamedTensors], float], NamedTensors, NamedTensors]


def _weighted_sum(outputs: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(outputs * weights))


def linear_case(rng: np.random.Generator) -> Case:
    params = LinearParams.init(5, 3, rng).named("linear")
    params["input"] = rng.normal(size=(4, 5))
    weights = rng.normal(size=(4, 3))

    def loss(p):
        return _weighted_sum(linear_forward(LinearParams.from_named(p, "linear"), p["input"]), weights)

    grads, grad_in = linear_backward(LinearParams.from_named(params, "linear"), params["input"], weights)
    return loss, params, {**grads.named("linear"), "input": grad_in}


def lstm_case(rng: np.random.Generator) -> Case:
    params = LstmParams.init(3, 4, rng).named("lstm")
    params["input"] = rng.normal(size=(5, 3))
    weights = rng.normal(size=(5, 4))

    def loss(p):
        hidden, _ = lstm_forward(LstmParams.from_named(p, "lstm"), p["input"])
        return _weighted_sum(hidden, weights)

    _, cache = lstm_forward(LstmParams.from_named(params, "lstm"), params["input"])
    grads, grad_in = lstm_backward(cache, weights)
    return loss, params, {**grads.named("lstm"), "input": grad_in}


def bilstm_case(rng: np.random.Generator) -> Case:
    params = BiLstmParams.init(3, 4, rng).named("bilstm")
    params["input"] = rng.normal(size=(5, 3))
    weights = rng.normal(size=(5, 8))

    def loss(p):
        out, _ = bilstm_forward(BiLstmParams.from_named(p, "bilstm"), p["input"])
        return _weighted_sum(out, weights)

    _, cache = bilstm_forward(BiLstmParams.from_named(params, "bilstm"), params["input"])
    grads, grad_in = bilstm_backward(cache, weights)
    return loss, params, {**grads.named("bilstm"), "input": grad_in}


def dropout_case(rng: np.random.Generator) -> Case:
    params = {"input": rng.normal(size=(6, 5))}
    weights = rng.normal(size=(6, 5))
    mask_seed = int(rng.integers(2 ** 31))

    def run(p):
        return dropout_forward(p["input"], 0.8, np.random.default_rng(mask_seed), training=True)

    def loss(p):
        return _weighted_sum(run(p)[0], weights)

    _, mask = run(params)
    return loss, params, {"input": dropout_backward(weights, mask)}


def mse_case(rng: np.random.Generator) -> Case:
    params = {"pred": rng.uniform(size=(3, 88))}
    target = rng.uniform(size=(3, 88))
    _, grad = mse_loss(params["pred"], target)
    return (lambda p: mse_loss(p["pred"], target)[0]), params, {"pred": grad}


def stylenet_case(rng: np.random.Generator, genre: str) -> Case:
    """Full model, dropout off; checks the interpretation layer and the active branch."""
    model = init_params(GENRES, INTERP_HIDDEN, GENRE_HIDDEN, rng)
    roll = rng.uniform(size=(STEPS, INPUT_WIDTH))
    weights = rng.normal(size=(STEPS, 88))
    named = model.named()
    active = {k: v for k, v in named.items()
              if k.startswith("interpretation.") or k.startswith(f"branches.{genre}.")}

    def loss(p):
        pred, _ = forward(StyleNetParams.from_named({**named, **p}, GENRES), genre, roll)
        return _weighted_sum(pred, weights)

    _, cache = forward(model, genre, roll)
    return loss, active, backward(model, cache, weights)


def run_gradcheck_suite(seed: int = 0, trials: int = 20, tolerance: float = 1e-4,
                        inject_fault: bool = False) -> List[GradCheckRow]:
    """Finite-difference check of every layer and the composed model over several seeds.

    inject_fault flips the sign of one analytic gradient per case, which the
    check must catch.
    """
    worst: Dict[str, float] = {}
    for trial in range(trials):
        rng = np.random.default_rng(seed + trial)
        cases = {
            "linear": linear_case(rng),
            "lstm": lstm_case(rng),
            "bilstm": bilstm_case(rng),
            "dropout": dropout_case(rng),
            "mse": mse_case(rng),
            "stylenet": stylenet_case(rng, GENRES[trial % len(GENRES)]),
        }
        for layer, (loss, params, analytic) in cases.items():
            if inject_fault:
                first = sorted(analytic)[0]
                analytic = {**analytic, first: -analytic[first]}
            limit = ENTRIES_PER_TENSOR if layer == "stylenet" else None
            report = grad_check(loss, params, analytic, max_entries=limit, rng=rng)
            worst[layer] = max(worst.get(layer, 0.0), report.max_error)

    return [GradCheckRow(layer, error, error < tolerance) for layer, error in worst.items()]
