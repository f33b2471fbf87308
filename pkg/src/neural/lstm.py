"""
LSTM and bidirectional LSTM layers with analytic backward passes.

Standard cell with forget gate and no peepholes. Gate blocks are stacked
along the last axis in the order input, forget, cell candidate, output:

    z_t = x_t W + h_{t-1} U + b
    i, f, o = sigmoid(z_i), sigmoid(z_f), sigmoid(z_o);  g = tanh(z_g)
    c_t = f * c_{t-1} + i * g
    h_t = o * tanh(c_t)

Sequences are unbatched, shaped (T, features).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .tensor import NamedTensors, Tensor, as_tensor, debug_check, expect_shape, sigmoid

GATES = ("input", "forget", "cell", "output")


@dataclass
class LstmParams:
    W: Tensor  # (in, 4*hidden)
    U: Tensor  # (hidden, 4*hidden)
    b: Tensor  # (4*hidden,)

    def __post_init__(self):
        hidden = self.U.shape[0]
        expect_shape("W", self.W, (None, 4 * hidden))
        expect_shape("U", self.U, (hidden, 4 * hidden))
        expect_shape("b", self.b, (4 * hidden,))

    @property
    def input_size(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.U.shape[0]

    def gate(self, name: str) -> Tuple[Tensor, Tensor, Tensor]:
        """(W_g, U_g, b_g) views for one gate."""
        k = GATES.index(name)
        h = self.hidden_size
        block = slice(k * h, (k + 1) * h)
        return self.W[:, block], self.U[:, block], self.b[block]

    def named(self, prefix: str) -> NamedTensors:
        return {f"{prefix}.W": self.W, f"{prefix}.U": self.U, f"{prefix}.b": self.b}

    @classmethod
    def from_named(cls, tensors: NamedTensors, prefix: str) -> "LstmParams":
        return cls(tensors[f"{prefix}.W"], tensors[f"{prefix}.U"], tensors[f"{prefix}.b"])

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "LstmParams":
        W = rng.uniform(-1, 1, (input_size, 4 * hidden_size)) / np.sqrt(input_size)
        U = rng.uniform(-1, 1, (hidden_size, 4 * hidden_size)) / np.sqrt(hidden_size)
        b = np.zeros(4 * hidden_size)
        b[hidden_size:2 * hidden_size] = 1.0
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "LstmParams":
        return cls(np.zeros((input_size, 4 * hidden_size)),
                   np.zeros((hidden_size, 4 * hidden_size)),
                   np.zeros(4 * hidden_size))


@dataclass
class LstmCache:
    params: LstmParams
    inputs: Tensor
    gates: Tensor        # (T, 4h) post-activation
    cells: Tensor        # (T, h)
    cells_tanh: Tensor   # (T, h)
    hidden: Tensor       # (T, h)
    h0: Tensor
    c0: Tensor


def lstm_forward(params: LstmParams, inputs: Tensor,
                 h0: Optional[Tensor] = None, c0: Optional[Tensor] = None) -> Tuple[Tensor, LstmCache]:
    inputs = as_tensor(inputs)
    expect_shape("inputs", inputs, (None, params.input_size))
    steps, h = inputs.shape[0], params.hidden_size
    h0 = np.zeros(h) if h0 is None else as_tensor(h0)
    c0 = np.zeros(h) if c0 is None else as_tensor(c0)
    expect_shape("h0", h0, (h,))
    expect_shape("c0", c0, (h,))

    projected = inputs @ params.W + params.b
    gates = np.empty((steps, 4 * h))
    cells = np.empty((steps, h))
    cells_tanh = np.empty((steps, h))
    hidden = np.empty((steps, h))

    h_prev, c_prev = h0, c0
    for t in range(steps):
        z = projected[t] + h_prev @ params.U
        gates[t, :2 * h] = sigmoid(z[:2 * h])
        gates[t, 2 * h:3 * h] = np.tanh(z[2 * h:3 * h])
        gates[t, 3 * h:] = sigmoid(z[3 * h:])
        i, f, g, o = gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:]
        cells[t] = f * c_prev + i * g
        cells_tanh[t] = np.tanh(cells[t])
        hidden[t] = o * cells_tanh[t]
        h_prev, c_prev = hidden[t], cells[t]

    debug_check("lstm hidden states", hidden)
    return hidden, LstmCache(params, inputs, gates, cells, cells_tanh, hidden, h0, c0)


def lstm_backward(cache: LstmCache, grad_hidden: Tensor) -> Tuple[LstmParams, Tensor]:
    """Backpropagation through time over the whole cached sequence.

    Returns parameter gradients (as LstmParams) and the gradient w.r.t. inputs.
    """
    params = cache.params
    steps, h = cache.hidden.shape
    grad_hidden = as_tensor(grad_hidden)
    expect_shape("grad_hidden", grad_hidden, (steps, h))

    grad_z = np.empty((steps, 4 * h))
    grad_U = np.zeros_like(params.U)
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)

    for t in reversed(range(steps)):
        i, f, g, o = (cache.gates[t, :h], cache.gates[t, h:2 * h],
                      cache.gates[t, 2 * h:3 * h], cache.gates[t, 3 * h:])
        c_prev = cache.cells[t - 1] if t > 0 else cache.c0
        h_prev = cache.hidden[t - 1] if t > 0 else cache.h0
        tanh_c = cache.cells_tanh[t]

        dh = grad_hidden[t] + dh_next
        dc = dh * o * (1.0 - tanh_c ** 2) + dc_next

        dz = grad_z[t]
        dz[:h] = dc * g * i * (1.0 - i)
        dz[h:2 * h] = dc * c_prev * f * (1.0 - f)
        dz[2 * h:3 * h] = dc * i * (1.0 - g ** 2)
        dz[3 * h:] = dh * tanh_c * o * (1.0 - o)

        grad_U += np.outer(h_prev, dz)
        dh_next = params.U @ dz
        dc_next = dc * f

    grads = LstmParams(cache.inputs.T @ grad_z, grad_U, grad_z.sum(axis=0))
    return grads, grad_z @ params.W.T


# ---------------------------------------------------------------------------
# Bidirectional composition
# ---------------------------------------------------------------------------

@dataclass
class BiLstmParams:
    forward: LstmParams
    backward: LstmParams

    @property
    def output_size(self) -> int:
        return self.forward.hidden_size + self.backward.hidden_size

    def named(self, prefix: str) -> NamedTensors:
        return {**self.forward.named(f"{prefix}.fwd"), **self.backward.named(f"{prefix}.bwd")}

    @classmethod
    def from_named(cls, tensors: NamedTensors, prefix: str) -> "BiLstmParams":
        return cls(LstmParams.from_named(tensors, f"{prefix}.fwd"),
                   LstmParams.from_named(tensors, f"{prefix}.bwd"))

    @classmethod
    def init(cls, input_size: int, hidden_size: int, rng: np.random.Generator) -> "BiLstmParams":
        return cls(LstmParams.init(input_size, hidden_size, rng),
                   LstmParams.init(input_size, hidden_size, rng))

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "BiLstmParams":
        return cls(LstmParams.zeros(input_size, hidden_size), LstmParams.zeros(input_size, hidden_size))


@dataclass
class BiLstmCache:
    forward: LstmCache
    backward: LstmCache


def bilstm_forward(params: BiLstmParams, inputs: Tensor) -> Tuple[Tensor, BiLstmCache]:
    """Forward pass concatenated with a pass over the reversed sequence, re-reversed."""
    inputs = as_tensor(inputs)
    fwd, fwd_cache = lstm_forward(params.forward, inputs)
    bwd, bwd_cache = lstm_forward(params.backward, inputs[::-1])
    return np.concatenate([fwd, bwd[::-1]], axis=1), BiLstmCache(fwd_cache, bwd_cache)


def bilstm_backward(cache: BiLstmCache, grad_output: Tensor) -> Tuple[BiLstmParams, Tensor]:
    split = cache.forward.params.hidden_size
    grad_output = as_tensor(grad_output)
    grad_fwd, grad_in_fwd = lstm_backward(cache.forward, grad_output[:, :split])
    grad_bwd, grad_in_bwd = lstm_backward(cache.backward, grad_output[::-1, split:])
    return BiLstmParams(grad_fwd, grad_bwd), grad_in_fwd + grad_in_bwd[::-1]
