"""LSTM and GRU cells, stacked recurrent networks and backpropagation through time.

Cell equations
--------------
LSTM (gates use the logistic sigmoid, ``g1``/``g2`` are configurable)::

    f   = sigmoid(W_f x + R_f y_prev + b_f)
    c~  = g1(W_c x + R_c y_prev + b_c)
    u   = sigmoid(W_u x + R_u y_prev + b_u)
    h   = u * c~ + f * h_prev
    o   = sigmoid(W_o x + R_o y_prev + b_o)
    y   = o * g2(h)

The recurrent signal for the gates is the previous *output* ``y`` while the
cell update uses the previous *cell state* ``h``.

GRU::

    r   = sigmoid(W_r h_prev + R_r x + b_r)
    h'  = h_prev * r
    z   = g(W_z h' + R_z x + b_z)
    u   = sigmoid(W_u h_prev + R_u x + b_u)
    h   = (1 - u) * h_prev + u * z

In :class:`GateParams` the ``input_weights`` always multiply the input ``x``
and ``recurrent_weights`` always multiply the recurrent state, for both cell
kinds. (In the GRU notation above that means ``input_weights`` holds ``R_*``.)

A network is a stack of layers of one cell kind. Every layer emits its full
hidden sequence to the next; the top layer's last output feeds a single
sigmoid neuron.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .numerics import (
    Activation,
    activation_grad_from_output,
    apply_activation,
    hadamard,
    matvec,
    sigmoid,
)


class CellKind(str, Enum):
    LSTM = "lstm"
    GRU = "gru"


GATE_NAMES = {
    CellKind.LSTM: ("forget", "input_gate", "candidate", "output_gate"),
    CellKind.GRU: ("reset", "update", "candidate"),
}


@dataclass(frozen=True)
class GateParams:
    input_weights: np.ndarray
    recurrent_weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        width = self.bias.shape[0]
        if self.input_weights.shape[0] != width or self.recurrent_weights.shape[0] != width:
            raise ValueError(
                f"gate rows disagree: input {self.input_weights.shape}, "
                f"recurrent {self.recurrent_weights.shape}, bias {self.bias.shape}"
            )

    @property
    def width(self) -> int:
        return self.bias.shape[0]

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[1]


def _check_same_dims(gates: Sequence[GateParams]):
    shapes = {(g.input_weights.shape, g.recurrent_weights.shape) for g in gates}
    if len(shapes) != 1:
        raise ValueError(f"all gates of a cell must share dimensions, got {sorted(shapes)}")


@dataclass(frozen=True)
class LstmCellParams:
    forget: GateParams
    input_gate: GateParams
    candidate: GateParams
    output_gate: GateParams
    g1: Activation = Activation.TANH
    g2: Activation = Activation.TANH

    def __post_init__(self):
        _check_same_dims(self.gates())
        if self.forget.recurrent_weights.shape[1] != self.forget.width:
            raise ValueError("LSTM recurrent weights must be square (width x width)")

    def gates(self) -> tuple[GateParams, ...]:
        return (self.forget, self.input_gate, self.candidate, self.output_gate)


@dataclass(frozen=True)
class GruCellParams:
    reset: GateParams
    update: GateParams
    candidate: GateParams
    g: Activation = Activation.TANH

    def __post_init__(self):
        _check_same_dims(self.gates())
        if self.reset.recurrent_weights.shape[1] != self.reset.width:
            raise ValueError("GRU recurrent weights must be square (width x width)")

    def gates(self) -> tuple[GateParams, ...]:
        return (self.reset, self.update, self.candidate)


@dataclass(frozen=True)
class LstmState:
    cell: np.ndarray
    output: np.ndarray

    @classmethod
    def zeros(cls, width: int) -> "LstmState":
        return cls(np.zeros(width), np.zeros(width))


@dataclass(frozen=True)
class NetworkSpec:
    cell_kind: CellKind
    layer_widths: tuple[int, ...]
    input_dim: int
    activation: Activation = Activation.TANH

    def __post_init__(self):
        object.__setattr__(self, "cell_kind", CellKind(self.cell_kind))
        object.__setattr__(self, "activation", Activation(self.activation))
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if not self.layer_widths:
            raise ValueError("layer_widths must not be empty")
        if any(w <= 0 for w in self.layer_widths) or self.input_dim <= 0:
            raise ValueError("layer widths and input_dim must be positive")

    def layer_input_dims(self) -> list[int]:
        return [self.input_dim, *self.layer_widths[:-1]]


@dataclass(frozen=True)
class NetworkParams:
    layers: tuple
    head_weights: np.ndarray  # shape (1, last width)
    head_bias: float = 0.0

    def check(self, spec: NetworkSpec) -> None:
        if len(self.layers) != len(spec.layer_widths):
            raise ValueError(f"expected {len(spec.layer_widths)} layers, got {len(self.layers)}")
        cell_type = LstmCellParams if spec.cell_kind is CellKind.LSTM else GruCellParams
        for i, (layer, width, d_in) in enumerate(
            zip(self.layers, spec.layer_widths, spec.layer_input_dims())
        ):
            if not isinstance(layer, cell_type):
                raise ValueError(f"layer {i} is not a {spec.cell_kind.value} cell")
            g = layer.gates()[0]
            if g.width != width or g.input_dim != d_in:
                raise ValueError(
                    f"layer {i}: expected width {width} and input {d_in}, "
                    f"got width {g.width} and input {g.input_dim}"
                )
        if self.head_weights.shape != (1, spec.layer_widths[-1]):
            raise ValueError(f"head weights must be 1x{spec.layer_widths[-1]}, got {self.head_weights.shape}")


# --------------------------------------------------------------------------
# construction and flat layout

def make_cell(spec: NetworkSpec, gates: list[GateParams]):
    if spec.cell_kind is CellKind.LSTM:
        return LstmCellParams(*gates, g1=spec.activation, g2=spec.activation)
    return GruCellParams(*gates, g=spec.activation)


def init_params(spec: NetworkSpec, rng: np.random.Generator) -> NetworkParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""

    def uniform(rows, cols):
        bound = 1.0 / np.sqrt(cols)
        return rng.uniform(-bound, bound, size=(rows, cols))

    layers = []
    for width, d_in in zip(spec.layer_widths, spec.layer_input_dims()):
        gates = [
            GateParams(uniform(width, d_in), uniform(width, width), np.zeros(width))
            for _ in GATE_NAMES[spec.cell_kind]
        ]
        layers.append(make_cell(spec, gates))
    return NetworkParams(tuple(layers), uniform(1, spec.layer_widths[-1]), 0.0)


def zero_params(spec: NetworkSpec) -> NetworkParams:
    layers = []
    for width, d_in in zip(spec.layer_widths, spec.layer_input_dims()):
        gates = [
            GateParams(np.zeros((width, d_in)), np.zeros((width, width)), np.zeros(width))
            for _ in GATE_NAMES[spec.cell_kind]
        ]
        layers.append(make_cell(spec, gates))
    return NetworkParams(tuple(layers), np.zeros((1, spec.layer_widths[-1])), 0.0)


def param_count(spec: NetworkSpec) -> int:
    n_gates = len(GATE_NAMES[spec.cell_kind])
    total = 0
    for width, d_in in zip(spec.layer_widths, spec.layer_input_dims()):
        total += n_gates * (width * d_in + width * width + width)
    return total + spec.layer_widths[-1] + 1


def flatten(params: NetworkParams) -> np.ndarray:
    """Layer by layer, gate by gate: input weights, recurrent weights, bias; then the head."""
    chunks = []
    for layer in params.layers:
        for g in layer.gates():
            chunks += [g.input_weights.ravel(), g.recurrent_weights.ravel(), g.bias]
    chunks += [params.head_weights.ravel(), np.array([params.head_bias])]
    return np.concatenate(chunks)


def unflatten(spec: NetworkSpec, flat: np.ndarray) -> NetworkParams:
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (param_count(spec),):
        raise ValueError(f"expected {param_count(spec)} parameters, got {flat.shape}")
    pos = 0

    def take(*shape):
        nonlocal pos
        n = int(np.prod(shape))
        out = flat[pos:pos + n].reshape(shape).copy()
        pos += n
        return out

    layers = []
    for width, d_in in zip(spec.layer_widths, spec.layer_input_dims()):
        gates = [
            GateParams(take(width, d_in), take(width, width), take(width))
            for _ in GATE_NAMES[spec.cell_kind]
        ]
        layers.append(make_cell(spec, gates))
    head_w = take(1, spec.layer_widths[-1])
    head_b = float(take(1)[0])
    return NetworkParams(tuple(layers), head_w, head_b)


# --------------------------------------------------------------------------
# single-step cells

def _pre(g: GateParams, x: np.ndarray, s: np.ndarray) -> np.ndarray:
    return matvec(g.input_weights, x) + matvec(g.recurrent_weights, s) + g.bias


def lstm_step(p: LstmCellParams, x_t, prev: LstmState) -> LstmState:
    x_t = np.asarray(x_t, dtype=np.float64)
    if prev.cell.shape != (p.forget.width,) or prev.output.shape != (p.forget.width,):
        raise ValueError(f"state length must be {p.forget.width}, got {prev.cell.shape}/{prev.output.shape}")
    f = sigmoid(_pre(p.forget, x_t, prev.output))
    cand = apply_activation(p.g1, _pre(p.candidate, x_t, prev.output))
    u = sigmoid(_pre(p.input_gate, x_t, prev.output))
    h = hadamard(u, cand) + hadamard(f, prev.cell)
    o = sigmoid(_pre(p.output_gate, x_t, prev.output))
    y = hadamard(o, apply_activation(p.g2, h))
    return LstmState(h, y)


def gru_step(p: GruCellParams, x_t, h_prev) -> np.ndarray:
    x_t = np.asarray(x_t, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    if h_prev.shape != (p.reset.width,):
        raise ValueError(f"state length must be {p.reset.width}, got {h_prev.shape}")
    r = sigmoid(_pre(p.reset, x_t, h_prev))
    h_reset = hadamard(h_prev, r)
    z = apply_activation(p.g, _pre(p.candidate, x_t, h_reset))
    u = sigmoid(_pre(p.update, x_t, h_prev))
    return hadamard(1.0 - u, h_prev) + hadamard(u, z)


# --------------------------------------------------------------------------
# batched layers: xs has shape (batch, time, features)
#
# Gate weights are stacked so each timestep needs one recurrent matmul and the
# input projections for all timesteps are computed up front.

@dataclass
class _LayerCache:
    xs: np.ndarray
    ys: np.ndarray
    steps: list = field(default_factory=list)


def _stack(gates: Sequence[GateParams]):
    return (
        np.concatenate([g.input_weights for g in gates]),
        np.concatenate([g.recurrent_weights for g in gates]),
        np.concatenate([g.bias for g in gates]),
    )


def _split_grads(names, width, d_input, d_recurrent, da_all, inputs, recurrent_inputs):
    """Per-gate weight gradients from stacked pre-activation gradients.

    ``inputs`` and ``recurrent_inputs`` may be a single array for all gates
    or a per-gate list.
    """
    flat_da = da_all.reshape(-1, da_all.shape[-1])
    acc = {}
    for k, name in enumerate(names):
        da = flat_da[:, k * width:(k + 1) * width]
        x = inputs[k] if isinstance(inputs, list) else inputs
        s = recurrent_inputs[k] if isinstance(recurrent_inputs, list) else recurrent_inputs
        acc[name] = [
            da.T @ x.reshape(-1, d_input),
            da.T @ s.reshape(-1, d_recurrent),
            da.sum(axis=0),
        ]
    return acc


def _lstm_forward(p: LstmCellParams, xs: np.ndarray) -> _LayerCache:
    batch, n_steps, _ = xs.shape
    width = p.forget.width
    w_in, w_rec, bias = _stack(p.gates())
    pre_x = xs @ w_in.T + bias
    h = np.zeros((batch, width))
    y = np.zeros((batch, width))
    cache = _LayerCache(xs, np.empty((batch, n_steps, width)))
    for t in range(n_steps):
        a = pre_x[:, t, :] + y @ w_rec.T
        f = sigmoid(a[:, :width])
        u = sigmoid(a[:, width:2 * width])
        cand = apply_activation(p.g1, a[:, 2 * width:3 * width])
        o = sigmoid(a[:, 3 * width:])
        h_new = u * cand + f * h
        gh = apply_activation(p.g2, h_new)
        cache.steps.append((h, f, u, cand, o, gh))
        h, y = h_new, o * gh
        cache.ys[:, t, :] = y
    return cache


def _lstm_backward(p: LstmCellParams, cache: _LayerCache, dys: np.ndarray):
    xs = cache.xs
    batch, n_steps, d_in = xs.shape
    width = p.forget.width
    w_in, w_rec, _ = _stack(p.gates())
    da_all = np.empty((batch, n_steps, 4 * width))
    dy_next = np.zeros((batch, width))
    dh_next = np.zeros((batch, width))
    for t in reversed(range(n_steps)):
        h_prev, f, u, cand, o, gh = cache.steps[t]
        dy = dys[:, t, :] + dy_next
        dh = dh_next + dy * o * activation_grad_from_output(p.g2, gh)
        da = da_all[:, t, :]
        da[:, :width] = dh * h_prev * f * (1.0 - f)
        da[:, width:2 * width] = dh * cand * u * (1.0 - u)
        da[:, 2 * width:3 * width] = dh * u * activation_grad_from_output(p.g1, cand)
        da[:, 3 * width:] = dy * gh * o * (1.0 - o)
        dh_next = dh * f
        dy_next = da @ w_rec
    y_prev = np.concatenate([np.zeros((batch, 1, width)), cache.ys[:, :-1, :]], axis=1)
    acc = _split_grads(GATE_NAMES[CellKind.LSTM], width, d_in, width, da_all, xs, y_prev)
    return da_all @ w_in, acc


def _gru_forward(p: GruCellParams, xs: np.ndarray) -> _LayerCache:
    batch, n_steps, _ = xs.shape
    width = p.reset.width
    w_in, _, bias = _stack(p.gates())
    w_ru = np.concatenate([p.reset.recurrent_weights, p.update.recurrent_weights])
    w_z = p.candidate.recurrent_weights
    pre_x = xs @ w_in.T + bias
    h = np.zeros((batch, width))
    cache = _LayerCache(xs, np.empty((batch, n_steps, width)))
    for t in range(n_steps):
        a = pre_x[:, t, :]
        ru = sigmoid(a[:, :2 * width] + h @ w_ru.T)
        r, u = ru[:, :width], ru[:, width:]
        h_reset = h * r
        z = apply_activation(p.g, a[:, 2 * width:] + h_reset @ w_z.T)
        cache.steps.append((h, r, u, h_reset, z))
        h = (1.0 - u) * h + u * z
        cache.ys[:, t, :] = h
    return cache


def _gru_backward(p: GruCellParams, cache: _LayerCache, dys: np.ndarray):
    xs = cache.xs
    batch, n_steps, d_in = xs.shape
    width = p.reset.width
    w_in, _, _ = _stack(p.gates())
    w_ru = np.concatenate([p.reset.recurrent_weights, p.update.recurrent_weights])
    w_z = p.candidate.recurrent_weights
    da_all = np.empty((batch, n_steps, 3 * width))
    h_reset_all = np.empty((batch, n_steps, width))
    dh_next = np.zeros((batch, width))
    for t in reversed(range(n_steps)):
        h_prev, r, u, h_reset, z = cache.steps[t]
        dh = dys[:, t, :] + dh_next
        da = da_all[:, t, :]
        da_z = dh * u * activation_grad_from_output(p.g, z)
        dh_reset = da_z @ w_z
        da[:, :width] = dh_reset * h_prev * r * (1.0 - r)
        da[:, width:2 * width] = dh * (z - h_prev) * u * (1.0 - u)
        da[:, 2 * width:] = da_z
        h_reset_all[:, t, :] = h_reset
        dh_next = dh * (1.0 - u) + dh_reset * r + da[:, :2 * width] @ w_ru
    h_prev_all = np.concatenate([np.zeros((batch, 1, width)), cache.ys[:, :-1, :]], axis=1)
    acc = _split_grads(GATE_NAMES[CellKind.GRU], width, d_in, width, da_all, xs,
                       [h_prev_all, h_prev_all, h_reset_all])
    return da_all @ w_in, acc


# --------------------------------------------------------------------------
# networks

def _as_batch(spec: NetworkSpec, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 3:
        raise ValueError(f"batch must be (batch, time, features), got shape {xs.shape}")
    if xs.shape[1] == 0:
        raise ValueError("input sequence is empty")
    if xs.shape[2] != spec.input_dim:
        raise ValueError(f"input vectors must have length {spec.input_dim}, got {xs.shape[2]}")
    return xs


def _network_forward(spec: NetworkSpec, params: NetworkParams, xs: np.ndarray):
    layer_fwd = _lstm_forward if spec.cell_kind is CellKind.LSTM else _gru_forward
    caches = []
    signal = xs
    for layer in params.layers:
        cache = layer_fwd(layer, signal)
        caches.append(cache)
        signal = cache.ys
    last = signal[:, -1, :]
    probs = sigmoid(last @ params.head_weights[0] + params.head_bias)
    return probs, caches


def forward_batch(spec: NetworkSpec, params: NetworkParams, xs) -> np.ndarray:
    """Accident probabilities for a batch of sequences shaped (batch, time, features)."""
    xs = _as_batch(spec, xs)
    params.check(spec)
    return _network_forward(spec, params, xs)[0]


def forward_sequence(spec: NetworkSpec, params: NetworkParams, seq) -> float:
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("sequence must be a non-empty list of input vectors")
    return float(forward_batch(spec, params, seq[None, :, :])[0])


def batch_gradients(spec: NetworkSpec, params: NetworkParams, xs, labels):
    """Mean-over-batch gradient of the cross-entropy loss.

    Returns ``(probs, grad)`` where ``grad`` is a :class:`NetworkParams`
    holding derivatives in place of values.
    """
    xs = _as_batch(spec, xs)
    labels = np.asarray(labels, dtype=np.float64)
    params.check(spec)
    batch = xs.shape[0]
    probs, caches = _network_forward(spec, params, xs)

    # sigmoid head with cross-entropy: dL/dlogit = p - y
    dlogit = (probs - labels) / batch
    last = caches[-1].ys[:, -1, :]
    head_w_grad = (dlogit @ last)[None, :]
    head_b_grad = float(dlogit.sum())

    layer_bwd = _lstm_backward if spec.cell_kind is CellKind.LSTM else _gru_backward
    dys = np.zeros_like(caches[-1].ys)
    dys[:, -1, :] = np.outer(dlogit, params.head_weights[0])
    grad_layers = [None] * len(params.layers)
    for i in reversed(range(len(params.layers))):
        dys, acc = layer_bwd(params.layers[i], caches[i], dys)
        gates = [GateParams(*acc[name]) for name in GATE_NAMES[spec.cell_kind]]
        grad_layers[i] = make_cell(spec, gates)
    return probs, NetworkParams(tuple(grad_layers), head_w_grad, head_b_grad)


def bptt_gradients(spec: NetworkSpec, params: NetworkParams, seq, label: int) -> np.ndarray:
    """Flat loss gradient for one labelled sequence, laid out like :func:`flatten`."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label!r}")
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise ValueError("sequence must be a non-empty list of input vectors")
    _, grad = batch_gradients(spec, params, seq[None, :, :], [label])
    return flatten(grad)
