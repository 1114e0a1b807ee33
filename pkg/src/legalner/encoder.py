"""Bi-LSTM context encoder with exact analytic gradients.

A single LSTM cell applies the standard gate recurrence to the concatenation
``z_t = [x_t, h_{t-1}]``:

    i_t = sigmoid(W_i z_t + b_i)        input gate
    f_t = sigmoid(W_f z_t + b_f)        forget gate
    o_t = sigmoid(W_o z_t + b_o)        output gate
    g_t = tanh(W_c z_t + b_c)           candidate cell
    c_t = f_t * c_{t-1} + i_t * g_t
    h_t = o_t * tanh(c_t)

All arithmetic is double precision; gradients come from explicit
backpropagation through time over the full sequence (no truncation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError

GATES = ("i", "f", "o", "c")


def sigmoid(x):
    # Splitting on sign avoids exp overflow for large |x|.
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LSTMCellParams:
    """Gate weights over ``[x_t, h_{t-1}]`` and gate biases.

    All four weight matrices share the shape (hidden, input + hidden); all
    four bias vectors have length hidden.
    """

    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    def __post_init__(self):
        shape = self.W_i.shape
        hidden = self.b_i.shape[0]
        for gate in GATES:
            w, b = getattr(self, f"W_{gate}"), getattr(self, f"b_{gate}")
            if w.shape != shape:
                raise ShapeError(f"W_{gate} has shape {w.shape}, expected {shape}")
            if b.shape != (hidden,):
                raise ShapeError(f"b_{gate} has shape {b.shape}, expected ({hidden},)")
        if shape[0] != hidden:
            raise ShapeError(
                f"weight rows {shape[0]} must equal bias length {hidden}"
            )
        if shape[1] <= hidden:
            raise ShapeError(
                f"weight columns {shape[1]} must exceed hidden size {hidden}"
            )

    @property
    def hidden_dim(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[1] - self.hidden_dim

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name)
                for name in ("W_i", "W_f", "W_o", "W_c",
                             "b_i", "b_f", "b_o", "b_c")}

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.tensors().items()}


@dataclass
class LSTMState:
    """Recurrence state: hidden vector ``h`` and cell vector ``c``."""

    h: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise ShapeError(f"h shape {self.h.shape} != c shape {self.c.shape}")


def init_lstm_cell(input_dim: int, hidden_dim: int, rng: np.random.Generator,
                   forget_bias: float = 1.0) -> LSTMCellParams:
    """Uniform(-sqrt(1/hidden), +sqrt(1/hidden)) weights, zero biases.

    The forget-gate bias defaults to 1.0 so early training does not erase the
    cell state; pass ``forget_bias=0.0`` for equation-exactness tests.
    """
    bound = np.sqrt(1.0 / hidden_dim)
    shape = (hidden_dim, input_dim + hidden_dim)
    weights = {f"W_{g}": rng.uniform(-bound, bound, shape) for g in GATES}
    biases = {f"b_{g}": np.zeros(hidden_dim) for g in GATES}
    biases["b_f"] = np.full(hidden_dim, float(forget_bias))
    return LSTMCellParams(**weights, **biases)


def zero_state(hidden_dim: int) -> LSTMState:
    return LSTMState(np.zeros(hidden_dim), np.zeros(hidden_dim))


def lstm_cell_step(params: LSTMCellParams, x_t: np.ndarray,
                   prev: LSTMState) -> LSTMState:
    """One step of the gate recurrence; returns the new (h_t, c_t)."""
    state, _ = _cell_step_cached(params, np.asarray(x_t, dtype=np.float64), prev)
    return state


def _cell_step_cached(params, x_t, prev):
    if x_t.shape != (params.input_dim,):
        raise ShapeError(
            f"input x_t has shape {x_t.shape}, cell expects ({params.input_dim},)"
        )
    if prev.h.shape != (params.hidden_dim,):
        raise ShapeError(
            f"state h has shape {prev.h.shape}, cell expects ({params.hidden_dim},)"
        )
    z = np.concatenate([x_t, prev.h])
    i = sigmoid(params.W_i @ z + params.b_i)
    f = sigmoid(params.W_f @ z + params.b_f)
    o = sigmoid(params.W_o @ z + params.b_o)
    g = np.tanh(params.W_c @ z + params.b_c)
    c = f * prev.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = (z, i, f, o, g, prev.c.copy(), c, tanh_c)
    return LSTMState(h, c), cache


def lstm_forward(params: LSTMCellParams, inputs, direction: str = "fwd"
                 ) -> list[LSTMState]:
    """Unroll the cell over a sequence, starting from the zero state.

    The backward direction runs the same recurrence over the reversed input
    and re-aligns the returned states to the original positions, so
    ``lstm_forward(p, xs, "bwd")[t] == lstm_forward(p, xs[::-1], "fwd")[T-1-t]``.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if not inputs:
        raise ShapeError("lstm_forward needs a non-empty input sequence")
    if direction == "bwd":
        inputs = inputs[::-1]
    states = []
    state = zero_state(params.hidden_dim)
    for x_t in inputs:
        state, _ = _cell_step_cached(params, x_t, state)
        states.append(state)
    if direction == "bwd":
        states.reverse()
    return states


@dataclass
class LSTMRunCache:
    """Everything the BPTT pass needs, in processing order."""

    inputs: list[np.ndarray]
    steps: list[tuple]  # per-step (z, i, f, o, g, c_prev, c, tanh_c)


def lstm_run_cached(params: LSTMCellParams, inputs
                    ) -> tuple[np.ndarray, LSTMRunCache]:
    """Forward pass in the given order; returns stacked h (T, hidden) + cache."""
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if not inputs:
        raise ShapeError("lstm_run_cached needs a non-empty input sequence")
    state = zero_state(params.hidden_dim)
    hs, steps = [], []
    for x_t in inputs:
        state, cache = _cell_step_cached(params, x_t, state)
        hs.append(state.h)
        steps.append(cache)
    return np.stack(hs), LSTMRunCache(inputs, steps)


def lstm_backward(params: LSTMCellParams, cache: LSTMRunCache,
                  d_h: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Backpropagate through time.

    ``d_h[t]`` is the loss gradient w.r.t. the hidden state emitted at
    processing step t. Returns (parameter gradients keyed like
    ``LSTMCellParams.tensors``, gradients w.r.t. the inputs in processing
    order).
    """
    T = len(cache.steps)
    hidden = params.hidden_dim
    input_dim = params.input_dim
    grads = params.zero_grads()
    d_inputs = np.zeros((T, input_dim))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(T - 1, -1, -1):
        z, i, f, o, g, c_prev, _c, tanh_c = cache.steps[t]
        dh = d_h[t] + dh_next
        do = dh * tanh_c
        dc = dc_next + dh * o * (1.0 - tanh_c * tanh_c)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        da_i = di * i * (1.0 - i)
        da_f = df * f * (1.0 - f)
        da_o = do * o * (1.0 - o)
        da_c = dg * (1.0 - g * g)
        grads["W_i"] += np.outer(da_i, z)
        grads["W_f"] += np.outer(da_f, z)
        grads["W_o"] += np.outer(da_o, z)
        grads["W_c"] += np.outer(da_c, z)
        grads["b_i"] += da_i
        grads["b_f"] += da_f
        grads["b_o"] += da_o
        grads["b_c"] += da_c
        dz = (params.W_i.T @ da_i + params.W_f.T @ da_f
              + params.W_o.T @ da_o + params.W_c.T @ da_c)
        d_inputs[t] = dz[:input_dim]
        dh_next = dz[input_dim:]
        dc_next = dc * f
    return grads, d_inputs


@dataclass
class BiLSTMEncoder:
    """Two opposite-direction cells plus a linear projection to tag scores."""

    forward_cell: LSTMCellParams
    backward_cell: LSTMCellParams
    proj_W: np.ndarray  # (2 * hidden, n_tags)
    proj_b: np.ndarray  # (n_tags,)

    def __post_init__(self):
        if self.forward_cell.hidden_dim != self.backward_cell.hidden_dim:
            raise ShapeError("forward and backward cells disagree on hidden size")
        if self.forward_cell.input_dim != self.backward_cell.input_dim:
            raise ShapeError("forward and backward cells disagree on input size")
        if self.proj_W.shape[0] != 2 * self.forward_cell.hidden_dim:
            raise ShapeError(
                f"projection expects input width {self.proj_W.shape[0]}, "
                f"encoder produces {2 * self.forward_cell.hidden_dim}"
            )
        if self.proj_b.shape != (self.proj_W.shape[1],):
            raise ShapeError(
                f"projection bias {self.proj_b.shape} does not match "
                f"{self.proj_W.shape[1]} tags"
            )

    @property
    def hidden_dim(self) -> int:
        return self.forward_cell.hidden_dim

    @property
    def input_dim(self) -> int:
        return self.forward_cell.input_dim

    @property
    def n_tags(self) -> int:
        return self.proj_W.shape[1]

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for prefix, cell in (("fwd", self.forward_cell),
                             ("bwd", self.backward_cell)):
            for name, arr in cell.tensors().items():
                out[f"{prefix}_{name}"] = arr
        out["proj_W"] = self.proj_W
        out["proj_b"] = self.proj_b
        return out


def init_encoder(input_dim: int, hidden_dim: int, n_tags: int,
                 rng: np.random.Generator,
                 forget_bias: float = 1.0) -> BiLSTMEncoder:
    bound = np.sqrt(1.0 / hidden_dim)
    return BiLSTMEncoder(
        forward_cell=init_lstm_cell(input_dim, hidden_dim, rng, forget_bias),
        backward_cell=init_lstm_cell(input_dim, hidden_dim, rng, forget_bias),
        proj_W=rng.uniform(-bound, bound, (2 * hidden_dim, n_tags)),
        proj_b=np.zeros(n_tags),
    )


@dataclass
class EncoderCache:
    fwd: LSTMRunCache
    bwd: LSTMRunCache
    hidden: np.ndarray  # (T, 2 * hidden)


def bilstm_forward(enc: BiLSTMEncoder, inputs) -> np.ndarray:
    """Per-position concatenation of forward and backward hidden states."""
    hidden, _ = bilstm_run_cached(enc, inputs)
    return hidden


def bilstm_run_cached(enc: BiLSTMEncoder, inputs
                      ) -> tuple[np.ndarray, EncoderCache]:
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    if not inputs:
        raise ShapeError("bilstm_forward needs a non-empty input sequence")
    h_fwd, cache_fwd = lstm_run_cached(enc.forward_cell, inputs)
    h_bwd_rev, cache_bwd = lstm_run_cached(enc.backward_cell, inputs[::-1])
    hidden = np.concatenate([h_fwd, h_bwd_rev[::-1]], axis=1)
    return hidden, EncoderCache(cache_fwd, cache_bwd, hidden)


def bilstm_backward(enc: BiLSTMEncoder, cache: EncoderCache,
                    d_hidden: np.ndarray
                    ) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients w.r.t. both cells and the encoder inputs.

    ``d_hidden`` is (T, 2 * hidden) in original positions; the backward-cell
    half is re-reversed into processing order internally.
    """
    hidden = enc.hidden_dim
    d_fwd_h = d_hidden[:, :hidden]
    d_bwd_h = d_hidden[:, hidden:][::-1]
    grads_fwd, d_in_fwd = lstm_backward(enc.forward_cell, cache.fwd, d_fwd_h)
    grads_bwd, d_in_bwd = lstm_backward(enc.backward_cell, cache.bwd, d_bwd_h)
    grads = {f"fwd_{k}": v for k, v in grads_fwd.items()}
    grads.update({f"bwd_{k}": v for k, v in grads_bwd.items()})
    d_inputs = d_in_fwd + d_in_bwd[::-1]
    return grads, d_inputs


def project_emissions(enc: BiLSTMEncoder, hidden_states: np.ndarray) -> np.ndarray:
    """Map (T, 2 * hidden) encoder output to unnormalized tag scores (T, n_tags)."""
    hidden_states = np.asarray(hidden_states, dtype=np.float64)
    if hidden_states.ndim != 2 or hidden_states.shape[1] != enc.proj_W.shape[0]:
        raise ShapeError(
            f"hidden states {hidden_states.shape} do not match projection "
            f"input width {enc.proj_W.shape[0]}"
        )
    return hidden_states @ enc.proj_W + enc.proj_b


def project_backward(enc: BiLSTMEncoder, hidden_states: np.ndarray,
                     d_scores: np.ndarray
                     ) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Gradients of the emission projection: (proj grads, d_hidden)."""
    grads = {
        "proj_W": hidden_states.T @ d_scores,
        "proj_b": d_scores.sum(axis=0),
    }
    return grads, d_scores @ enc.proj_W.T
