"""Neural building blocks: embedding, linear, layer norm, LSTM, attention, FFN.

Layers are plain functions of ``(params, inputs)``. Parameter groups are small
dataclasses holding :class:`~miniformer.tensor.Tensor` leaves; use
:func:`named_parameters` to walk any nesting of them.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import DimensionError, Tensor

MASK_SCORE = -1e9
LAYER_NORM_EPS = 1e-5


class ConfigError(ValueError):
    """Invalid layer or model configuration."""


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


def named_parameters(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield ``(dotted.name, tensor)`` for every trainable leaf under ``obj``.

    Walks dataclass fields, lists and dicts in declaration order, so names are
    stable for a given configuration.
    """
    if isinstance(obj, Tensor):
        if obj.requires_grad:
            yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_parameters(getattr(obj, f.name), _join(prefix, f.name))
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from named_parameters(item, _join(prefix, str(i)))
    elif isinstance(obj, dict):
        for k, item in obj.items():
            yield from named_parameters(item, _join(prefix, str(k)))


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


# ---------------------------------------------------------------------------
# embedding / linear / layer norm
# ---------------------------------------------------------------------------
def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Gather rows of ``table`` for an integer id array of any shape."""
    return T.take_rows(table, ids)


def init_embedding(rng: np.random.Generator, vocab: int, dim: int) -> Tensor:
    # one-hot input: a single active unit, so fan_in = 1
    return uniform_init(rng, (vocab, dim), 1)


@dataclass
class LinearParams:
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_out: int) -> LinearParams:
        return cls(uniform_init(rng, (d_in, d_out), d_in), uniform_init(rng, (d_out,), d_in))


def linear(p: LinearParams, x: Tensor) -> Tensor:
    return x @ p.W + p.b


@dataclass
class LayerNormParams:
    gain: Tensor
    bias: Tensor

    @classmethod
    def init(cls, d: int) -> LayerNormParams:
        return cls(T.parameter(np.ones(d)), T.parameter(np.zeros(d)))


def layer_norm(p: LayerNormParams, x: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalise each last-axis slice to zero mean / unit variance, then scale."""
    centred = x - x.mean(axis=-1, keepdims=True)
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred * (var + eps) ** -0.5 * p.gain + p.bias


# ---------------------------------------------------------------------------
# LSTM
# ---------------------------------------------------------------------------
@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    def __post_init__(self):
        if self.h.shape != self.c.shape:
            raise DimensionError(f"LstmState: h {self.h.shape} and c {self.c.shape} differ")


@dataclass
class LstmCellParams:
    """One weight per gate acting on ``[h_prev, x_t]`` (hidden rows first)."""

    W_f: Tensor
    W_i: Tensor
    W_c: Tensor
    W_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_C: Tensor
    b_o: Tensor

    @classmethod
    def init(cls, rng: np.random.Generator, d_input: int, d_hidden: int) -> LstmCellParams:
        fan_in = d_input + d_hidden
        ws = [uniform_init(rng, (fan_in, d_hidden), fan_in) for _ in range(4)]
        bs = [uniform_init(rng, (d_hidden,), fan_in) for _ in range(4)]
        return cls(*ws, *bs)

    @property
    def hidden_size(self) -> int:
        return self.W_f.shape[1]

    @property
    def input_size(self) -> int:
        return self.W_f.shape[0] - self.W_f.shape[1]


class _FusedLstm:
    """Gate weights stacked column-wise once per sequence: [f | i | c~ | o]."""

    def __init__(self, p: LstmCellParams):
        H = p.hidden_size
        self.H = H
        W = T.concat([p.W_f, p.W_i, p.W_c, p.W_o], axis=1)
        self.W_h = W[:H]
        self.W_x = W[H:]
        self.b = T.concat([p.b_f, p.b_i, p.b_C, p.b_o], axis=0)

    def project_inputs(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.W_x.shape[0]:
            raise DimensionError(f"LSTM input width {x.shape[-1]} != expected {self.W_x.shape[0]}")
        return x @ self.W_x + self.b

    def step(self, x_proj: Tensor, prev: LstmState) -> LstmState:
        if prev.h.shape[-1] != self.H:
            raise DimensionError(f"LSTM state width {prev.h.shape[-1]} != hidden size {self.H}")
        z = prev.h @ self.W_h + x_proj
        H = self.H
        f = T.sigmoid(z[:, :H])
        i = T.sigmoid(z[:, H : 2 * H])
        c_tilde = T.tanh(z[:, 2 * H : 3 * H])
        o = T.sigmoid(z[:, 3 * H :])
        c = f * prev.c + i * c_tilde
        return LstmState(o * T.tanh(c), c)


def lstm_cell_step(params: LstmCellParams, x_t: Tensor, prev: LstmState) -> LstmState:
    """One LSTM step on a batch: ``x_t`` is [batch, input], states [batch, hidden]."""
    fused = _FusedLstm(params)
    return fused.step(fused.project_inputs(x_t), prev)


def _expand(state: LstmState, batch: int) -> LstmState:
    """Broadcast-copy a [1, hidden] state to [batch, hidden]."""
    if state.h.shape[0] == batch:
        return state
    ones = T.Tensor(np.ones((batch, 1)))
    return LstmState(ones @ state.h, ones @ state.c)


def lstm_scan(
    params: LstmCellParams,
    inputs: Tensor,
    lengths: np.ndarray,
    init: LstmState,
    reverse: bool = False,
) -> tuple[list[Tensor], LstmState]:
    """Run one direction over [batch, len, d]; returns per-step outputs and final state.

    Steps at or beyond a sequence's length leave its state untouched and emit
    zeros, so a reversed scan effectively starts at position ``length - 1``.
    """
    B, L, _ = inputs.shape
    lengths = np.asarray(lengths)
    fused = _FusedLstm(params)
    x_proj = fused.project_inputs(inputs)
    state = _expand(init, B)
    outputs: list[Tensor | None] = [None] * L
    zeros = np.zeros((B, params.hidden_size))
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        live = (t < lengths)[:, None]
        new = fused.step(x_proj[:, t], state)
        if live.all():
            state = new
            outputs[t] = new.h
        else:
            state = LstmState(T.where(live, new.h, state.h), T.where(live, new.c, state.c))
            outputs[t] = T.where(live, new.h, zeros)
    return outputs, state


def bilstm_forward(
    fwd: LstmCellParams,
    bwd: LstmCellParams,
    inputs: Tensor,
    lengths,
    init_fwd: LstmState,
    init_bwd: LstmState,
    return_final: bool = False,
):
    """Bidirectional LSTM over [batch, len, d] -> [batch, len, 2*hidden].

    Each position holds ``concat(h_fwd_t, h_bwd_t)``; padding positions are zero.
    With ``return_final`` the final forward and backward states are returned too.
    """
    lengths = np.asarray(lengths)
    if lengths.shape != (inputs.shape[0],):
        raise DimensionError(f"lengths shape {lengths.shape} vs batch {inputs.shape[0]}")
    if np.any(lengths < 1):
        raise ValueError("bilstm_forward: zero-length sequence in batch")
    if np.any(lengths > inputs.shape[1]):
        raise ValueError(f"bilstm_forward: length {lengths.max()} exceeds padded length {inputs.shape[1]}")
    out_f, final_f = lstm_scan(fwd, inputs, lengths, init_fwd)
    out_b, final_b = lstm_scan(bwd, inputs, lengths, init_bwd, reverse=True)
    outputs = T.concat([T.stack(out_f, axis=1), T.stack(out_b, axis=1)], axis=2)
    if return_final:
        return outputs, final_f, final_b
    return outputs


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------
@dataclass
class AttentionOutput:
    context: Tensor
    weights: Tensor


def scaled_dot_attention(Q: Tensor, K: Tensor, V: Tensor, mask=None) -> AttentionOutput:
    """softmax(Q K^T / sqrt(d_k)) V over the last two axes.

    ``mask`` is boolean, True where a key may be attended, and broadcasts to
    the score shape ``[..., n_queries, n_keys]`` (a ``[batch, n_keys]`` padding
    mask is accepted for 3-d inputs).
    """
    d_k = Q.shape[-1]
    if K.shape[-1] != d_k:
        raise DimensionError(f"attention: query width {d_k} != key width {K.shape[-1]}")
    if K.shape[-2] != V.shape[-2]:
        raise DimensionError(f"attention: {K.shape[-2]} keys but {V.shape[-2]} values")
    scores = (Q @ T.swapaxes(K, -1, -2)) * (1.0 / math.sqrt(d_k))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim == 2 and scores.ndim == 3:
            mask = mask[:, None, :]
        try:
            np.broadcast_to(mask, scores.shape)
        except ValueError:
            raise DimensionError(f"attention mask {mask.shape} does not fit scores {scores.shape}") from None
        scores = T.masked_fill(scores, ~mask, MASK_SCORE)
    weights = T.softmax(scores, axis=-1)
    return AttentionOutput(weights @ V, weights)


@dataclass
class MultiHeadParams:
    q: LinearParams
    k: LinearParams
    v: LinearParams
    o: LinearParams
    n_heads: int = dataclasses.field(default=1, metadata={"static": True})

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int, n_heads: int) -> MultiHeadParams:
        if n_heads < 1 or d_model % n_heads:
            raise ConfigError(f"d_model={d_model} is not divisible by n_heads={n_heads}")
        return cls(*(LinearParams.init(rng, d_model, d_model) for _ in range(4)), n_heads=n_heads)


def _split_heads(x: Tensor, h: int) -> Tensor:
    B, M, D = x.shape
    return T.transpose(x.reshape(B, M, h, D // h), (0, 2, 1, 3))


def multi_head_attention(p: MultiHeadParams, Q: Tensor, K: Tensor, V: Tensor, mask=None) -> Tensor:
    """Concat(head_1..head_h) W_o with head_i attending in a d_model/h subspace.

    ``mask`` is boolean over ``[batch, n_queries, n_keys]`` or ``[batch, n_keys]``.
    """
    h = p.n_heads
    B, M, D = Q.shape
    if D % h:
        raise ConfigError(f"d_model={D} is not divisible by n_heads={h}")
    q = _split_heads(linear(p.q, Q), h)
    k = _split_heads(linear(p.k, K), h)
    v = _split_heads(linear(p.v, V), h)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        mask = mask[:, None, None, :] if mask.ndim == 2 else mask[:, None, :, :]
    heads = scaled_dot_attention(q, k, v, mask).context
    merged = T.transpose(heads, (0, 2, 1, 3)).reshape(B, M, D)
    return linear(p.o, merged)


# ---------------------------------------------------------------------------
# position-wise pieces
# ---------------------------------------------------------------------------
def positional_encoding(length: int, d_model: int) -> np.ndarray:
    """Sinusoidal table: sin on even columns, cos on odd, shape [length, d_model]."""
    if d_model % 2:
        raise ConfigError(f"positional encoding needs an even d_model, got {d_model}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    rates = 10000.0 ** (np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    pe = np.empty((length, d_model))
    pe[:, 0::2] = np.sin(pos / rates)
    pe[:, 1::2] = np.cos(pos / rates)
    return pe


FFN_ACTIVATIONS = ("none", "relu")


@dataclass
class FFNParams:
    inner: LinearParams
    outer: LinearParams

    @classmethod
    def init(cls, rng: np.random.Generator, d_model: int, d_ff: int) -> FFNParams:
        return cls(LinearParams.init(rng, d_model, d_ff), LinearParams.init(rng, d_ff, d_model))


def ffn_forward(p: FFNParams, x: Tensor, activation: str = "none") -> Tensor:
    """(x W_1 + b_1) W_2 + b_2, optionally with relu on the inner layer."""
    if activation not in FFN_ACTIVATIONS:
        raise ConfigError(f"ffn activation must be one of {FFN_ACTIVATIONS}, got {activation!r}")
    hidden = linear(p.inner, x)
    if activation == "relu":
        hidden = T.relu(hidden)
    return linear(p.outer, hidden)
