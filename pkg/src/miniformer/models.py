"""Mini-Former (Bi-LSTM encoder + attention decoder) and a Transformer baseline.

Both models expose the same surface used by training and the CLI:

* ``forward_teacher_forced(src_ids, src_lengths, tgt_in)`` -> logits [B, T, V]
* ``greedy_decode_batch(src_ids, src_lengths, max_len)`` -> list of id lists
* ``parameters()`` -> ordered ``{name: Tensor}``
* ``config`` / ``kind`` for checkpointing
"""

from __future__ import annotations

import dataclasses
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import layers as Lyr
from . import tensor as T
from .layers import (
    ConfigError,
    FFNParams,
    LayerNormParams,
    LinearParams,
    LstmCellParams,
    LstmState,
    MultiHeadParams,
)
from .tensor import Tensor, no_grad

PAD, BOS, EOS, UNK = 0, 1, 2, 3


@dataclass
class MiniFormerConfig:
    vocab_src: int
    vocab_tgt: int
    d_embed: int = 64
    d_hidden: int = 32
    enc_layers: int = 1
    max_len: int = 64
    ffn_activation: str = "none"

    @property
    def d_dec(self) -> int:
        return 2 * self.d_hidden

    def validate(self) -> None:
        for name in ("vocab_src", "vocab_tgt", "d_embed", "d_hidden", "enc_layers", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass
class TransformerConfig:
    vocab_src: int
    vocab_tgt: int
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    n_layers_enc: int = 2
    n_layers_dec: int = 2
    max_len: int = 64
    ffn_activation: str = "none"

    def validate(self) -> None:
        for name in ("vocab_src", "vocab_tgt", "d_model", "n_heads", "d_ff", "n_layers_enc",
                     "n_layers_dec", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for positional encoding, got {self.d_model}")
        if self.ffn_activation not in Lyr.FFN_ACTIVATIONS:
            raise ConfigError(f"unknown ffn_activation {self.ffn_activation!r}")


@dataclass
class EncoderOutput:
    states: Tensor
    lengths: np.ndarray
    final_fwd: LstmState | None = None
    final_bwd: LstmState | None = None

    @property
    def mask(self) -> np.ndarray:
        return np.arange(self.states.shape[1])[None, :] < self.lengths[:, None]


class Model:
    kind: str
    config: MiniFormerConfig | TransformerConfig
    params: object

    def parameters(self) -> OrderedDict[str, Tensor]:
        return OrderedDict(Lyr.named_parameters(self.params))

    def zero_grad(self) -> None:
        T.zero_grads(self.parameters().values())

    def forward_teacher_forced(self, src_ids, src_lengths, tgt_in) -> Tensor:
        raise NotImplementedError

    def greedy_decode_batch(self, src_ids, src_lengths, max_len: int) -> list[list[int]]:
        raise NotImplementedError

    def greedy_decode(self, src_ids, max_len: int) -> list[int]:
        """Decode one source id sequence; stops at EOS or after ``max_len`` tokens."""
        src = np.asarray(src_ids, dtype=np.int64)[None, :]
        return self.greedy_decode_batch(src, np.array([src.shape[1]]), max_len)[0]


def _argmax_lowest(logits: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximal index, i.e. the lowest id on ties
    return np.argmax(logits, axis=-1)


def _check_ids(ids: np.ndarray, vocab: int, what: str) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        bad = int(ids[(ids < 0) | (ids >= vocab)].flat[0])
        raise IndexError(f"{what} id {bad} out of range for vocabulary of {vocab}")
    return ids


def _collect_greedy(step_tokens: list[np.ndarray], max_len: int) -> list[list[int]]:
    if not step_tokens:
        return []
    toks = np.stack(step_tokens, axis=1)
    out = []
    for row in toks:
        seq = []
        for tok in row[:max_len]:
            if tok == EOS:
                break
            seq.append(int(tok))
        out.append(seq)
    return out


# ---------------------------------------------------------------------------
# Mini-Former
# ---------------------------------------------------------------------------
@dataclass
class EncoderLayerParams:
    fwd: LstmCellParams
    bwd: LstmCellParams
    h0_fwd: Tensor
    c0_fwd: Tensor
    h0_bwd: Tensor
    c0_bwd: Tensor


@dataclass
class MiniFormerParams:
    src_embed: Tensor
    encoder: list[EncoderLayerParams]
    tgt_embed: Tensor
    init_h: LinearParams
    init_c: LinearParams
    decoder: LstmCellParams
    combine: LinearParams
    out: LinearParams


class MiniFormer(Model):
    """Bi-LSTM encoder with learnable initial states and an attention LSTM decoder."""

    kind = "miniformer"

    def __init__(self, config: MiniFormerConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        H, E = config.d_hidden, config.d_embed
        enc = []
        for layer in range(config.enc_layers):
            d_in = E if layer == 0 else 2 * H
            enc.append(
                EncoderLayerParams(
                    fwd=LstmCellParams.init(rng, d_in, H),
                    bwd=LstmCellParams.init(rng, d_in, H),
                    h0_fwd=T.parameter(rng.uniform(-1e-2, 1e-2, (1, H))),
                    c0_fwd=T.parameter(rng.uniform(-1e-2, 1e-2, (1, H))),
                    h0_bwd=T.parameter(rng.uniform(-1e-2, 1e-2, (1, H))),
                    c0_bwd=T.parameter(rng.uniform(-1e-2, 1e-2, (1, H))),
                )
            )
        D = config.d_dec
        self.params = MiniFormerParams(
            src_embed=Lyr.init_embedding(rng, config.vocab_src, E),
            encoder=enc,
            tgt_embed=Lyr.init_embedding(rng, config.vocab_tgt, E),
            init_h=LinearParams.init(rng, 2 * H, D),
            init_c=LinearParams.init(rng, 2 * H, D),
            decoder=LstmCellParams.init(rng, E, D),
            combine=LinearParams.init(rng, 2 * D, D),
            out=LinearParams.init(rng, D, config.vocab_tgt),
        )

    # -- encoder ---------------------------------------------------------------
    def encode(self, src_ids, lengths) -> EncoderOutput:
        src_ids = _check_ids(src_ids, self.config.vocab_src, "source")
        lengths = np.asarray(lengths, dtype=np.int64)
        x = Lyr.embedding_lookup(self.params.src_embed, src_ids)
        final_f = final_b = None
        for layer in self.params.encoder:
            x, final_f, final_b = Lyr.bilstm_forward(
                layer.fwd,
                layer.bwd,
                x,
                lengths,
                LstmState(layer.h0_fwd, layer.c0_fwd),
                LstmState(layer.h0_bwd, layer.c0_bwd),
                return_final=True,
            )
        return EncoderOutput(x, lengths, final_f, final_b)

    def decoder_init(self, enc: EncoderOutput) -> LstmState:
        p = self.params
        h = T.tanh(Lyr.linear(p.init_h, T.concat([enc.final_fwd.h, enc.final_bwd.h], axis=1)))
        c = T.tanh(Lyr.linear(p.init_c, T.concat([enc.final_fwd.c, enc.final_bwd.c], axis=1)))
        return LstmState(h, c)

    # -- decoder ---------------------------------------------------------------
    def _step(self, fused, x_proj: Tensor, state: LstmState, enc: EncoderOutput, mask):
        state = fused.step(x_proj, state)
        query = state.h.reshape(state.h.shape[0], 1, state.h.shape[1])
        att = Lyr.scaled_dot_attention(query, enc.states, enc.states, mask)
        B = state.h.shape[0]
        context = att.context.reshape(B, att.context.shape[-1])
        combined = T.tanh(Lyr.linear(self.params.combine, T.concat([context, state.h], axis=1)))
        weights = att.weights.reshape(B, att.weights.shape[-1])
        return combined, state, weights

    def decode_step(self, prev_token, dec_state: LstmState, enc: EncoderOutput):
        """One decoder step for a batch of previous tokens.

        Returns ``(logits [B, V], new_state, attention weights [B, src_len])``.
        """
        prev = _check_ids(np.atleast_1d(prev_token), self.config.vocab_tgt, "target")
        if dec_state.h.shape[-1] != self.config.d_dec:
            raise Lyr.DimensionError(f"decoder state width {dec_state.h.shape[-1]} != d_dec {self.config.d_dec}")
        fused = Lyr._FusedLstm(self.params.decoder)
        x_proj = fused.project_inputs(Lyr.embedding_lookup(self.params.tgt_embed, prev))
        combined, state, weights = self._step(fused, x_proj, dec_state, enc, enc.mask)
        return Lyr.linear(self.params.out, combined), state, weights

    def forward_teacher_forced(self, src_ids, src_lengths, tgt_in) -> Tensor:
        tgt_in = _check_ids(tgt_in, self.config.vocab_tgt, "target")
        if tgt_in.ndim != 2 or tgt_in.shape[1] == 0:
            raise ValueError("forward_teacher_forced: empty target")
        enc = self.encode(src_ids, src_lengths)
        state = self.decoder_init(enc)
        fused = Lyr._FusedLstm(self.params.decoder)
        x_proj = fused.project_inputs(Lyr.embedding_lookup(self.params.tgt_embed, tgt_in))
        mask = enc.mask
        outs = []
        for t in range(tgt_in.shape[1]):
            combined, state, _ = self._step(fused, x_proj[:, t], state, enc, mask)
            outs.append(combined)
        return Lyr.linear(self.params.out, T.stack(outs, axis=1))

    def greedy_decode_batch(self, src_ids, src_lengths, max_len: int) -> list[list[int]]:
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        with no_grad():
            enc = self.encode(src_ids, src_lengths)
            state = self.decoder_init(enc)
            fused = Lyr._FusedLstm(self.params.decoder)
            B = enc.states.shape[0]
            prev = np.full(B, BOS, dtype=np.int64)
            done = np.zeros(B, dtype=bool)
            steps = []
            for _ in range(max_len):
                x_proj = fused.project_inputs(Lyr.embedding_lookup(self.params.tgt_embed, prev))
                combined, state, _ = self._step(fused, x_proj, state, enc, enc.mask)
                prev = _argmax_lowest(Lyr.linear(self.params.out, combined).data)
                steps.append(prev)
                done |= prev == EOS
                if done.all():
                    break
        return _collect_greedy(steps, max_len)


# ---------------------------------------------------------------------------
# Transformer baseline
# ---------------------------------------------------------------------------
@dataclass
class EncoderBlock:
    norm_attn: LayerNormParams
    attn: MultiHeadParams
    norm_ffn: LayerNormParams
    ffn: FFNParams


@dataclass
class DecoderBlock:
    norm_self: LayerNormParams
    self_attn: MultiHeadParams
    norm_cross: LayerNormParams
    cross_attn: MultiHeadParams
    norm_ffn: LayerNormParams
    ffn: FFNParams


@dataclass
class TransformerParams:
    src_embed: Tensor
    tgt_embed: Tensor
    encoder: list[EncoderBlock]
    enc_norm: LayerNormParams
    decoder: list[DecoderBlock]
    dec_norm: LayerNormParams
    out: LinearParams


class Transformer(Model):
    """Pre-norm encoder-decoder Transformer with sinusoidal positions."""

    kind = "transformer"

    def __init__(self, config: TransformerConfig, seed: int = 0):
        config.validate()
        self.config = config
        rng = np.random.default_rng(seed)
        D, h, F = config.d_model, config.n_heads, config.d_ff
        enc = [
            EncoderBlock(LayerNormParams.init(D), MultiHeadParams.init(rng, D, h),
                         LayerNormParams.init(D), FFNParams.init(rng, D, F))
            for _ in range(config.n_layers_enc)
        ]
        dec = [
            DecoderBlock(LayerNormParams.init(D), MultiHeadParams.init(rng, D, h),
                         LayerNormParams.init(D), MultiHeadParams.init(rng, D, h),
                         LayerNormParams.init(D), FFNParams.init(rng, D, F))
            for _ in range(config.n_layers_dec)
        ]
        self.params = TransformerParams(
            src_embed=Lyr.init_embedding(rng, config.vocab_src, D),
            tgt_embed=Lyr.init_embedding(rng, config.vocab_tgt, D),
            encoder=enc,
            enc_norm=LayerNormParams.init(D),
            decoder=dec,
            dec_norm=LayerNormParams.init(D),
            out=LinearParams.init(rng, D, config.vocab_tgt),
        )
        self._pe = Lyr.positional_encoding(config.max_len + 2, D)

    def _positions(self, n: int) -> np.ndarray:
        if n > self._pe.shape[0]:
            self._pe = Lyr.positional_encoding(n, self.config.d_model)
        return self._pe[:n]

    def encode(self, src_ids, lengths) -> EncoderOutput:
        src_ids = _check_ids(src_ids, self.config.vocab_src, "source")
        lengths = np.asarray(lengths, dtype=np.int64)
        act = self.config.ffn_activation
        x = Lyr.embedding_lookup(self.params.src_embed, src_ids) + self._positions(src_ids.shape[1])
        mask = np.arange(src_ids.shape[1])[None, :] < lengths[:, None]
        for blk in self.params.encoder:
            y = Lyr.layer_norm(blk.norm_attn, x)
            x = x + Lyr.multi_head_attention(blk.attn, y, y, y, mask)
            x = x + Lyr.ffn_forward(blk.ffn, Lyr.layer_norm(blk.norm_ffn, x), act)
        return EncoderOutput(Lyr.layer_norm(self.params.enc_norm, x), lengths)

    def decode(self, enc: EncoderOutput, tgt_in: np.ndarray) -> Tensor:
        tgt_in = _check_ids(tgt_in, self.config.vocab_tgt, "target")
        B, n = tgt_in.shape
        act = self.config.ffn_activation
        x = Lyr.embedding_lookup(self.params.tgt_embed, tgt_in) + self._positions(n)
        causal = np.broadcast_to(np.tril(np.ones((n, n), dtype=bool)), (B, n, n))
        src_mask = enc.mask
        for blk in self.params.decoder:
            y = Lyr.layer_norm(blk.norm_self, x)
            x = x + Lyr.multi_head_attention(blk.self_attn, y, y, y, causal)
            y = Lyr.layer_norm(blk.norm_cross, x)
            x = x + Lyr.multi_head_attention(blk.cross_attn, y, enc.states, enc.states, src_mask)
            x = x + Lyr.ffn_forward(blk.ffn, Lyr.layer_norm(blk.norm_ffn, x), act)
        return Lyr.linear(self.params.out, Lyr.layer_norm(self.params.dec_norm, x))

    def forward_teacher_forced(self, src_ids, src_lengths, tgt_in) -> Tensor:
        tgt_in = np.asarray(tgt_in, dtype=np.int64)
        if tgt_in.ndim != 2 or tgt_in.shape[1] == 0:
            raise ValueError("forward_teacher_forced: empty target")
        return self.decode(self.encode(src_ids, src_lengths), tgt_in)

    def greedy_decode_batch(self, src_ids, src_lengths, max_len: int) -> list[list[int]]:
        if max_len < 1:
            raise ValueError("max_len must be >= 1")
        with no_grad():
            enc = self.encode(src_ids, src_lengths)
            B = enc.states.shape[0]
            prefix = np.full((B, 1), BOS, dtype=np.int64)
            done = np.zeros(B, dtype=bool)
            steps = []
            for _ in range(max_len):
                logits = self.decode(enc, prefix).data[:, -1]
                nxt = _argmax_lowest(logits)
                steps.append(nxt)
                done |= nxt == EOS
                if done.all():
                    break
                prefix = np.concatenate([prefix, nxt[:, None]], axis=1)
        return _collect_greedy(steps, max_len)


# ---------------------------------------------------------------------------
# helpers shared by training and the CLI
# ---------------------------------------------------------------------------
MODEL_KINDS = {"miniformer": (MiniFormer, MiniFormerConfig), "transformer": (Transformer, TransformerConfig)}


def build_model(kind: str, config: dict, seed: int = 0) -> Model:
    try:
        cls, cfg_cls = MODEL_KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown model kind {kind!r}") from None
    return cls(cfg_cls(**config), seed=seed)


def config_dict(model: Model) -> dict:
    return dataclasses.asdict(model.config)


def matched_transformer_config(cfg: MiniFormerConfig, n_heads: int = 4, n_layers: int = 2,
                               d_ff: int | None = None) -> TransformerConfig:
    """Baseline sized for comparison: d_model = 2 * d_hidden, same vocabularies."""
    d_model = 2 * cfg.d_hidden
    return TransformerConfig(
        vocab_src=cfg.vocab_src,
        vocab_tgt=cfg.vocab_tgt,
        d_model=d_model,
        n_heads=n_heads,
        d_ff=4 * d_model if d_ff is None else d_ff,
        n_layers_enc=n_layers,
        n_layers_dec=n_layers,
        max_len=cfg.max_len,
        ffn_activation=cfg.ffn_activation,
    )


def count_params(model) -> int:
    """Total number of trainable scalars in a model or parameter group."""
    named = model.parameters() if isinstance(model, Model) else OrderedDict(Lyr.named_parameters(model))
    return int(sum(t.size for t in named.values()))


def param_breakdown(model: Model) -> OrderedDict[str, int]:
    """Parameter counts grouped by top-level submodule name."""
    out: OrderedDict[str, int] = OrderedDict()
    for name, t in model.parameters().items():
        top = name.split(".", 1)[0]
        out[top] = out.get(top, 0) + t.size
    return out
