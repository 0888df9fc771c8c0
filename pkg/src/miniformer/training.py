"""Cross-entropy objective, Adam, early stopping and checkpoint persistence."""

from __future__ import annotations

import io
import json
import logging
import math
import os
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .data import PAD, Batch
from .models import Model, build_model
from .tensor import Tensor, no_grad

logger = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    """Loss became NaN or infinite."""


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------
def cross_entropy_loss(logits: Tensor, gold, pad_mask=None) -> Tensor:
    """Mean of -log softmax(logits)[gold] over positions where ``pad_mask`` is True.

    ``pad_mask`` defaults to ``gold != PAD``.
    """
    gold = np.asarray(gold, dtype=np.int64)
    keep = gold != PAD if pad_mask is None else np.asarray(pad_mask, dtype=bool)
    if keep.shape != gold.shape:
        raise T.DimensionError(f"mask shape {keep.shape} vs gold shape {gold.shape}")
    count = int(keep.sum())
    if count == 0:
        raise ValueError("cross_entropy_loss: every position is padding")
    if gold.size and (gold.min() < 0 or gold.max() >= logits.shape[-1]):
        raise IndexError(f"gold id out of range for {logits.shape[-1]} classes")
    nll = -T.pick_last(T.log_softmax(logits, axis=-1), gold)
    return (nll * keep).sum() * (1.0 / count)


def batch_loss(model: Model, batch: Batch) -> Tensor:
    logits = model.forward_teacher_forced(batch.src_ids, batch.src_lengths, batch.decoder_input)
    return cross_entropy_loss(logits, batch.gold)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def global_grad_norm(params: dict[str, Tensor]) -> float:
    return math.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params.values() if p.grad is not None))


def adam_step(state: AdamState, params: dict[str, Tensor], clip_norm: float | None = None) -> None:
    """Bias-corrected Adam update from each parameter's ``grad``; grads are zeroed after."""
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"no gradient for parameter {name!r}")
    scale = 1.0
    if clip_norm:
        norm = global_grad_norm(params)
        if norm > clip_norm:
            scale = clip_norm / norm
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for name, p in params.items():
        g = p.grad * scale if scale != 1.0 else p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.grad = None


# ---------------------------------------------------------------------------
# epoch loop
# ---------------------------------------------------------------------------
def epoch_order(n_batches: int, seed: int, epoch: int) -> np.ndarray:
    """Batch visiting order; a pure function of (seed, epoch) so resumes replay it."""
    return np.random.default_rng([seed, epoch]).permutation(n_batches)


def train_epoch(model: Model, batches: Sequence[Batch], adam: AdamState, seed: int = 0, epoch: int = 0,
                clip_norm: float | None = None) -> float:
    """One pass of forward/backward/Adam over shuffled batches; returns token-weighted mean loss."""
    if not batches:
        raise ValueError("train_epoch needs at least one batch")
    params = model.parameters()
    total = 0.0
    tokens = 0
    for k, idx in enumerate(epoch_order(len(batches), seed, epoch)):
        batch = batches[idx]
        loss = batch_loss(model, batch)
        value = loss.item()
        if not math.isfinite(value):
            norms = {n: float(np.linalg.norm(p.grad)) for n, p in params.items() if p.grad is not None}
            raise TrainingDivergence(
                f"non-finite loss {value} at batch {k} (index {idx}) of epoch {epoch}; "
                f"max grad norm so far {max(norms.values(), default=0.0):.4g}"
            )
        loss.backward()
        adam_step(adam, params, clip_norm)
        n = batch.n_target_tokens
        total += value * n
        tokens += n
    return total / tokens


def evaluate_loss(model: Model, batches: Sequence[Batch]) -> float:
    total = 0.0
    tokens = 0
    with no_grad():
        for batch in batches:
            n = batch.n_target_tokens
            total += batch_loss(model, batch).item() * n
            tokens += n
    return total / tokens


# ---------------------------------------------------------------------------
# early stopping
# ---------------------------------------------------------------------------
@dataclass
class EarlyStopState:
    patience: int = 5
    min_delta: float = 1e-4
    best_val_loss: float = math.inf
    best_epoch: int = 0
    epochs_since_improvement: int = 0


def early_stop_check(state: EarlyStopState, val_loss: float, epoch: int) -> tuple[str, bool]:
    """Update ``state`` with this epoch's validation loss.

    Returns ``(decision, improved)`` where decision is ``"continue"`` or ``"stop"``.
    """
    improved = val_loss < state.best_val_loss - state.min_delta
    if improved:
        state.best_val_loss = val_loss
        state.best_epoch = epoch
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
    return ("stop" if state.epochs_since_improvement >= state.patience else "continue"), improved


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
MAGIC = b"MFCKPT\x00\x01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Base class for checkpoint load failures."""


class CheckpointFormatError(CheckpointError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class UnknownParameterError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    kind: str
    config: dict
    params: dict[str, np.ndarray]
    adam: AdamState
    seed: int
    epoch: int
    meta: dict = field(default_factory=dict)

    def build_model(self) -> Model:
        model = build_model(self.kind, self.config, seed=self.seed)
        self.apply_to(model)
        return model

    def apply_to(self, model: Model) -> None:
        """Copy stored parameters into ``model``; names must match exactly."""
        target = model.parameters()
        for name, arr in self.params.items():
            if name not in target:
                raise UnknownParameterError(f"checkpoint parameter {name!r} not in model")
            if target[name].shape != arr.shape:
                raise CheckpointFormatError(f"{name}: stored shape {arr.shape} vs model {target[name].shape}")
        missing = set(target) - set(self.params)
        if missing:
            raise UnknownParameterError(f"model parameters missing from checkpoint: {sorted(missing)}")
        for name, arr in self.params.items():
            target[name].data[...] = arr


def _write_array(buf: io.BytesIO, arr: np.ndarray) -> None:
    buf.write(struct.pack("<I", arr.ndim))
    buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _write_str(buf: io.BytesIO, s: str) -> None:
    raw = s.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


def save_checkpoint(path, model: Model, adam: AdamState, epoch: int, seed: int, meta: dict | None = None) -> None:
    """Write the model, optimizer moments, seed and epoch; atomic via temp-file rename.

    Layout (little-endian): magic[8], u32 version, str header-json, u32 n_params,
    then per parameter: str name, array data; u64 adam step, then m and v arrays
    in parameter order; u64 seed; u32 epoch. ``str`` is u32 length + UTF-8,
    ``array`` is u32 ndim, u64 dims, f64 row-major data.
    """
    params = model.parameters()
    header = {
        "kind": model.kind,
        "config": asdict(model.config),
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps},
        "meta": meta or {},
    }
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    _write_str(buf, json.dumps(header, sort_keys=True))
    buf.write(struct.pack("<I", len(params)))
    for name, p in params.items():
        _write_str(buf, name)
        _write_array(buf, p.data)
    buf.write(struct.pack("<Q", adam.t))
    for name, p in params.items():
        _write_array(buf, adam.m.get(name, np.zeros_like(p.data)))
        _write_array(buf, adam.v.get(name, np.zeros_like(p.data)))
    buf.write(struct.pack("<Q", seed))
    buf.write(struct.pack("<I", epoch))
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointTruncatedError(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")

    def array(self) -> np.ndarray:
        (ndim,) = self.unpack("<I")
        shape = self.unpack(f"<{ndim}Q") if ndim else ()
        count = int(np.prod(shape)) if ndim else 1
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    r = _Reader(raw)
    if len(raw) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: not a checkpoint (bad magic bytes)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    header = json.loads(r.string())
    (n,) = r.unpack("<I")
    params = {}
    for _ in range(n):
        name = r.string()
        params[name] = r.array()
    (t,) = r.unpack("<Q")
    adam = AdamState(t=t, **header["adam"])
    for name in params:
        adam.m[name] = r.array()
        adam.v[name] = r.array()
    (seed,) = r.unpack("<Q")
    (epoch,) = r.unpack("<I")
    if r.pos != len(raw):
        raise CheckpointFormatError(f"{path}: {len(raw) - r.pos} trailing bytes")
    return Checkpoint(header["kind"], header["config"], params, adam, seed, epoch, header.get("meta", {}))


# ---------------------------------------------------------------------------
# full fit with early stopping
# ---------------------------------------------------------------------------
@dataclass
class FitResult:
    history: list[dict]
    best_epoch: int
    best_val_loss: float
    stopped_early: bool


def fit(
    model: Model,
    train_batches: Sequence[Batch],
    val_batches: Sequence[Batch],
    adam: AdamState | None = None,
    seed: int = 0,
    max_epochs: int = 50,
    patience: int = 5,
    min_delta: float = 1e-4,
    clip_norm: float | None = None,
    checkpoint_path=None,
    log: Callable[[str], None] | None = None,
    start_epoch: int = 0,
) -> FitResult:
    """Train until ``max_epochs`` or early stop, then restore the best parameters.

    Each epoch emits ``epoch=<k> train_loss=<x> val_loss=<y> seconds=<t>``.
    """
    adam = adam or AdamState()
    stopper = EarlyStopState(patience=patience, min_delta=min_delta)
    params = model.parameters()
    best = {n: p.data.copy() for n, p in params.items()}
    history = []
    stopped = False
    for epoch in range(start_epoch + 1, max_epochs + 1):
        t0 = time.perf_counter()
        train_loss = train_epoch(model, train_batches, adam, seed, epoch, clip_norm)
        val_loss = evaluate_loss(model, val_batches)
        seconds = time.perf_counter() - t0
        line = f"epoch={epoch} train_loss={train_loss:.6f} val_loss={val_loss:.6f} seconds={seconds:.3f}"
        (log or logger.info)(line)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        decision, improved = early_stop_check(stopper, val_loss, epoch)
        if improved:
            best = {n: p.data.copy() for n, p in params.items()}
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, model, adam, epoch, seed)
        if decision == "stop":
            stopped = True
            break
    for n, p in params.items():
        p.data[...] = best[n]
    return FitResult(history, stopper.best_epoch, stopper.best_val_loss, stopped)
