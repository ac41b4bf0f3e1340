"""Unrolled sequence networks: layer stacks, readout heads, losses and BPTT.

Internally everything runs time-major, ``(T, B, width)``.  Variable-length
batches are right-padded; a padded step carries the state through unchanged,
so the state after the last step equals the state after each example's last
real step.  The reverse direction of a bidirectional layer reads every example
reversed *within its own length*, which keeps the padding on the right.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cells import CellKind, CellParams, backward_raw, forward_raw, init_params, initial_aux, param_count
from .core import Rng, glorot_uniform
from .errors import DataError, ShapeError

__all__ = [
    "ForwardRecord",
    "LayerStack",
    "ReadoutHead",
    "SequenceBatch",
    "backward_sequence",
    "build_stack",
    "compute_loss",
    "forward_sequence",
    "perplexity",
    "softmax",
]

READOUT_KINDS = ("regression", "classification", "lm")
_DIRS = ("fw", "bw")


@dataclass
class ReadoutHead:
    kind: str
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.kind not in READOUT_KINDS:
            raise ValueError(f"readout kind must be one of {READOUT_KINDS}, got {self.kind!r}")
        self.W = np.ascontiguousarray(self.W, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(f"readout W {self.W.shape} and b {self.b.shape} disagree")
        if self.kind == "regression" and self.W.shape[0] != 1:
            raise ShapeError("regression readout must have exactly one output")

    @property
    def every_step(self) -> bool:
        return self.kind == "lm"

    @property
    def n_out(self) -> int:
        return self.W.shape[0]


@dataclass
class LayerStack:
    """Recurrent layers (one or two directions each) topped by a readout head."""

    layers: list[list[CellParams]]
    readout: ReadoutHead
    bidirectional: bool = False
    embedding: np.ndarray | None = None

    def __post_init__(self):
        n_dirs = 2 if self.bidirectional else 1
        if not self.layers:
            raise ShapeError("a LayerStack needs at least one layer")
        width = self.embedding.shape[1] if self.embedding is not None else self.layers[0][0].input_dim
        for i, dirs in enumerate(self.layers):
            if len(dirs) != n_dirs:
                raise ShapeError(f"layer {i}: expected {n_dirs} direction(s), got {len(dirs)}")
            for p in dirs:
                if p.input_dim != width:
                    raise ShapeError(f"layer {i}: input width {p.input_dim} but previous layer emits {width}")
                if p.hidden != dirs[0].hidden:
                    raise ShapeError(f"layer {i}: directions have different hidden sizes")
            width = dirs[0].hidden * n_dirs
        if self.readout.W.shape[1] != width:
            raise ShapeError(f"readout expects width {self.readout.W.shape[1]}, stack emits {width}")

    @property
    def n_dirs(self) -> int:
        return 2 if self.bidirectional else 1

    @property
    def uses_tokens(self) -> bool:
        return self.embedding is not None

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in a fixed order (the checkpoint manifest order)."""
        out = []
        if self.embedding is not None:
            out.append(("embedding", self.embedding))
        for i, dirs in enumerate(self.layers):
            for d, p in zip(_DIRS, dirs):
                out += [(f"layer{i}.{d}.{n}", p.arrays[n]) for n in p.names()]
        out += [("readout.W", self.readout.W), ("readout.b", self.readout.b)]
        return out

    def param_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def hidden_param_count(self) -> int:
        """Cell parameters only; embedding and readout are excluded."""
        return sum(param_count(p.kind, p.hidden, p.input_dim, p.context) for dirs in self.layers for p in dirs)

    def copy(self) -> LayerStack:
        return LayerStack([[p.copy() for p in dirs] for dirs in self.layers],
                          ReadoutHead(self.readout.kind, self.readout.W.copy(), self.readout.b.copy()),
                          self.bidirectional,
                          None if self.embedding is None else self.embedding.copy())


def build_stack(kind, input_dim: int, hidden: int, n_out: int, readout: str, *, layers: int = 1,
                bidirectional: bool = False, vocab: int | None = None, embed_dim: int | None = None,
                context: int = 0, forget_bias: float = 1.0, alpha: float = 0.95,
                rng: Rng | None = None) -> LayerStack:
    """Freshly initialised stack.  With ``vocab`` set, inputs are token ids fed
    through a ``(vocab, embed_dim)`` embedding and ``input_dim`` is ignored."""
    kind = CellKind.parse(kind)
    rng = rng if rng is not None else Rng(0)
    embedding = None
    if vocab is not None:
        embed_dim = embed_dim or hidden
        embedding = glorot_uniform(vocab, embed_dim, rng)
        input_dim = embed_dim
    n_dirs = 2 if bidirectional else 1
    stack_layers = []
    width = input_dim
    for _ in range(layers):
        stack_layers.append([init_params(kind, hidden, width, context, rng, forget_bias, alpha)
                             for _ in range(n_dirs)])
        width = hidden * n_dirs
    head = ReadoutHead(readout, glorot_uniform(n_out, width, rng), np.zeros(n_out))
    return LayerStack(stack_layers, head, bidirectional, embedding)


@dataclass
class SequenceBatch:
    """Right-padded batch.

    ``inputs`` is ``(N, T, D)`` floats or ``(N, T)`` integer token ids;
    ``targets`` is ``(N,)`` floats (regression), ``(N,)`` ints (classification)
    or ``(N, T)`` ints (next-token language modelling).
    """

    inputs: np.ndarray
    lengths: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=np.int64)
        n = len(self.lengths)
        if self.inputs.shape[0] != n or len(self.targets) != n:
            raise ShapeError(f"batch sizes differ: inputs {self.inputs.shape[0]}, lengths {n}, "
                             f"targets {len(self.targets)}")
        cap = self.inputs.shape[1] if self.inputs.ndim >= 2 else 0
        if n and (self.lengths.max(initial=0) > cap or self.lengths.min(initial=0) < 0):
            raise ShapeError(f"lengths exceed stored capacity {cap}")

    @property
    def tokens(self) -> bool:
        return self.inputs.ndim == 2

    def __len__(self) -> int:
        return len(self.lengths)

    def subset(self, idx) -> SequenceBatch:
        idx = np.asarray(idx)
        lengths = self.lengths[idx]
        T = int(lengths.max(initial=0))
        targets = self.targets[idx]
        if targets.ndim == 2:
            targets = targets[:, :T]
        return SequenceBatch(self.inputs[idx, :T], lengths, targets)

    @classmethod
    def from_sequences(cls, seqs, targets, tokens: bool = False) -> SequenceBatch:
        seqs = [np.asarray(s) for s in seqs]
        lengths = np.array([len(s) for s in seqs], dtype=np.int64)
        T = int(lengths.max(initial=0))
        if tokens:
            inputs = np.zeros((len(seqs), T), dtype=np.int64)
        else:
            d = next((s.shape[1] for s in seqs if s.ndim == 2), 1)
            inputs = np.zeros((len(seqs), T, d))
        for k, s in enumerate(seqs):
            inputs[k, :len(s)] = s if tokens or s.ndim == 2 else s.reshape(-1, 1)
        targets = np.asarray(targets)
        if targets.ndim == 1 and targets.dtype.kind == "O":
            raise ShapeError("ragged targets must be padded")
        return cls(inputs, lengths, targets)


@dataclass
class ForwardRecord:
    """Everything the backward pass needs, plus the loss."""

    traces: list[list[list[tuple]]]
    mask: np.ndarray
    rev: np.ndarray | None
    top_outputs: np.ndarray
    features: np.ndarray | None
    final_states: list[list[tuple]]
    logits: np.ndarray
    loss: float
    output_grads: np.ndarray
    token_ids: np.ndarray | None = None
    n_targets: int = 0
    kinds: list = field(default_factory=list)

    def step_trace(self, layer: int, direction: int, t: int):
        from .cells import _TRACE_FIELDS, StepTrace

        raw = self.traces[layer][direction][t]
        kind = self.kinds[layer]
        return StepTrace(kind, dict(zip(_TRACE_FIELDS[kind], raw)), self.mask[t])


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def compute_loss(head: ReadoutHead | str, outputs, targets, mask=None):
    """Mean loss and its gradient w.r.t. the readout pre-activations.

    Regression: mean squared error over examples.  Classification and
    language modelling: mean cross-entropy in nats, the latter averaged over
    the unmasked time steps.
    """
    kind = head if isinstance(head, str) else head.kind
    outputs = np.asarray(outputs, dtype=np.float64)
    if kind == "regression":
        y = outputs.reshape(len(outputs), -1)[:, 0]
        t = np.asarray(targets, dtype=np.float64).reshape(-1)
        if y.shape != t.shape:
            raise ShapeError(f"regression outputs {y.shape} vs targets {t.shape}")
        n = max(len(y), 1)
        err = y - t
        return float(np.dot(err, err) / n), (2.0 / n * err).reshape(-1, 1)
    labels = np.asarray(targets)
    k = outputs.shape[-1]
    if labels.shape != outputs.shape[:-1]:
        raise ShapeError(f"logits {outputs.shape} vs labels {labels.shape}")
    if mask is None:
        mask = np.ones(labels.shape)
    mask = np.asarray(mask, dtype=np.float64).reshape(labels.shape)
    live = mask > 0
    if labels.size and (np.any(labels[live] < 0) or np.any(labels[live] >= k)):
        bad = labels[live][(labels[live] < 0) | (labels[live] >= k)][0]
        raise DataError(f"label {bad} out of range for {k} classes")
    safe = np.where(live, labels, 0).astype(np.int64)
    logp = _log_softmax(outputs)
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    n = max(float(mask.sum()), 1.0)
    loss = float(-(picked * mask).sum() / n)
    grad = np.exp(logp)
    np.put_along_axis(grad, safe[..., None], np.take_along_axis(grad, safe[..., None], axis=-1) - 1.0, axis=-1)
    grad *= (mask / n)[..., None]
    return loss, grad


def perplexity(mean_ce: float) -> float:
    return float(np.exp(mean_ce))


def _reverse_index(lengths, T):
    t = np.arange(T)[:, None]
    L = lengths[None, :]
    return np.where(t < L, L - 1 - t, t)


def _prepare(stack: LayerStack, batch: SequenceBatch):
    B = len(batch)
    if stack.uses_tokens:
        if not batch.tokens:
            raise ShapeError("stack has an embedding but the batch holds float inputs")
        ids = np.ascontiguousarray(batch.inputs.T)
        V = stack.embedding.shape[0]
        if ids.size and (ids.min() < 0 or ids.max() >= V):
            raise DataError(f"token id outside vocabulary of size {V}")
        X = stack.embedding[ids]
    else:
        if batch.tokens:
            raise ShapeError("batch holds token ids but the stack has no embedding")
        d = stack.layers[0][0].input_dim
        if batch.inputs.shape[2] != d:
            raise ShapeError(f"input width {batch.inputs.shape[2]} but the first layer expects {d}")
        ids = None
        X = np.ascontiguousarray(batch.inputs.transpose(1, 0, 2), dtype=np.float64)
    T = X.shape[0]
    mask = (np.arange(T)[:, None] < batch.lengths[None, :]).astype(np.float64)[..., None]
    rev = _reverse_index(batch.lengths, T) if stack.bidirectional else None
    return X, ids, mask, rev, T, B


def forward_sequence(stack: LayerStack, batch: SequenceBatch, initial_states=None) -> ForwardRecord:
    """Run every layer over the batch, apply the readout and compute the loss.

    ``initial_states`` (per layer, per direction ``(h, aux)`` pairs) default to
    zeros; the returned record's ``final_states`` has the same structure.
    """
    X, ids, mask, rev, T, B = _prepare(stack, batch)
    cols = np.arange(B)[None, :]
    traces, finals = [], []
    for li, dirs in enumerate(stack.layers):
        outs, layer_tr, layer_fin = [], [], []
        for di, params in enumerate(dirs):
            Xd = X if di == 0 else X[rev, cols]
            if initial_states is not None:
                h, aux = initial_states[li][di]
            else:
                h, aux = np.zeros((B, params.hidden)), initial_aux(params, B)
            Y = np.empty((T, B, params.hidden))
            tr = []
            for t in range(T):
                h, aux, raw = forward_raw(params, h, aux, Xd[t], mask[t])
                Y[t] = h
                tr.append(raw)
            outs.append(Y if di == 0 else Y[rev, cols])
            layer_tr.append(tr)
            layer_fin.append((h, aux))
        X = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=2)
        traces.append(layer_tr)
        finals.append(layer_fin)

    head = stack.readout
    features = None
    if head.every_step:
        logits = X @ head.W.T + head.b
        targets = np.asarray(batch.targets).T
        loss, grads = compute_loss(head, logits, targets, mask[..., 0])
        n_targets = int(mask.sum())
    else:
        features = np.concatenate([h for h, _ in finals[-1]], axis=1)
        logits = features @ head.W.T + head.b
        loss, grads = compute_loss(head, logits, batch.targets)
        n_targets = B
    return ForwardRecord(traces, mask, rev, X, features, finals, logits, loss, grads, ids, n_targets,
                         [dirs[0].kind for dirs in stack.layers])


def backward_sequence(stack: LayerStack, record: ForwardRecord, batch: SequenceBatch) -> dict[str, np.ndarray]:
    """Gradients of the record's loss for every entry of ``stack.named_parameters()``."""
    T, B = record.mask.shape[:2]
    if len(batch) != B or (T and record.mask[:, :, 0].sum(axis=0).astype(np.int64).tolist()
                           != batch.lengths.tolist()):
        raise ShapeError("forward record does not belong to this batch")
    head = stack.readout
    grads = {name: np.zeros_like(arr) for name, arr in stack.named_parameters()}
    dlog = record.output_grads
    if head.every_step:
        Y = record.top_outputs
        grads["readout.W"] = dlog.reshape(-1, head.n_out).T @ Y.reshape(-1, Y.shape[2])
        grads["readout.b"] = dlog.reshape(-1, head.n_out).sum(axis=0)
        dY = dlog @ head.W
        dfinal = None
    else:
        grads["readout.W"] = dlog.T @ record.features
        grads["readout.b"] = dlog.sum(axis=0)
        dfeat = dlog @ head.W
        H = stack.layers[-1][0].hidden
        dfinal = [np.ascontiguousarray(dfeat[:, k * H:(k + 1) * H]) for k in range(stack.n_dirs)]
        dY = None

    rev, mask = record.rev, record.mask
    cols = np.arange(B)[None, :]
    for li in range(len(stack.layers) - 1, -1, -1):
        dirs = stack.layers[li]
        need_dx = li > 0 or stack.uses_tokens
        dX = None
        for di, params in enumerate(dirs):
            H = params.hidden
            dYd = None
            if dY is not None:
                dYd = dY[:, :, di * H:(di + 1) * H]
                dYd = dYd[rev, cols] if di == 1 else dYd
            dh = dfinal[di] if dfinal is not None else np.zeros((B, H))
            daux = initial_aux(params, B)
            acc = params.zeros_like()
            dXd = np.zeros((T, B, params.input_dim)) if need_dx else None
            tr = record.traces[li][di]
            for t in range(T - 1, -1, -1):
                if dYd is not None:
                    dh = dh + dYd[t]
                g, dh, daux, dx = backward_raw(params, tr[t], dh, daux, mask[t])
                for k, v in g.items():
                    acc[k] += v
                if need_dx:
                    dXd[t] = dx
            prefix = f"layer{li}.{_DIRS[di]}."
            for k, v in acc.items():
                grads[prefix + k] = v
            if need_dx:
                dXd = dXd[rev, cols] if di == 1 else dXd
                dX = dXd if dX is None else dX + dXd
        dY, dfinal = dX, None

    if stack.uses_tokens and dY is not None:
        np.add.at(grads["embedding"], record.token_ids, dY)
    return grads
