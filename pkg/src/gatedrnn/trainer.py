"""SGD with momentum, epoch loops (plain and truncated-BPTT), evaluation and gradcheck."""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cells import CellKind
from .core import Rng
from .errors import ConfigError, NumericalError
from .network import LayerStack, SequenceBatch, backward_sequence, build_stack, forward_sequence
from .reference import reference_loss
from .tasks import LMWindows

__all__ = [
    "MetricsRow",
    "OptState",
    "TrainConfig",
    "central_difference",
    "evaluate",
    "gradcheck",
    "relative_error",
    "sgd_momentum_step",
    "train_epoch",
    "train_lm_epoch",
]


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    momentum: float = 0.0
    batch_size: int = 100
    epochs: int = 1
    clip_norm: float | None = None
    seq_len: int = 35
    seed: int = 0
    eval_every: int = 1
    workers: int = 1

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.seq_len < 1:
            raise ConfigError("batch_size and seq_len must be >= 1")
        if self.epochs < 0 or self.eval_every < 1 or self.workers < 1:
            raise ConfigError("epochs must be >= 0, eval_every and workers >= 1")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be > 0 when set, got {self.clip_norm}")


@dataclass
class OptState:
    velocity: dict[str, np.ndarray]

    @classmethod
    def zeros(cls, params) -> OptState:
        params = params.param_dict() if isinstance(params, LayerStack) else params
        return cls({k: np.zeros_like(v) for k, v in params.items()})


@dataclass
class MetricsRow:
    epoch: int
    train_loss: float
    eval_metric: float
    wall_seconds: float


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads.values()))


def sgd_momentum_step(params, grads: dict[str, np.ndarray], opt: OptState, cfg: TrainConfig) -> float:
    """In-place update ``v <- momentum*v - lr*g; p <- p + v``.

    With ``cfg.clip_norm`` set, gradients whose global norm exceeds it are
    rescaled to that norm first.  Returns the (unclipped) global norm.
    """
    params = params.param_dict() if isinstance(params, LayerStack) else params
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in parameter {name}")
    norm = global_norm(grads)
    scale = 1.0
    if cfg.clip_norm is not None and norm > cfg.clip_norm:
        scale = cfg.clip_norm / norm
    lr = cfg.learning_rate * scale
    for name, p in params.items():
        v = opt.velocity[name]
        v *= cfg.momentum
        v -= lr * grads[name]
        p += v
    return norm


def _timed_eval(stack, eval_data, metric, workers):
    if eval_data is None:
        return float("nan")
    return evaluate(stack, eval_data, metric, workers=workers)


def train_epoch(stack: LayerStack, data: SequenceBatch, cfg: TrainConfig, opt: OptState, epoch: int = 1,
                eval_data=None, metric: str | None = None) -> MetricsRow:
    """One shuffled pass over ``data`` in mini-batches of ``cfg.batch_size``.

    The shuffle order is a pure function of ``(cfg.seed, epoch)``.
    """
    if len(data) == 0:
        raise ValueError("train_epoch needs a non-empty dataset")
    t0 = time.perf_counter()
    params = stack.param_dict()
    order = Rng.for_stream(cfg.seed, f"shuffle/{epoch}").permutation(len(data))
    total = 0.0
    for start in range(0, len(data), cfg.batch_size):
        batch = data.subset(order[start:start + cfg.batch_size])
        rec = forward_sequence(stack, batch)
        grads = backward_sequence(stack, rec, batch)
        sgd_momentum_step(params, grads, opt, cfg)
        total += rec.loss * len(batch)
    metric_value = _timed_eval(stack, eval_data, metric, cfg.workers)
    return MetricsRow(epoch, total / len(data), metric_value, time.perf_counter() - t0)


def _detach(states):
    return [[(h.copy(), None if aux is None else aux.copy()) for h, aux in layer] for layer in states]


def _lm_batch(inputs, targets) -> SequenceBatch:
    B, L = inputs.shape
    return SequenceBatch(np.ascontiguousarray(inputs), np.full(B, L), np.ascontiguousarray(targets))


def train_lm_epoch(stack: LayerStack, windows: LMWindows, cfg: TrainConfig, opt: OptState, epoch: int = 1,
                   eval_data=None) -> MetricsRow:
    """Truncated BPTT: states start at zero and the final state of each window
    seeds the next one, with no gradient flowing across the boundary."""
    t0 = time.perf_counter()
    params = stack.param_dict()
    states = None
    total_ce, n_tok = 0.0, 0
    for inputs, targets in windows.windows:
        batch = _lm_batch(inputs, targets)
        rec = forward_sequence(stack, batch, states)
        grads = backward_sequence(stack, rec, batch)
        sgd_momentum_step(params, grads, opt, cfg)
        states = _detach(rec.final_states)
        total_ce += rec.loss * rec.n_targets
        n_tok += rec.n_targets
    metric_value = _timed_eval(stack, eval_data, "perplexity", cfg.workers)
    return MetricsRow(epoch, total_ce / max(n_tok, 1), metric_value, time.perf_counter() - t0)


def lm_cross_entropy(stack: LayerStack, windows: LMWindows) -> float:
    """Token-weighted mean cross-entropy (nats) with state carried across windows."""
    states = None
    total, n = 0.0, 0
    for inputs, targets in windows.windows:
        rec = forward_sequence(stack, _lm_batch(inputs, targets), states)
        states = rec.final_states
        total += rec.loss * rec.n_targets
        n += rec.n_targets
    return total / max(n, 1)


def _eval_chunk(stack, chunk, metric):
    rec = forward_sequence(stack, chunk)
    if metric == "mse":
        err = rec.logits[:, 0] - chunk.targets
        return float(np.dot(err, err))
    if metric == "accuracy":
        return float(np.sum(np.argmax(rec.logits, axis=1) == chunk.targets))
    return rec.loss * rec.n_targets


def evaluate(stack: LayerStack, data, metric: str, batch_size: int = 500, workers: int = 1) -> float:
    """``mse``, ``accuracy``, ``ce`` or ``perplexity`` of the stack on ``data``.

    ``data`` is a :class:`SequenceBatch` or, for language models, an
    :class:`LMWindows` stream (evaluated with state carry).  Argmax ties go to
    the lowest class index.  Parameters are never modified.
    """
    if isinstance(data, LMWindows):
        ce = lm_cross_entropy(stack, data)
        return math.exp(ce) if metric == "perplexity" else ce
    n = len(data)
    if n == 0:
        raise ValueError("evaluate needs a non-empty dataset")
    if metric not in ("mse", "accuracy", "ce", "perplexity"):
        raise ValueError(f"unknown metric {metric!r}")
    chunks = [data.subset(np.arange(s, min(s + batch_size, n))) for s in range(0, n, batch_size)]
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda c: _eval_chunk(stack, c, metric), chunks))
    else:
        parts = [_eval_chunk(stack, c, metric) for c in chunks]
    total = math.fsum(parts)
    if metric in ("mse", "accuracy"):
        return total / n
    denom = n if stack.readout.kind != "lm" else int(data.lengths.sum())
    ce = total / max(denom, 1)
    return math.exp(ce) if metric == "perplexity" else ce


# ---------------------------------------------------------------------------
# finite differences


def relative_error(analytic, numeric, floor: float = 1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def central_difference(loss_fn, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Numerical gradient of ``loss_fn()`` w.r.t. ``arr``, perturbed in place."""
    out = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), out.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = loss_fn()
        flat[k] = orig - step
        down = loss_fn()
        flat[k] = orig
        gflat[k] = (up - down) / (2.0 * step)
    return out


_TASK_READOUT = {"regression": "regression", "classification": "classification", "lm": "lm"}


def gradcheck(kind, hidden: int = 4, input_dim: int = 3, T: int = 5, seed: int = 0, fd_step: float = 1e-5, *,
              layers: int = 1, bidirectional: bool = False, task: str = "regression", batch: int = 2,
              vocab: int = 7, n_classes: int = 3, context: int | None = None, zero_params: bool = False, param_scale: float = 1.0,
              precision: str = "extended", return_details: bool = False):
    """Max relative error between BPTT gradients and central differences.

    Builds a small random network of the given cell ``kind`` (a regression,
    classification or language-model head), feeds it a batch whose examples
    have lengths T, T-1, ... (at least 1) so padding is exercised, and compares
    every parameter coordinate using ``|a - n| / max(|a|, |n|, 1e-8)``.

    With ``precision="extended"`` (default) the numerical side perturbs a
    ``np.longdouble`` copy of the parameters and evaluates the loss with the
    independent evaluator in :mod:`gatedrnn.reference`.  ``"float64"`` instead
    reruns the production forward pass; there the loss roundoff (~1 ulp)
    divided by ``2 * fd_step`` swamps coordinates with gradients below ~1e-5.
    """
    if precision not in ("extended", "float64"):
        raise ValueError(f"precision must be 'extended' or 'float64', got {precision!r}")
    kind = CellKind.parse(kind)
    if task not in _TASK_READOUT:
        raise ValueError(f"task must be one of {sorted(_TASK_READOUT)}")
    rng = Rng.for_stream(seed, "gradcheck")
    if context is None:
        context = max(1, hidden // 2) if kind is CellKind.SCRN else 0
    n_out = {"regression": 1, "classification": n_classes, "lm": vocab}[task]
    stack = build_stack(kind, input_dim, hidden, n_out, _TASK_READOUT[task], layers=layers,
                        bidirectional=bidirectional, vocab=vocab if task == "lm" else None,
                        embed_dim=input_dim if task == "lm" else None, context=context, rng=rng)
    for _, arr in stack.named_parameters():
        arr[...] = 0.0 if zero_params else rng.uniform(-param_scale, param_scale, arr.shape)

    lengths = np.maximum(T - np.arange(batch), 1) if T > 0 else np.zeros(batch, dtype=np.int64)
    if task == "lm":
        inputs = np.array([[rng.integers(vocab) for _ in range(T)] for _ in range(batch)], dtype=np.int64)
        targets = np.array([[rng.integers(vocab) for _ in range(T)] for _ in range(batch)], dtype=np.int64)
        lengths = np.full(batch, T)
    else:
        inputs = rng.uniform(-1.0, 1.0, (batch, T, input_dim))
        for k, L in enumerate(lengths):
            inputs[k, L:] = 0.0
        if task == "regression":
            targets = np.zeros(batch) if zero_params else rng.uniform(-1.0, 1.0, batch)
        else:
            targets = np.array([rng.integers(n_classes) for _ in range(batch)], dtype=np.int64)
    data = SequenceBatch(inputs, lengths, targets)

    rec = forward_sequence(stack, data)
    grads = backward_sequence(stack, rec, data)

    if precision == "extended":
        theta = {name: arr.astype(np.longdouble) for name, arr in stack.named_parameters()}

        def loss():
            return reference_loss(stack, theta, data, np.longdouble)
    else:
        theta = stack.param_dict()

        def loss():
            return forward_sequence(stack, data).loss

    worst, details = 0.0, {}
    for name in stack.param_dict():
        numeric = central_difference(loss, theta[name], fd_step)
        err = float(relative_error(grads[name], numeric).max(initial=0.0))
        details[name] = err
        worst = max(worst, err)
    return (worst, details) if return_details else worst
