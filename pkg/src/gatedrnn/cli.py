"""Command-line front end: ``gatedrnn train|eval|gradcheck|params``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error (missing
or malformed files, checkpoint mismatch), 3 numerical failure (non-finite
gradients, or a gradient check above tolerance).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import dataclass
from fractions import Fraction

from . import __version__
from ._jit import backend
from .cells import CellKind, madd_count, param_count
from .checkpoint import load_into, save_checkpoint
from .config import ExperimentConfig, load_config, serialize_config
from .core import Rng
from .errors import ConfigError, DataError, NumericalError, ShapeError
from .network import LayerStack, SequenceBatch, build_stack
from .tasks import (LMWindows, adding_batch, batchify_lm, gen_adding, load_labeled_sequences, load_mnist_idx,
                    load_token_corpus, mnist_sequences)
from .trainer import OptState, evaluate, gradcheck, train_epoch, train_lm_epoch

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3
CSV_COLUMNS = ("epoch", "train_loss", "eval_metric", "wall_seconds")
GRADCHECK_TOL = 1e-6
GRADCHECK_MAX_DIM = 8

ADDING_DEFAULT_SIZES = (2000, 500)


@dataclass
class TaskData:
    train: SequenceBatch | LMWindows
    eval: SequenceBatch | LMWindows
    input_dim: int
    n_out: int
    vocab: int | None = None


def _mnist_split(cfg, images_key, labels_key, limit):
    data = load_mnist_idx(cfg.path(images_key), cfg.path(labels_key))
    if limit:
        data = data.subset(0, limit)
    return mnist_sequences(data, "rows" if cfg.task == "mnist-rows" else "pixels")


def load_task_data(cfg: ExperimentConfig) -> TaskData:
    """Materialise the training and evaluation sets a config describes."""
    if cfg.task == "adding":
        n_train = cfg.n_train or ADDING_DEFAULT_SIZES[0]
        n_test = cfg.n_test or ADDING_DEFAULT_SIZES[1]
        if cfg.len_min > cfg.len_max:
            raise ConfigError(f"len_min {cfg.len_min} > len_max {cfg.len_max}")
        train = gen_adding(n_train, cfg.len_min, cfg.len_max, Rng.for_stream(cfg.seed, "adding/train"))
        test = gen_adding(n_test, cfg.len_min, cfg.len_max, Rng.for_stream(cfg.seed, "adding/test"))
        return TaskData(adding_batch(train), adding_batch(test), 2, 1)
    if cfg.task in ("mnist-rows", "mnist-pixels"):
        train = _mnist_split(cfg, "train_data", "train_labels", cfg.n_train)
        test = _mnist_split(cfg, "eval_data", "eval_labels", cfg.n_test)
        return TaskData(train, test, train.inputs.shape[2], 10)
    if cfg.task == "lm":
        eval_path = cfg.path("eval_data")
        corpus = load_token_corpus(cfg.path("train_data"), eval_path, eval_path, cfg.vocab_cap,
                                   cfg.max_train_tokens or None)
        train = batchify_lm(corpus.train, cfg.batch_size, cfg.seq_len)
        valid = batchify_lm(corpus.valid, cfg.batch_size, cfg.seq_len)
        return TaskData(train, valid, cfg.embed_dim or cfg.hidden, corpus.size, corpus.size)
    # seqclass
    train = load_labeled_sequences(cfg.path("train_data"), cfg.max_len)
    test = load_labeled_sequences(cfg.path("eval_data"), cfg.max_len)
    if len(train) == 0 or len(test) == 0:
        raise DataError("seqclass needs non-empty train and eval files")
    vocab = max(train.max_token, test.max_token) + 1
    labels = [y for _, y in train.examples + test.examples]
    n_classes = cfg.n_classes or max(labels) + 1
    if max(labels) >= n_classes:
        raise DataError(f"label {max(labels)} out of range for n_classes={n_classes}")
    return TaskData(train.to_batch(), test.to_batch(), cfg.embed_dim or cfg.hidden, n_classes, max(vocab, 1))


def build_model(cfg: ExperimentConfig, data: TaskData) -> LayerStack:
    return build_stack(cfg.cell, data.input_dim, cfg.hidden, data.n_out, cfg.readout, layers=cfg.layers,
                       bidirectional=cfg.bidirectional, vocab=data.vocab,
                       embed_dim=(cfg.embed_dim or cfg.hidden) if data.vocab else None,
                       context=cfg.scrn_context, forget_bias=cfg.forget_bias, alpha=cfg.alpha,
                       rng=Rng.for_stream(cfg.seed, "init"))


def stack_madds(stack: LayerStack) -> int:
    return sum(madd_count(p.kind, p.hidden, p.input_dim, p.context) for dirs in stack.layers for p in dirs)


def _csv_row(row) -> list[str]:
    return [str(row.epoch), repr(float(row.train_loss)), repr(float(row.eval_metric)), f"{row.wall_seconds:.6f}"]


def run_training(cfg: ExperimentConfig, out=None) -> LayerStack:
    """Train as configured, writing ``metrics.csv`` and ``checkpoint.gbn`` to ``cfg.output_dir``."""
    data = load_task_data(cfg)
    stack = build_model(cfg, data)
    tcfg = cfg.train_config()
    print(f"param_count = {stack.hidden_param_count()}", file=out)
    print(f"madd_count = {stack_madds(stack)}", file=out)
    print(f"backend = {backend()}", file=out, flush=True)
    os.makedirs(cfg.output_dir, exist_ok=True)
    opt = OptState.zeros(stack)
    with open(os.path.join(cfg.output_dir, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        fh.flush()
        for epoch in range(1, cfg.epochs + 1):
            do_eval = epoch % cfg.eval_every == 0 or epoch == cfg.epochs
            eval_data = data.eval if do_eval else None
            if cfg.task == "lm":
                row = train_lm_epoch(stack, data.train, tcfg, opt, epoch, eval_data)
            else:
                row = train_epoch(stack, data.train, tcfg, opt, epoch, eval_data, cfg.metric)
            if do_eval:
                writer.writerow(_csv_row(row))
                fh.flush()
                print(f"epoch {epoch}: train_loss = {row.train_loss:.6g}  {cfg.metric} = {row.eval_metric:.6g}  "
                      f"({row.wall_seconds:.2f}s)", file=out, flush=True)
    save_checkpoint(os.path.join(cfg.output_dir, "checkpoint.gbn"), stack.named_parameters(),
                    serialize_config(cfg))
    return stack


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    run_training(cfg)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    data = load_task_data(cfg)
    stack = build_model(cfg, data)
    load_into(stack, args.checkpoint)
    value = evaluate(stack, data.eval, cfg.metric, workers=cfg.workers)
    print(f"{cfg.metric} = {value!r}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    for name in ("hidden", "input_dim", "T"):
        v = getattr(args, name)
        if not 1 <= v <= GRADCHECK_MAX_DIM:
            raise ConfigError(f"{name} must lie in [1, {GRADCHECK_MAX_DIM}], got {v}")
    err = gradcheck(args.cell, args.hidden, args.input_dim, args.T, args.seed, layers=args.layers,
                    bidirectional=args.bidirectional, task=args.task, precision=args.precision)
    ok = err < GRADCHECK_TOL
    print(f"max_relative_error = {err:.6e}")
    print("PASS" if ok else f"FAIL (tolerance {GRADCHECK_TOL:g})")
    return EXIT_OK if ok else EXIT_NUMERICAL


def _stack_counts(kind, h, d, p, layers, bidirectional):
    """``[(label, input_width, params, madds)]`` per cell, embedding and readout excluded."""
    n_dirs = 2 if bidirectional else 1
    rows, width = [], d
    for i in range(layers):
        for name in ("fw", "bw")[:n_dirs]:
            rows.append((f"layer{i}.{name}", width, param_count(kind, h, width, p), madd_count(kind, h, width, p)))
        width = h * n_dirs
    return rows


def cmd_params(args) -> int:
    kind = CellKind.parse(args.cell)
    if min(args.hidden, args.input_dim, args.layers) < 1 or args.context < 0:
        raise ConfigError("hidden, input_dim and layers must be >= 1, context >= 0")
    p = args.context or (max(1, args.hidden // 2) if kind is CellKind.SCRN else 0)
    rows = _stack_counts(kind, args.hidden, args.input_dim, p, args.layers, args.bidirectional)
    for label, width, n, m in rows:
        print(f"{label}: {kind.value} h={args.hidden} d={width} params = {n} madds = {m}")
    print(f"total params = {sum(r[2] for r in rows)}")
    print(f"total madds = {sum(r[3] for r in rows)}")

    def total(k):
        return sum(r[2] for r in _stack_counts(k, args.hidden, args.input_dim, 0, args.layers, args.bidirectional))

    mgu = total(CellKind.MGU)
    print(f"MGU:GRU params = {Fraction(mgu, total(CellKind.GRU))}")
    print(f"MGU:LSTM params = {Fraction(mgu, total(CellKind.LSTM))}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _config_from_args(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    if getattr(args, "output_dir", None):
        overrides.append(f"output_dir={args.output_dir}")
    return load_config(args.config, overrides)


def _add_config_args(p):
    p.add_argument("config", help="experiment config file (key = value lines)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
    p.add_argument("--workers", type=int, help="evaluation worker threads")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gatedrnn", description="Train and inspect minimal gated unit recurrent networks.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from a config file")
    _add_config_args(p)
    p.add_argument("--output-dir", help="override output_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the config's evaluation split")
    p.add_argument("checkpoint")
    _add_config_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare BPTT gradients with central differences")
    p.add_argument("--cell", default="mgu")
    p.add_argument("--hidden", "-H", type=int, default=4)
    p.add_argument("--input-dim", "-d", type=int, default=3)
    p.add_argument("--T", "-T", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--bidirectional", action="store_true")
    p.add_argument("--task", choices=("regression", "classification", "lm"), default="regression")
    p.add_argument("--precision", choices=("extended", "float64"), default="extended",
                   help="arithmetic of the finite-difference loss evaluations")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", help="print parameter and multiply-add counts")
    p.add_argument("--cell", default="mgu")
    p.add_argument("--hidden", "-H", type=int, default=100)
    p.add_argument("--input-dim", "-d", type=int, default=28)
    p.add_argument("--context", "-p", type=int, default=0, help="SCRN context width (0: hidden // 2)")
    p.add_argument("--layers", type=int, default=1)
    p.add_argument("--bidirectional", action="store_true")
    p.set_defaults(func=cmd_params)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
