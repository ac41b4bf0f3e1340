"""Datasets: adding problem, sequential MNIST, word-level corpora, token classification."""

from __future__ import annotations

import gzip
import os
import struct
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .core import Rng
from .errors import DataError
from .network import SequenceBatch

__all__ = [
    "AddingExample",
    "Corpus",
    "LMWindows",
    "LabeledSequences",
    "MnistSet",
    "adding_batch",
    "batchify_lm",
    "gen_adding",
    "load_labeled_sequences",
    "load_mnist_idx",
    "load_token_corpus",
    "mnist_sequences",
    "write_mnist_idx",
]

EOS = "<eos>"
UNK = "<unk>"

IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


# ---------------------------------------------------------------------------
# adding problem


@dataclass
class AddingExample:
    values: np.ndarray
    masks: np.ndarray
    target: float

    def __len__(self):
        return len(self.values)


def gen_adding(n: int, len_min: int = 50, len_max: int = 55, rng: Rng | None = None) -> list[AddingExample]:
    """Adding-problem sequences.

    Values are uniform on [0, 1).  The first and last steps carry mask -1, two
    distinct interior steps carry mask +1, and the target is the sum of the two
    +1 values.
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if len_min > len_max:
        raise ValueError(f"len_min {len_min} > len_max {len_max}")
    if len_min < 4:
        raise ValueError(f"len_min must be >= 4 to fit two markers and two addends, got {len_min}")
    rng = rng if rng is not None else Rng(0)
    out = []
    for _ in range(n):
        T = rng.integers(len_min, len_max + 1)
        values = rng.random(T)
        masks = np.zeros(T)
        masks[0] = masks[-1] = -1.0
        a = rng.integers(1, T - 1)
        b = rng.integers(1, T - 2)
        if b >= a:
            b += 1
        masks[a] = masks[b] = 1.0
        out.append(AddingExample(values, masks, float(values[a] + values[b])))
    return out


def adding_batch(examples: list[AddingExample]) -> SequenceBatch:
    """Stack examples into a padded batch with 2-wide (value, mask) inputs."""
    seqs = [np.stack([ex.values, ex.masks], axis=1) for ex in examples]
    return SequenceBatch.from_sequences(seqs, np.array([ex.target for ex in examples]))


# ---------------------------------------------------------------------------
# MNIST (IDX files, optionally gzip-compressed)


@dataclass
class MnistSet:
    images: np.ndarray  # (n, rows, cols) uint8
    labels: np.ndarray  # (n,) uint8

    def __len__(self):
        return len(self.labels)

    def subset(self, start: int, stop: int | None = None) -> MnistSet:
        return MnistSet(self.images[start:stop], self.labels[start:stop])


def _read_bytes(path) -> bytes:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def _parse_idx(raw: bytes, expected_magic: int, ndim: int, path) -> np.ndarray:
    header = 4 * (1 + ndim)
    if len(raw) < header:
        raise DataError(f"{path}: truncated header ({len(raw)} bytes, need {header})")
    magic, *dims = struct.unpack(">" + "i" * (1 + ndim), raw[:header])
    if magic != expected_magic:
        raise DataError(f"{path}: bad magic {magic}, expected {expected_magic}")
    expected = int(np.prod(dims))
    actual = len(raw) - header
    if actual != expected:
        raise DataError(f"{path}: payload has {actual} bytes, expected {expected} for dims {tuple(dims)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_mnist_idx(image_path, label_path) -> MnistSet:
    images = _parse_idx(_read_bytes(image_path), IDX_IMAGE_MAGIC, 3, image_path)
    labels = _parse_idx(_read_bytes(label_path), IDX_LABEL_MAGIC, 1, label_path)
    if len(images) != len(labels):
        raise DataError(f"{len(images)} images but {len(labels)} labels")
    return MnistSet(images, labels)


def write_mnist_idx(image_path, label_path, images, labels) -> None:
    """Write an IDX image/label pair (gzip when the filename ends in .gz)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    blobs = {
        image_path: struct.pack(">iiii", IDX_IMAGE_MAGIC, *images.shape) + images.tobytes(),
        label_path: struct.pack(">ii", IDX_LABEL_MAGIC, len(labels)) + labels.tobytes(),
    }
    for path, blob in blobs.items():
        opener = gzip.open if str(path).endswith(".gz") else open
        with opener(path, "wb") as fh:
            fh.write(blob)


def mnist_sequences(data: MnistSet, mode: str = "rows") -> SequenceBatch:
    """Rows: 28 steps of 28 pixels, top to bottom.  Pixels: 784 steps of one
    pixel, row-major.  Intensities are divided by 255."""
    n, rows, cols = data.images.shape
    scaled = data.images.astype(np.float64) / 255.0
    if mode == "rows":
        inputs = scaled
    elif mode == "pixels":
        inputs = scaled.reshape(n, rows * cols, 1)
    else:
        raise ValueError(f"mode must be 'rows' or 'pixels', got {mode!r}")
    return SequenceBatch(inputs, np.full(n, inputs.shape[1]), data.labels.astype(np.int64))


# ---------------------------------------------------------------------------
# word-level corpora


@dataclass
class Corpus:
    vocab: list[str]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def size(self) -> int:
        return len(self.vocab)

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def eos_id(self) -> int:
        return self.index[EOS]

    def split(self, name: str) -> np.ndarray:
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[name]
        except KeyError:
            raise ValueError(f"unknown split {name!r}") from None

    def encode(self, tokens) -> np.ndarray:
        unk = self.unk_id
        return np.array([self.index.get(t, unk) for t in tokens], dtype=np.int64)


def _read_tokens(path) -> list[str]:
    opener = gzip.open if str(path).endswith(".gz") else open
    try:
        with opener(path, "rt", encoding="utf-8") as fh:
            lines = fh.readlines()
    except (OSError, EOFError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    tokens = []
    for line in lines:
        words = line.split()
        if words:
            tokens += words
            tokens.append(EOS)
    return tokens


def build_vocab(tokens, vocab_cap: int) -> list[str]:
    """Most frequent tokens (ties lexicographic); <eos> and <unk> always kept."""
    if vocab_cap < 2:
        raise ValueError("vocab_cap must leave room for <eos> and <unk>")
    counts = Counter(tokens)
    order = sorted(counts, key=lambda t: (-counts[t], t))
    regular = [t for t in order if t not in (EOS, UNK)][: vocab_cap - 2]
    chosen = regular + [EOS, UNK]
    return sorted(chosen, key=lambda t: (-counts.get(t, 0), t))


def load_token_corpus(train_path, valid_path, test_path, vocab_cap: int = 10000,
                      max_train_tokens: int | None = None) -> Corpus:
    """Whitespace-tokenised splits with one <eos> appended per non-empty line.

    The vocabulary comes from the (optionally truncated) training split; any
    other token maps to <unk>.
    """
    train_tokens = _read_tokens(train_path)
    if max_train_tokens is not None:
        train_tokens = train_tokens[:max_train_tokens]
    vocab = build_vocab(train_tokens, vocab_cap)
    corpus = Corpus(vocab, np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0, np.int64))
    corpus.train = corpus.encode(train_tokens)
    corpus.valid = corpus.encode(_read_tokens(valid_path))
    corpus.test = corpus.encode(_read_tokens(test_path))
    return corpus


@dataclass
class LMWindows:
    """``batch_size`` contiguous streams cut into consecutive windows.

    ``windows[k]`` is ``(inputs, targets)``, both ``(batch_size, L)`` with
    ``L <= seq_len`` (only the last window may be shorter); targets are the
    inputs shifted by one token.
    """

    streams: np.ndarray
    seq_len: int
    windows: list[tuple[np.ndarray, np.ndarray]]

    @property
    def batch_size(self) -> int:
        return self.streams.shape[0]

    @property
    def n_tokens(self) -> int:
        return sum(t.size for _, t in self.windows)

    def __len__(self):
        return len(self.windows)


def batchify_lm(ids, batch_size: int, seq_len: int) -> LMWindows:
    ids = np.asarray(ids, dtype=np.int64)
    if batch_size < 1 or seq_len < 1:
        raise ValueError("batch_size and seq_len must be >= 1")
    per_stream = len(ids) // batch_size
    if per_stream < 2:
        raise DataError(f"split of {len(ids)} tokens too short for {batch_size} streams "
                        f"(need at least {2 * batch_size})")
    streams = ids[: per_stream * batch_size].reshape(batch_size, per_stream)
    windows = []
    for start in range(0, per_stream - 1, seq_len):
        stop = min(start + seq_len, per_stream - 1)
        windows.append((streams[:, start:stop], streams[:, start + 1:stop + 1]))
    return LMWindows(streams, seq_len, windows)


# ---------------------------------------------------------------------------
# token-sequence classification


@dataclass
class LabeledSequences:
    examples: list[tuple[np.ndarray, int]]
    max_len: int

    def __len__(self):
        return len(self.examples)

    @property
    def max_token(self) -> int:
        return max((int(s.max()) for s, _ in self.examples if len(s)), default=-1)

    def to_batch(self) -> SequenceBatch:
        return SequenceBatch.from_sequences([s for s, _ in self.examples],
                                            np.array([y for _, y in self.examples], dtype=np.int64),
                                            tokens=True)


def load_labeled_sequences(path, max_len: int) -> LabeledSequences:
    """One example per line: ``label<TAB>id id id ...``; long lines are cut to max_len."""
    if not os.path.exists(path):
        raise DataError(f"cannot read {path}: no such file")
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            label, sep, body = line.partition("\t")
            try:
                if not sep:
                    raise ValueError("missing tab separator")
                y = int(label)
                ids = np.array([int(tok) for tok in body.split()], dtype=np.int64)
                if y < 0 or (ids.size and ids.min() < 0):
                    raise ValueError("negative label or token id")
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed line ({exc})") from None
            examples.append((ids[:max_len], y))
    return LabeledSequences(examples, max_len)
