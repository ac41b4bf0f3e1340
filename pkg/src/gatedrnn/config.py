"""Experiment configuration: flat ``key = value`` text files.

One pair per line; ``#`` starts a comment.  Every key has a default (see
``ExperimentConfig``), so a file only needs the keys it changes.  Relative data
paths are joined to ``data_dir``, which itself resolves against the working
directory.
"""

from __future__ import annotations

import dataclasses
import os
from importlib import resources
from dataclasses import dataclass, field, fields

from .cells import CellKind
from .errors import ConfigError
from .trainer import TrainConfig

TASKS = ("adding", "mnist-rows", "mnist-pixels", "lm", "seqclass")
READOUT_FOR_TASK = {"adding": "regression", "mnist-rows": "classification", "mnist-pixels": "classification",
                    "lm": "lm", "seqclass": "classification"}
METRIC_FOR_TASK = {"adding": "mse", "mnist-rows": "accuracy", "mnist-pixels": "accuracy", "lm": "perplexity",
                   "seqclass": "accuracy"}


@dataclass
class ExperimentConfig:
    # architecture
    task: str = "adding"
    cell: str = "mgu"
    hidden: int = 100
    layers: int = 1
    bidirectional: bool = False
    context: int = 0             # SCRN context width (0 -> hidden // 2 for scrn)
    alpha: float = 0.95          # SCRN context decay
    forget_bias: float = 1.0
    embed_dim: int = 0           # token tasks; 0 -> hidden
    # optimisation (mirrors TrainConfig)
    learning_rate: float = 1e-3
    momentum: float = 0.0
    batch_size: int = 100
    epochs: int = 1
    clip_norm: float | None = None
    seq_len: int = 35
    seed: int = 0
    eval_every: int = 1
    workers: int = 1
    # data
    data_dir: str = "."
    train_data: str = ""
    train_labels: str = ""       # mnist only
    eval_data: str = ""
    eval_labels: str = ""        # mnist only
    n_train: int = 0             # adding: examples generated; mnist: leading subset (0 = all)
    n_test: int = 0
    len_min: int = 50            # adding problem lengths
    len_max: int = 55
    vocab_cap: int = 10000       # lm
    max_train_tokens: int = 0    # lm: 0 = whole split
    max_len: int = 400           # seqclass truncation
    n_classes: int = 0           # seqclass: 0 -> inferred from labels
    # output
    output_dir: str = "runs/out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {', '.join(TASKS)}, got {self.task!r}")
        try:
            self.cell = CellKind.parse(self.cell).value
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("hidden", "layers", "len_min", "len_max", "vocab_cap", "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("context", "embed_dim", "n_train", "n_test", "max_train_tokens", "n_classes"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.context and self.cell != CellKind.SCRN.value:
            raise ConfigError("context is only meaningful for scrn")
        self.train_config()  # range checks on the optimiser fields

    # ------------------------------------------------------------------
    @property
    def readout(self) -> str:
        return READOUT_FOR_TASK[self.task]

    @property
    def metric(self) -> str:
        return METRIC_FOR_TASK[self.task]

    @property
    def scrn_context(self) -> int:
        if self.cell != CellKind.SCRN.value:
            return 0
        return self.context or max(1, self.hidden // 2)

    def train_config(self) -> TrainConfig:
        names = [f.name for f in fields(TrainConfig)]
        return TrainConfig(**{n: getattr(self, n) for n in names})

    def path(self, key: str) -> str:
        """Data path for ``key`` joined to ``data_dir`` (absolute paths pass through)."""
        value = getattr(self, key)
        if not value:
            raise ConfigError(f"task {self.task} needs {key}")
        return os.path.join(self.data_dir, value)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key: str, text: str):
    kind = _FIELDS[key].type
    try:
        if kind == "bool":
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
        if kind == "float | None":
            return None if text.lower() in ("", "none", "off") else float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {text!r} (expected {kind})") from None
    return text


def parse_pairs(lines, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {raw.strip()!r}")
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _convert(key, value)
    return out


def parse_config(text: str, overrides=(), source: str = "<config>") -> ExperimentConfig:
    """Parse config text, then apply ``key=value`` override strings on top."""
    values = parse_pairs(text.splitlines(), source)
    values.update(parse_pairs(overrides, "--set"))
    return ExperimentConfig(**values)


def preset_names() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("gatedrnn").joinpath("presets").iterdir()
                  if p.name.endswith(".cfg"))


def preset_path(name: str):
    return resources.files("gatedrnn").joinpath("presets", f"{name}.cfg")


def load_config(path, overrides=()) -> ExperimentConfig:
    """Read a config file; a bare preset name (``adding-desk``) is looked up
    among the packaged presets when no such file exists."""
    if not os.path.exists(path) and str(path) in preset_names():
        path = preset_path(str(path))
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides, str(path))


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Every key, in declaration order; ``parse_config`` inverts it exactly."""
    return "".join(f"{f.name} = {_format(getattr(cfg, f.name))}\n" for f in fields(cfg))
