"""Run configuration: a flat ``key = value`` file with typed parsing.

Unknown keys are errors; a mistyped hyperparameter name should never be
silently ignored.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigurationError

BACKEND_ENV = "TYPED_NER_BACKEND"

# type-matching thresholds per dataset family
DATASET_DELTAS = {"conll2003": 0.8, "jnlpba": 0.7, "ontonotes5": 0.6, "ace2004": 0.6, "ace2005": 0.6}

_DEFAULT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass
class RunConfig:
    # data
    schema: str = ""
    train: str = ""
    dev: str = ""
    test: str = ""
    column_index: int = -1
    strict_bio: bool = False
    exp_records: str = ""
    out_dir: str = "ner_out"

    # objectives and matching
    lambda_: float = 0.1
    tau: float = 0.05
    delta: float = 0.8
    dataset: str = ""
    standard_sign: bool = False
    pooling_scope: str = "full"
    cls_on_type_recognition: bool = False

    # sample construction
    aux_fraction: float = 0.2
    seed: int = 0

    # backends
    backend: str = "mock"
    encoder_backend: str = "mock"
    encoder_dim: int = 32
    generator_dim: int = 8
    generator_buckets: int = 16
    hallucinate: bool = False
    strict_echo: bool = False
    max_length: int = 512
    decoding: str = "greedy"
    # recorded for real backends; the mocks take fixed-size descent steps
    optimizer: str = "adamw"
    learning_rate: float = 3e-5
    matcher_learning_rate: float = 8e-6
    matcher_weight_decay: float = 1e-3
    mock_step_size: float = 0.5

    # loops
    matcher_epochs: int = 1
    matcher_batch_size: int = 16
    train_steps: int = 100
    train_batch_size: int = 8
    homogeneous_batches: bool = False
    resume: bool = False

    # evaluation
    dedupe: str = "multiset"
    grid: tuple = _DEFAULT_GRID
    calibration_grid: tuple = _DEFAULT_GRID

    base_dir: str = field(default=".", repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.lambda_ < 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lambda_}")
        if not self.tau > 0:
            raise ConfigurationError(f"tau must be > 0, got {self.tau}")
        if not -1.0 <= self.delta <= 1.0:
            raise ConfigurationError(f"delta must lie in [-1, 1], got {self.delta}")
        if self.max_length < 1:
            raise ConfigurationError("max_length must be >= 1")
        if not 0.0 < self.aux_fraction <= 1.0:
            raise ConfigurationError("aux_fraction must lie in (0, 1]")
        if self.dedupe not in ("multiset", "set"):
            raise ConfigurationError(f"dedupe must be 'multiset' or 'set', got {self.dedupe!r}")
        if self.pooling_scope not in ("full", "sentence_only"):
            raise ConfigurationError(f"unknown pooling_scope {self.pooling_scope!r}")
        if self.decoding != "greedy":
            raise ConfigurationError("only greedy decoding is supported")
        if self.dataset and self.dataset not in DATASET_DELTAS:
            raise ConfigurationError(f"unknown dataset {self.dataset!r}")
        for d in tuple(self.grid) + tuple(self.calibration_grid):
            if not -1.0 <= d <= 1.0:
                raise ConfigurationError(f"grid value {d} outside [-1, 1]")
        if self.train_steps < 0 or self.matcher_epochs < 0:
            raise ConfigurationError("step and epoch counts must be >= 0")
        if self.train_batch_size < 1 or self.matcher_batch_size < 1:
            raise ConfigurationError("batch sizes must be >= 1")

    def path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @property
    def out(self) -> Path:
        return self.path(self.out_dir)

    def split_path(self, split: str) -> Path | None:
        value = getattr(self, split, "")
        return self.path(value) if value else None

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data.pop("base_dir")
        data["lambda"] = data.pop("lambda_")
        data["grid"] = list(self.grid)
        data["calibration_grid"] = list(self.calibration_grid)
        return data

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig) if f.name != "base_dir"}
_KEY_ALIASES = {"lambda": "lambda_"}


def _coerce(name: str, raw: str):
    default = _FIELDS[name].default
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(float(x) for x in raw.strip("[]").split(",") if x.strip())
        return raw.strip('"').strip("'")
    except ValueError:
        raise ConfigurationError(f"cannot parse {name} = {raw!r}") from None


def parse_config_text(text: str, base_dir: str | Path = ".") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    values = {}
    for key, raw in parser.items("run"):
        name = _KEY_ALIASES.get(key, key)
        if name not in _FIELDS or key == "lambda_":
            raise ConfigurationError(f"unknown config key {key!r}")
        values[name] = _coerce(name, raw)
    if "dataset" in values and "delta" not in values and values["dataset"] in DATASET_DELTAS:
        values["delta"] = DATASET_DELTAS[values["dataset"]]
    return RunConfig(base_dir=str(base_dir), **values)


def load_config(path: str | Path, environ=None) -> RunConfig:
    environ = os.environ if environ is None else environ
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    config = parse_config_text(text, path.parent)
    if environ.get(BACKEND_ENV):
        config.backend = environ[BACKEND_ENV]
    return config
