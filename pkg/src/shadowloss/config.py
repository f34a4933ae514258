"""Run configuration: flat ``key = value`` files, env overrides, derived seeds.

Precedence, lowest to highest: defaults, config file, ``SHADOWLOSS_<KEY>``
environment variables, command-line flags.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data import (
    BatchPlan,
    BlobSpec,
    Dataset,
    default_plan,
    load_csv,
    load_idx,
    make_blobs,
    split,
    stratified_subset,
)
from .errors import ConfigurationError, DataIOError
from .losses import LOSS_KINDS, MarginConfig
from .numerics import RandomSource

ENV_PREFIX = "SHADOWLOSS_"


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "blobs"  # blobs | idx | csv
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    csv_path: str = ""
    csv_test_path: str = ""
    label_column: str = "label"

    blob_classes: int = 3
    blob_dim: int = 16
    blob_samples_per_class: int = 150
    blob_center_scale: float = 0.03
    blob_stddev: float = 0.0195
    blob_class_counts: str = ""  # comma list, overrides samples_per_class

    test_fraction: float = 1 / 3
    max_train: int = 5000
    max_test: int = 1000

    batch_size: int = 32
    classes_per_batch: int = 0  # 0 = derive from the class count
    samples_per_class: int = 0

    loss: str = "shadow"
    margin: float = 1.0
    epsilon: float = 1e-12
    mining: str = "semi_hard"  # semi_hard | hard
    mining_metric: str = "squared_euclidean"  # squared_euclidean | projection

    lr: float = 1e-4
    lr_step: int = 20
    lr_gamma: float = 0.1
    epochs: int = 50
    seed: int = 0

    hidden: str = "128,64"
    embedding_dim: int = 32
    knn_k: int = 1
    threshold: float = 0.9
    out: str = "runs"

    @property
    def margin_config(self) -> MarginConfig:
        return MarginConfig(self.margin, self.epsilon)

    @property
    def hidden_dims(self) -> tuple[int, ...]:
        return tuple(int(x) for x in self.hidden.split(",") if x.strip())

    def batch_plan(self, n_classes: int) -> BatchPlan:
        if self.classes_per_batch or self.samples_per_class:
            if not (self.classes_per_batch and self.samples_per_class):
                raise ConfigurationError("set both classes_per_batch and samples_per_class, or neither")
            return BatchPlan(self.classes_per_batch, self.samples_per_class)
        return default_plan(n_classes, self.batch_size)

    def blob_spec(self) -> BlobSpec:
        counts = tuple(int(x) for x in self.blob_class_counts.split(",") if x.strip()) or None
        return BlobSpec(self.blob_classes, self.blob_dim, self.blob_samples_per_class,
                        self.blob_center_scale, self.blob_stddev, sub_seed(self.seed, "data"), counts)

    def validate(self) -> "TrainConfig":
        if self.dataset not in ("blobs", "idx", "csv"):
            raise ConfigurationError(f"dataset must be blobs, idx or csv, got {self.dataset!r}")
        if self.loss not in LOSS_KINDS:
            raise ConfigurationError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")
        if self.mining not in ("semi_hard", "hard"):
            raise ConfigurationError(f"mining must be semi_hard or hard, got {self.mining!r}")
        if self.mining_metric not in ("squared_euclidean", "projection"):
            raise ConfigurationError(f"unknown mining_metric {self.mining_metric!r}")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.seed < 0:
            raise ConfigurationError("seed must be a non-negative integer")
        if self.knn_k < 1:
            raise ConfigurationError("knn_k must be >= 1")
        if self.lr <= 0 or self.lr_step < 1 or self.lr_gamma <= 0:
            raise ConfigurationError("lr and lr_gamma must be > 0 and lr_step >= 1")
        self.margin_config
        required = {
            "idx": ["train_images", "train_labels"],
            "csv": ["csv_path"],
        }.get(self.dataset, [])
        for key in required:
            if not getattr(self, key):
                raise ConfigurationError(f"dataset={self.dataset} requires {key}")
        for key in ("train_images", "train_labels", "test_images", "test_labels", "csv_path", "csv_test_path"):
            path = getattr(self, key)
            if path and key in _used_paths(self.dataset) and not Path(path).exists():
                raise DataIOError(f"{key}: file not found: {path}")
        if self.dataset == "idx" and bool(self.test_images) != bool(self.test_labels):
            raise ConfigurationError("give both test_images and test_labels, or neither")
        return self


def _used_paths(dataset: str) -> tuple[str, ...]:
    if dataset == "idx":
        return ("train_images", "train_labels", "test_images", "test_labels")
    if dataset == "csv":
        return ("csv_path", "csv_test_path")
    return ()


def sub_seed(seed: int, name: str) -> int:
    """Stable integer seed for one consumer of randomness (split, data, ...)."""
    return int(RandomSource(seed).derive(name).integers(0, 2**63 - 1))


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    key = key.strip().lower().replace("-", "_")
    if key not in _FIELD_TYPES:
        raise ConfigurationError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return key, int(raw)
        if kind == "float":
            return key, float(raw)
    except ValueError:
        raise ConfigurationError(f"{key}: cannot parse {raw!r} as {kind}") from None
    return key, raw


def parse_config_text(text: str) -> dict:
    parser = configparser.ConfigParser(comment_prefixes=("#",), inline_comment_prefixes=("#",),
                                       interpolation=None, delimiters=("=",))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    return dict(_coerce(k, v) for k, v in parser["config"].items())


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key, val = _coerce(name[len(ENV_PREFIX):], value)
            out[key] = val
    return out


def load_config(path=None, overrides: dict | None = None, environ=None) -> TrainConfig:
    values: dict = {}
    if path:
        p = Path(path)
        if not p.exists():
            raise DataIOError(f"config file not found: {p}")
        values.update(parse_config_text(p.read_text(encoding="utf-8")))
    values.update(env_overrides(environ))
    for k, v in (overrides or {}).items():
        if v is not None:
            key, val = _coerce(k, str(v))
            values[key] = val
    return replace(TrainConfig(), **values)


def dump_config(cfg: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in asdict(cfg).items())


def load_datasets(cfg: TrainConfig) -> tuple[Dataset, Dataset]:
    """Build the (train, test) pair described by the config, subsampled to the size caps."""
    split_seed = sub_seed(cfg.seed, "split")
    if cfg.dataset == "blobs":
        train, test = split(make_blobs(cfg.blob_spec()), cfg.test_fraction, split_seed)
    elif cfg.dataset == "idx":
        full = load_idx(cfg.train_images, cfg.train_labels)
        if cfg.test_images:
            train, test = full, load_idx(cfg.test_images, cfg.test_labels)
        else:
            train, test = split(full, cfg.test_fraction, split_seed)
    else:
        full = load_csv(cfg.csv_path, cfg.label_column)
        if cfg.csv_test_path:
            train, test = full, load_csv(cfg.csv_test_path, cfg.label_column)
        else:
            train, test = split(full, cfg.test_fraction, split_seed)
    if train.features.shape[1] != test.features.shape[1]:
        raise ConfigurationError("train and test feature widths differ")
    train = stratified_subset(train, cfg.max_train, sub_seed(cfg.seed, "subset-train"))
    test = stratified_subset(test, cfg.max_test, sub_seed(cfg.seed, "subset-test"))
    if not np.isin(test.labels, train.labels).all():
        raise ConfigurationError("test set contains classes absent from the training set")
    return train, test
