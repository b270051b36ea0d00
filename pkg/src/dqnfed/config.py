"""Run configuration: dataclasses, TOML parsing and validation.

A configuration file looks like::

    method = "dqnfed"           # dqnfed | fedavg | newton-avg
    rounds = 100
    num_clients = 20
    participation_fraction = 1.0
    master_seed = 0

    [model]
    kind = "linear-softmax"     # linear-softmax | mlp-1h | quadratic
    l2_reg = 1e-3

    [data]
    source = "blobs"            # blobs | csv | quadratics

    [partition]
    scheme = "dirichlet"        # dirichlet | shard | label | iid
    beta = 0.5

    [local]
    epochs = 1
    learning_rate = 0.1

    [server]
    learning_rate = 0.1         # fedavg / newton-avg only; defaults to local.learning_rate
    clip = false                # dqnfed smoothness clip

Every key is optional except ``method``; unknown keys are rejected with a
suggestion.
"""

import dataclasses
import difflib
import math
import sys
from dataclasses import dataclass, field
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ValidationError

METHODS = ("dqnfed", "fedavg", "newton-avg")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "linear-softmax"
    hidden_dim: int = 16
    l2_reg: float = 1e-3


@dataclass(frozen=True)
class DataConfig:
    source: str = "blobs"
    # blobs
    num_classes: int = 3
    per_class: int = 100
    input_dim: int = 5
    spread: float = 1.0
    # csv
    path: Optional[str] = None
    # quadratics
    dim: int = 20
    per_client: int = 10
    radius: float = 1.0
    jitter: float = 0.1
    num_outliers: int = 1
    # all sources
    test_fraction: float = 0.2


@dataclass(frozen=True)
class PartitionConfig:
    scheme: str = "dirichlet"
    beta: float = 0.5
    min_size: int = 2
    shards_per_client: int = 2


@dataclass(frozen=True)
class LocalConfig:
    epochs: int = 1
    learning_rate: float = 0.1
    batch_size: Optional[int] = None    # None = full batch
    bfgs_mode: str = "two-loop"
    memory: int = 10


@dataclass(frozen=True)
class ServerConfig:
    learning_rate: Optional[float] = None   # None = local.learning_rate (plain model averaging)
    clip: bool = False


@dataclass(frozen=True)
class FederationConfig:
    method: str
    rounds: int = 100
    num_clients: int = 10
    participation_fraction: float = 1.0
    master_seed: int = 0
    eval_every: int = 1
    record_wallclock: bool = False
    model: ModelConfig = field(default_factory=ModelConfig)
    data: DataConfig = field(default_factory=DataConfig)
    partition: PartitionConfig = field(default_factory=PartitionConfig)
    local: LocalConfig = field(default_factory=LocalConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    @property
    def clients_per_round(self) -> int:
        return max(1, math.ceil(self.participation_fraction * self.num_clients - 1e-9))

    @property
    def server_lr(self) -> float:
        lr = self.server.learning_rate
        return self.local.learning_rate if lr is None else lr

    def with_method(self, method) -> "FederationConfig":
        return validate(dataclasses.replace(self, method=method))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


SECTIONS = {
    "model": ModelConfig,
    "data": DataConfig,
    "partition": PartitionConfig,
    "local": LocalConfig,
    "server": ServerConfig,
}


def _all_keys():
    keys = [f.name for f in dataclasses.fields(FederationConfig) if f.name not in SECTIONS]
    for sec, cls in SECTIONS.items():
        keys += [f"{sec}.{f.name}" for f in dataclasses.fields(cls)]
    return keys


def _unknown(key):
    leaf = key.rsplit(".", 1)[-1]
    candidates = _all_keys()
    by_leaf = {c.rsplit(".", 1)[-1]: c for c in candidates}
    close = difflib.get_close_matches(key, candidates, n=1) or [
        by_leaf[m] for m in difflib.get_close_matches(leaf, list(by_leaf), n=1)
    ]
    hint = f"; did you mean '{close[0]}'?" if close else ""
    return ValidationError(key, f"unknown key{hint}")


def _coerce(key, value, ftype):
    """Check a TOML value against the dataclass field annotation."""
    text = str(ftype)
    for label, typ in (("int", int), ("float", float), ("str", str), ("bool", bool)):
        if label in text:
            break
    else:
        raise ValidationError(key, f"unsupported field type {ftype}")
    if typ is bool:
        if not isinstance(value, bool):
            raise ValidationError(key, "must be true or false")
        return value
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValidationError(key, "must be an integer")
        return value
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(key, "must be a number")
        return float(value)
    if not isinstance(value, str):
        raise ValidationError(key, "must be a string")
    return value


def _build(cls, table, prefix=""):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        full = f"{prefix}{key}"
        if key not in fields:
            raise _unknown(full)
        if prefix == "" and key in SECTIONS:
            if not isinstance(value, dict):
                raise ValidationError(full, "must be a table")
            kwargs[key] = _build(SECTIONS[key], value, prefix=f"{key}.")
        else:
            kwargs[key] = _coerce(full, value, fields[key].type)
    return cls(**kwargs)


def from_dict(table: dict) -> FederationConfig:
    if "method" not in table:
        raise ValidationError("method", f"required; one of {', '.join(METHODS)}")
    return validate(_build(FederationConfig, table))


def parse_config(path) -> FederationConfig:
    """Load and validate a TOML run configuration.

    Raises ``OSError`` if the file cannot be read and
    :class:`~dqnfed.errors.ValidationError` for anything malformed.
    """
    with open(path, "rb") as fh:
        try:
            table = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError("<file>", f"not valid TOML: {exc}") from None
    return from_dict(table)


def _require(cond, key, message):
    if not cond:
        raise ValidationError(key, message)


def validate(cfg: FederationConfig) -> FederationConfig:
    _require(cfg.method in METHODS, "method", f"must be one of {', '.join(METHODS)}")
    _require(cfg.rounds >= 1, "rounds", "must be >= 1")
    _require(cfg.num_clients >= 1, "num_clients", "must be >= 1")
    _require(0 < cfg.participation_fraction <= 1, "participation_fraction",
             "must lie in (0, 1]")
    _require(cfg.master_seed >= 0, "master_seed", "must be nonnegative")
    _require(cfg.eval_every >= 1, "eval_every", "must be >= 1")

    m = cfg.model
    _require(m.kind in ("linear-softmax", "mlp-1h", "quadratic"), "model.kind",
             "must be linear-softmax, mlp-1h or quadratic")
    _require(m.hidden_dim >= 1, "model.hidden_dim", "must be >= 1")
    _require(m.l2_reg >= 0, "model.l2_reg", "must be nonnegative")

    d = cfg.data
    _require(d.source in ("blobs", "csv", "quadratics"), "data.source",
             "must be blobs, csv or quadratics")
    _require(d.source != "csv" or d.path, "data.path", "required when data.source = 'csv'")
    _require(d.num_classes >= 2, "data.num_classes", "must be >= 2")
    _require(d.per_class >= 1, "data.per_class", "must be >= 1")
    _require(d.input_dim >= 1, "data.input_dim", "must be >= 1")
    _require(d.spread >= 0, "data.spread", "must be nonnegative")
    _require(d.dim >= 1, "data.dim", "must be >= 1")
    _require(d.per_client >= 1, "data.per_client", "must be >= 1")
    _require(0 <= d.num_outliers < max(cfg.num_clients, 2), "data.num_outliers",
             "must leave at least one inlier client")
    _require(0 <= d.test_fraction < 1, "data.test_fraction", "must lie in [0, 1)")
    _require((d.source == "quadratics") == (m.kind == "quadratic"), "model.kind",
             "quadratic models go with data.source = 'quadratics' and vice versa")

    p = cfg.partition
    _require(p.scheme in ("dirichlet", "shard", "label", "iid"), "partition.scheme",
             "must be dirichlet, shard, label or iid")
    _require(p.beta > 0, "partition.beta", "must be > 0")
    _require(p.min_size >= 0, "partition.min_size", "must be >= 0")
    _require(p.shards_per_client >= 1, "partition.shards_per_client", "must be >= 1")
    _require(d.source != "quadratics" or p.scheme == "label", "partition.scheme",
             "quadratics data is partitioned by label (one client per label)")

    lc = cfg.local
    _require(lc.epochs >= 1, "local.epochs", "must be >= 1")
    _require(lc.learning_rate >= 0, "local.learning_rate", "must be >= 0")
    _require(lc.batch_size is None or lc.batch_size >= 1, "local.batch_size", "must be >= 1")
    _require(lc.bfgs_mode in ("two-loop", "dense"), "local.bfgs_mode",
             "must be two-loop or dense")
    _require(lc.memory >= 1, "local.memory", "must be >= 1")

    slr = cfg.server.learning_rate
    _require(slr is None or slr > 0, "server.learning_rate", "must be > 0")
    return cfg
