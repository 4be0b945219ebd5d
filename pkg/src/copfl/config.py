"""Experiment configuration: JSON in, validated dataclasses out.

Unknown keys are rejected with a did-you-mean hint. Only ``algorithm`` and
``seed`` are required; every other field has a default (see README).
"""

from __future__ import annotations

import dataclasses
import difflib
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .federation import AlgorithmKind
from .models import ModelKind


class ConfigError(ValueError):
    """Invalid configuration. ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


@dataclass
class CowaConfig:
    enabled: bool = True
    use_grad: bool = True
    use_data: bool = True
    normalize_components: bool = False
    shared_only_direction: bool = False


@dataclass
class MamoConfig:
    literal_decay: bool = False


@dataclass
class DataConfig:
    num_classes: int = 10
    input_dim: int = 20
    classes_per_client: int = 2
    train_bound: int = 50
    test_bound: int = 100
    noise_scale: float = 1.2
    mean_scale: float = 1.0
    mean_rank: int | None = 3
    feature_shift: bool = False
    feature_shift_scale: float = 0.5
    seed: int | None = None
    csv_path: str | None = None


@dataclass
class ModelConfig:
    kind: str = "mlp2"
    hidden_dim: int = 32


@dataclass
class ExperimentConfig:
    algorithm: str
    seed: int
    rounds: int = 75
    clients: int = 10
    local_iters: int = 1
    batch_size: int = 32
    lr: float = 0.03
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    p: float = 0.25
    gamma: float = 0.5
    cowa: CowaConfig = field(default_factory=CowaConfig)
    mamo: MamoConfig = field(default_factory=MamoConfig)
    renorm_per_coord: bool = False
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval_every: int = 1
    ft_steps: int = 5
    output_dir: str | None = None

    def validate(self) -> "ExperimentConfig":
        _check(self.algorithm in {a.value for a in AlgorithmKind}, "algorithm",
               f"algorithm must be one of {sorted(a.value for a in AlgorithmKind)}")
        _check(self.model.kind in {k.value for k in ModelKind}, "model.kind",
               f"model.kind must be one of {sorted(k.value for k in ModelKind)}")
        _check(self.lr > 0, "lr", "lr must be > 0")
        for name in ("beta1", "beta2"):
            _check(0.0 < getattr(self, name) < 1.0, name, f"{name} ∈ (0,1)")
        _check(self.epsilon > 0, "epsilon", "epsilon must be > 0")
        _check(0.0 <= self.p <= 1.0, "p", "p ∈ [0,1]")
        _check(0.0 <= self.gamma <= 1.0, "gamma", "gamma ∈ [0,1]")
        for name in ("rounds", "clients", "local_iters", "batch_size", "eval_every"):
            _check(getattr(self, name) >= 1, name, f"{name} must be >= 1")
        _check(self.ft_steps >= 0, "ft_steps", "ft_steps must be >= 0")
        d = self.data
        _check(d.num_classes >= 1, "data.num_classes", "data.num_classes must be >= 1")
        _check(d.input_dim >= 1, "data.input_dim", "data.input_dim must be >= 1")
        _check(1 <= d.classes_per_client <= d.num_classes, "data.classes_per_client",
               "data.classes_per_client ∈ [1, num_classes]")
        _check(d.train_bound >= 1, "data.train_bound", "data.train_bound must be >= 1")
        _check(d.test_bound >= 1, "data.test_bound", "data.test_bound must be >= 1")
        _check(d.noise_scale >= 0, "data.noise_scale", "data.noise_scale must be >= 0")
        _check(d.mean_scale > 0, "data.mean_scale", "data.mean_scale must be > 0")
        _check(d.mean_rank is None or 1 <= d.mean_rank <= d.input_dim, "data.mean_rank",
               "data.mean_rank ∈ [1, input_dim]")
        _check(d.feature_shift_scale >= 0, "data.feature_shift_scale",
               "data.feature_shift_scale must be >= 0")
        if self.model.kind == ModelKind.MLP2.value:
            _check(self.model.hidden_dim >= 1, "model.hidden_dim", "model.hidden_dim must be >= 1")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def config_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "ExperimentConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"cowa.use_grad": False})``."""
        raw = self.to_dict()
        for key, value in changes.items():
            _set_dotted(raw, key, value)
        return from_dict(raw)


def _check(ok: bool, name: str, message: str) -> None:
    if not ok:
        raise ConfigError(message, field=name)


_SECTIONS = {"cowa": CowaConfig, "mamo": MamoConfig, "data": DataConfig, "model": ModelConfig}


def _coerce(value: Any, annotation: str, name: str) -> Any:
    optional = "None" in annotation
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{name} must not be null", field=name)
    base = annotation.replace("| None", "").strip()
    if base == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean", field=name)
        return value
    if base == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(f"{name} must be an integer", field=name)
        return value
    if base == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number", field=name)
        return float(value)
    if base == "str":
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string", field=name)
        return value
    return value


def _build(cls, raw: dict, prefix: str = ""):
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be an object", field=prefix.rstrip(".") or None)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in raw:
        if key not in fields:
            hint = difflib.get_close_matches(key, list(fields), n=1)
            msg = f"unknown key {prefix + key!r}"
            if hint:
                msg += f"; did you mean {prefix + hint[0]!r}?"
            raise ConfigError(msg, field=prefix + key)
    kwargs = {}
    for name, f in fields.items():
        full = prefix + name
        if name not in raw:
            if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise ConfigError(f"missing required key {full!r}", field=full)
            continue
        if name in _SECTIONS and cls is ExperimentConfig:
            kwargs[name] = _build(_SECTIONS[name], raw[name], full + ".")
        else:
            kwargs[name] = _coerce(raw[name], str(f.type), full)
    return cls(**kwargs)


def from_dict(raw: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, raw).validate()


def load_config(path) -> ExperimentConfig:
    return from_dict(load_raw(path))


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value``; the value is read as JSON when possible, else as a string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, text = item.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    return key, value


def _set_dotted(raw: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = raw
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{key!r}: {part!r} is not a section", field=key)
        node = child
    node[parts[-1]] = value


def apply_overrides(raw: dict, overrides) -> dict:
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        _set_dotted(raw, key, value)
    return raw


def load_raw(path) -> dict:
    """Parse a config file without validating it (for applying overrides first)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return raw
