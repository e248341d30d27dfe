"""
Flat ``key=value`` run configuration files.

Lines are ``key=value`` pairs; ``#`` starts a comment and blank lines are
ignored. Keys prefixed with ``adapter.`` are passed to the encoder adapter.
Values from the command line override values from the file.
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

from pydantic import ValidationError

from config.settings import settings
from core.errors import ConfigError
from core.model import ModelConfig
from core.trainer import TrainConfig

PathLike = Union[str, Path]

ADAPTER_PREFIX = "adapter."
MODEL_KEYS = tuple(name for name in ModelConfig.model_fields if name != "adapter_options")
TRAIN_KEYS = tuple(TrainConfig.model_fields)
KNOWN_KEYS = tuple(sorted(MODEL_KEYS + TRAIN_KEYS))


def parse_run_config(path: PathLike) -> Dict[str, str]:
    values: Dict[str, str] = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read run config {path}: {e}") from e
    except UnicodeDecodeError as e:
        raise ConfigError(f"run config {path} is not valid UTF-8: {e.reason} at byte {e.start}") from e
    for line_number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_number}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{line_number}: empty key")
        values[key] = value
    return values


def _check_keys(values: Mapping[str, Any]):
    unknown = sorted(key for key in values if key not in KNOWN_KEYS and not key.startswith(ADAPTER_PREFIX))
    if unknown:
        raise ConfigError(f"unknown config key(s) {', '.join(unknown)}; known keys: {', '.join(KNOWN_KEYS)}")


def _coerce_betas(value: Any) -> Any:
    if isinstance(value, str):
        return tuple(float(part) for part in value.split(","))
    return value


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig

    @classmethod
    def from_values(cls, values: Mapping[str, Any]) -> "RunConfig":
        _check_keys(values)
        model_values = {key: values[key] for key in MODEL_KEYS if key in values}
        model_values["adapter_options"] = {
            key[len(ADAPTER_PREFIX) :]: value for key, value in values.items() if key.startswith(ADAPTER_PREFIX)
        }
        train_values = {key: values[key] for key in TRAIN_KEYS if key in values}
        if "betas" in train_values:
            train_values["betas"] = _coerce_betas(train_values["betas"])
        train_values.setdefault("seed", settings.general.seed)
        train_values.setdefault("device", settings.general.device)
        try:
            return cls(model=ModelConfig(**model_values), train=TrainConfig(**train_values))
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in error['loc'])}: {error['msg']}" for error in e.errors()
            )
            raise ConfigError(f"invalid run configuration: {problems}") from None

    @classmethod
    def load(cls, path: Optional[PathLike] = None, overrides: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        """File values (if any) merged with non-None overrides; overrides win."""
        values: Dict[str, Any] = dict(parse_run_config(path)) if path else {}
        values.update({key: value for key, value in (overrides or {}).items() if value is not None})
        return cls.from_values(values)
