"""Run-config files: TOML in, resolved TOML out."""

import logging
import tomllib
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import tomli_w
from pydantic import ValidationError

from ..errors import ConfigError, OutputError
from ..models.config import ExperimentConfig

logger = logging.getLogger(__name__)


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"])
        if item["type"] == "extra_forbidden":
            parts.append(f"unknown key {key!r}")
        else:
            parts.append(f"{key}: {item['msg']}")
    return "; ".join(parts)


def _set_dotted(data: Dict[str, Any], key: str, value: Any) -> None:
    section = data
    *parents, leaf = key.split(".")
    for part in parents:
        section = section.setdefault(part, {})
        if not isinstance(section, dict):
            raise ConfigError(f"cannot override {key!r}: {part!r} is not a table")
    section[leaf] = value


def build_config(data: Mapping[str, Any], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Validate a raw mapping plus dotted-key overrides into an ExperimentConfig.

    Raises:
        ConfigError: Naming every unknown or invalid key
    """
    merged: Dict[str, Any] = {k: dict(v) if isinstance(v, Mapping) else v for k, v in data.items()}
    for key, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(merged, key, value)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from None


def load_run_config(path: Optional[Path | str], overrides: Optional[Mapping[str, Any]] = None) -> ExperimentConfig:
    """Read a TOML run file (or start from defaults when path is None).

    Args:
        path: TOML file with [latent], [pretrain], ... tables
        overrides: Dotted keys such as "pretrain.epochs" taking precedence over the file

    Raises:
        ConfigError: If the file cannot be read, is not TOML, or has unknown/invalid keys
    """
    data: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            with open(path, "rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigError(f"{path}: config file not found") from None
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: invalid TOML: {e}") from None
        except OSError as e:
            raise ConfigError(f"{path}: cannot read: {e}") from None
        logger.debug(f"loaded run config {path}")
    return build_config(data, overrides)


def dump_run_config(cfg: ExperimentConfig, path: Path | str) -> Path:
    """Write every effective value to `path` as TOML, atomically."""
    path = Path(path)
    text = tomli_w.dumps(cfg.model_dump(mode="json"))
    tmp = path.with_suffix(path.suffix + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(path)
    except OSError as e:
        raise OutputError(path, f"cannot write config: {e}") from e
    logger.debug(f"wrote resolved config {path}")
    return path
