import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import ValidationError

from .errors import DataValidationError
from .schemas import PipelineConfig

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(level: Optional[str] = None):
    level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT)


def default_config_path() -> Optional[str]:
    return os.getenv("WEAKRANK_CONFIG")


def default_workers() -> Optional[int]:
    raw = os.getenv("WEAKRANK_WORKERS")
    if raw is None:
        return None
    try:
        workers = int(raw)
    except ValueError:
        raise DataValidationError(f"WEAKRANK_WORKERS must be an integer, got '{raw}'")
    if workers < 1:
        raise DataValidationError(f"WEAKRANK_WORKERS must be >= 1, got {workers}")
    return workers


def read_yaml(path) -> Any:
    path = Path(path)
    if not path.exists():
        raise DataValidationError("file not found", path=str(path))
    try:
        with open(path, "r", encoding="utf-8") as f:
            return yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise DataValidationError(f"invalid YAML: {e}", path=str(path))


def _deep_update(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_update(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_pipeline_config(path=None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Read the pipeline YAML, apply CLI overrides (None values are ignored) and the
    WEAKRANK_WORKERS environment variable. paths.workdir is resolved against the
    config file's directory, and every other path against workdir.
    """
    raw: Dict[str, Any] = {}
    base_dir = Path.cwd()
    path = path or default_config_path()
    if path:
        loaded = read_yaml(path)
        if loaded is not None and not isinstance(loaded, dict):
            raise DataValidationError("top level must be a mapping", path=str(path))
        raw = loaded or {}
        base_dir = Path(path).resolve().parent
        logger.info(f"Loaded pipeline config from {path}")

    env_workers = default_workers()
    if env_workers is not None:
        raw = _deep_update(raw, {"workers": env_workers})
    if overrides:
        raw = _deep_update(raw, overrides)

    try:
        config = PipelineConfig.model_validate(raw)
    except ValidationError as e:
        raise DataValidationError(f"invalid pipeline config: {e}", path=str(path) if path else None)

    workdir = Path(config.paths.workdir)
    if not workdir.is_absolute():
        workdir = (base_dir / workdir).resolve()
    config.paths.workdir = str(workdir)
    return config


def resolve(config: PipelineConfig, relative: Optional[str]) -> Optional[Path]:
    if relative is None:
        return None
    path = Path(relative)
    return path if path.is_absolute() else Path(config.paths.workdir) / path
