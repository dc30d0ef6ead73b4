from .config import (
  default_config_path,
  env_secret,
  load_yaml_config,
  merge_overrides,
  resolve_path,
)
from .logging import RunLog, configure_logging, get_logger
from .paths import workspace_root
from .text import normalize_text

__all__ = [
  "RunLog",
  "configure_logging",
  "get_logger",
  "workspace_root",
  "resolve_path",
  "load_yaml_config",
  "merge_overrides",
  "default_config_path",
  "env_secret",
  "normalize_text",
]
