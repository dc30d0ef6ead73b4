import copy
import os
from pathlib import Path
from typing import Any, Mapping, Optional

import yaml

from .paths import workspace_root


def load_yaml_config(path: Path, missing_ok: bool = False) -> dict[str, Any]:
  if not path.exists():
    if missing_ok:
      return {}
    raise FileNotFoundError(f"Config path not found: {path}")
  with path.open("r", encoding="utf-8") as handle:
    data = yaml.safe_load(handle) or {}
  if not isinstance(data, dict):
    raise ValueError(f"Expected mapping in config file: {path}")
  return data


def resolve_path(base_dir: Path, value: Path) -> Path:
  value = value.expanduser()
  return value if value.is_absolute() else (base_dir / value).resolve()


def default_config_path(env_var: str, relative_path: str) -> Path:
  env_override = os.getenv(env_var)
  if env_override:
    return Path(env_override).expanduser()
  return workspace_root() / relative_path


def merge_overrides(data: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict[str, Any]:
  """Apply dotted `section.key` overrides on top of a nested config mapping.

  `None` values are skipped so unset CLI flags keep the file (or model) default.
  """
  merged = copy.deepcopy(dict(data))
  for dotted, value in overrides.items():
    if value is None:
      continue
    parts = dotted.split(".")
    cursor = merged
    for part in parts[:-1]:
      child = cursor.get(part)
      if not isinstance(child, dict):
        child = {}
        cursor[part] = child
      cursor = child
    cursor[parts[-1]] = value
  return merged


def env_secret(name: str) -> Optional[str]:
  value = os.getenv(name)
  if value is None or not value.strip():
    return None
  return value.strip()
