from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Literal, Mapping, Optional

from oie_core.config import default_config_path, load_yaml_config, merge_overrides, resolve_path
from oie_core.paths import workspace_root
from pydantic import BaseModel, Field, ValidationError, field_validator

from .scorer import DEFAULT_STOPWORDS

CONFIG_ENV_VAR = "OIE_EVALUATION_CONFIG_PATH"
DEFAULT_CONFIG = "config/evaluation.yaml"


class ScoringSettings(BaseModel):
  matcher: Literal["exact", "lexical", "tuple"] = "lexical"
  stopwords: List[str] = Field(default_factory=lambda: sorted(DEFAULT_STOPWORDS))

  @field_validator("stopwords")
  @classmethod
  def lowercase(cls, value: List[str]) -> List[str]:
    return sorted({word.strip().lower() for word in value if word.strip()})


class StorageSettings(BaseModel):
  report_log_path: Path = Path("var/artifacts/logs/evaluation_runs.jsonl")


class AppConfig(BaseModel):
  config_version: int = Field(1, ge=1)
  scoring: ScoringSettings = Field(default_factory=ScoringSettings)
  storage: StorageSettings = Field(default_factory=StorageSettings)


@dataclass
class LoadedConfig:
  raw: AppConfig
  config_path: Path
  base_dir: Path

  @property
  def scoring(self) -> ScoringSettings:
    return self.raw.scoring

  @property
  def storage(self) -> StorageSettings:
    return self.raw.storage

  def to_dict(self) -> dict[str, Any]:
    return self.raw.model_dump(mode="json")


def load_config(config_path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> LoadedConfig:
  provided_path = config_path or default_config_path(CONFIG_ENV_VAR, DEFAULT_CONFIG)
  data = load_yaml_config(provided_path, missing_ok=config_path is None)
  data = merge_overrides(data, overrides or {})
  try:
    parsed = AppConfig(**data)
  except ValidationError as exc:
    raise ValueError(f"Invalid config: {exc}") from exc
  base_dir = workspace_root()
  storage = StorageSettings(report_log_path=resolve_path(base_dir, parsed.storage.report_log_path))
  return LoadedConfig(raw=parsed.model_copy(update={"storage": storage}), config_path=provided_path, base_dir=base_dir)
