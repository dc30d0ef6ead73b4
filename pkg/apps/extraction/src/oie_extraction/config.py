from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Literal, Mapping, Optional

from oie_core.config import default_config_path, env_secret, load_yaml_config, merge_overrides, resolve_path
from oie_core.paths import workspace_root
from pydantic import BaseModel, Field, ValidationError

CONFIG_ENV_VAR = "OIE_EXTRACTION_CONFIG_PATH"
DEFAULT_CONFIG = "config/extraction.yaml"

PipelineMode = Literal["zero_shot", "fixed_demo", "selected_demo", "selected_demo_uncertainty"]
RETRIEVAL_MODES = ("selected_demo", "selected_demo_uncertainty")


class SyntheticSettings(BaseModel):
  p_drop: float = Field(0.3, ge=0.0, le=1.0)
  p_noise: float = Field(0.5, ge=0.0, le=1.0)
  zero_shot_penalty: float = Field(1.5, ge=0.0)
  seed: int = 0


class BackendSettings(BaseModel):
  kind: Literal["http", "mock", "synthetic"] = "http"
  model: str = Field("gpt-3.5-turbo", min_length=1)
  base_url: Optional[str] = None
  api_key_env: str = Field("OPENAI_API_KEY", min_length=1)
  temperature: float = Field(0.7, ge=0.0, le=2.0)
  max_tokens: int = Field(512, gt=0)
  max_in_flight: int = Field(4, ge=1, le=64)
  max_retries: int = Field(3, ge=0, le=10)
  backoff_seconds: float = Field(1.0, ge=0.0)
  mock_fixture: Optional[Path] = None
  synthetic: SyntheticSettings = Field(default_factory=SyntheticSettings)


class EmbeddingSettings(BaseModel):
  kind: Literal["http", "hashed"] = "http"
  model: str = Field("text-embedding-3-small", min_length=1)
  base_url: Optional[str] = None
  api_key_env: str = Field("OPENAI_API_KEY", min_length=1)
  dim: int = Field(256, gt=0)
  batch_size: int = Field(64, gt=0)


class RetrievalSettings(BaseModel):
  pool_size: int = Field(10, gt=0)
  leakage_guard: bool = True


class PromptSettings(BaseModel):
  assets_dir: Optional[Path] = None
  quiz_size: int = Field(2, ge=0)
  demo_count: int = Field(3, ge=0)


class EnsembleSettings(BaseModel):
  size: int = Field(5, ge=1)
  subset_size: int = Field(3, ge=1)
  threshold: float = Field(0.8, ge=0.0, le=1.0)
  count_mode: Literal["concat", "run_fraction"] = "concat"
  threshold_rule: Literal["keep_low", "keep_high"] = "keep_low"


class PipelineSettings(BaseModel):
  mode: PipelineMode = "selected_demo_uncertainty"
  workers: int = Field(4, ge=1, le=64)
  seed: int = 0
  max_failure_ratio: float = Field(0.5, ge=0.0, le=1.0)


class StorageSettings(BaseModel):
  cache_dir: Path = Path("var/artifacts/cache")
  run_log_path: Path = Path("var/artifacts/logs/extraction_runs.jsonl")


class AppConfig(BaseModel):
  config_version: int = Field(1, ge=1)
  backend: BackendSettings = Field(default_factory=BackendSettings)
  embedding: EmbeddingSettings = Field(default_factory=EmbeddingSettings)
  retrieval: RetrievalSettings = Field(default_factory=RetrievalSettings)
  prompt: PromptSettings = Field(default_factory=PromptSettings)
  ensemble: EnsembleSettings = Field(default_factory=EnsembleSettings)
  pipeline: PipelineSettings = Field(default_factory=PipelineSettings)
  storage: StorageSettings = Field(default_factory=StorageSettings)


@dataclass
class LoadedConfig:
  raw: AppConfig
  config_path: Path
  base_dir: Path

  @property
  def backend(self) -> BackendSettings:
    return self.raw.backend

  @property
  def embedding(self) -> EmbeddingSettings:
    return self.raw.embedding

  @property
  def retrieval(self) -> RetrievalSettings:
    return self.raw.retrieval

  @property
  def prompt(self) -> PromptSettings:
    return self.raw.prompt

  @property
  def ensemble(self) -> EnsembleSettings:
    return self.raw.ensemble

  @property
  def pipeline(self) -> PipelineSettings:
    return self.raw.pipeline

  @property
  def storage(self) -> StorageSettings:
    return self.raw.storage

  @property
  def needs_retrieval(self) -> bool:
    return self.pipeline.mode in RETRIEVAL_MODES

  def missing_credentials(self) -> List[str]:
    """Environment variables the configured live backends need but are not set."""
    missing = []
    if self.backend.kind == "http" and env_secret(self.backend.api_key_env) is None:
      missing.append(self.backend.api_key_env)
    if self.needs_retrieval and self.embedding.kind == "http" and env_secret(self.embedding.api_key_env) is None:
      if self.embedding.api_key_env not in missing:
        missing.append(self.embedding.api_key_env)
    return missing

  def ensure_storage_paths(self) -> None:
    self.storage.cache_dir.mkdir(parents=True, exist_ok=True)
    self.storage.run_log_path.parent.mkdir(parents=True, exist_ok=True)

  def to_dict(self) -> dict[str, Any]:
    return self.raw.model_dump(mode="json")


def _resolve_paths(config: AppConfig, base_dir: Path) -> AppConfig:
  backend = config.backend
  if backend.mock_fixture is not None:
    backend = backend.model_copy(update={"mock_fixture": resolve_path(base_dir, backend.mock_fixture)})
  prompt = config.prompt
  if prompt.assets_dir is not None:
    prompt = prompt.model_copy(update={"assets_dir": resolve_path(base_dir, prompt.assets_dir)})
  storage = StorageSettings(
    cache_dir=resolve_path(base_dir, config.storage.cache_dir),
    run_log_path=resolve_path(base_dir, config.storage.run_log_path),
  )
  return config.model_copy(update={"backend": backend, "prompt": prompt, "storage": storage})


def load_config(config_path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> LoadedConfig:
  """Load the YAML config (flag path, env var, then the workspace default) and apply flag overrides.

  Only an explicitly requested file must exist; otherwise built-in defaults apply.
  """
  provided_path = config_path or default_config_path(CONFIG_ENV_VAR, DEFAULT_CONFIG)
  data = load_yaml_config(provided_path, missing_ok=config_path is None)
  data = merge_overrides(data, overrides or {})
  try:
    parsed = AppConfig(**data)
  except ValidationError as exc:
    raise ValueError(f"Invalid config: {exc}") from exc
  base_dir = workspace_root()
  resolved = _resolve_paths(parsed, base_dir)
  return LoadedConfig(raw=resolved, config_path=provided_path, base_dir=base_dir)
