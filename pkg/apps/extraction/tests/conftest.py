from pathlib import Path

import pytest
from extraction_fakes import FIXTURES

from oie_extraction.config import (
  AppConfig,
  BackendSettings,
  EmbeddingSettings,
  EnsembleSettings,
  LoadedConfig,
  PipelineSettings,
  PromptSettings,
  RetrievalSettings,
  StorageSettings,
  SyntheticSettings,
)
from oie_extraction.corpus import AnnotatedCorpus, load_jsonl


@pytest.fixture
def sentences() -> AnnotatedCorpus:
  return load_jsonl(FIXTURES / "sentences.jsonl")


@pytest.fixture
def train_corpus() -> AnnotatedCorpus:
  return load_jsonl(FIXTURES / "train.jsonl")


@pytest.fixture
def make_config(tmp_path: Path):
  def factory(mode: str = "selected_demo_uncertainty", backend_kind: str = "synthetic", **sections) -> LoadedConfig:
    artifacts_dir = tmp_path / "artifacts"
    app_config = AppConfig(
      config_version=1,
      backend=sections.get(
        "backend",
        BackendSettings(
          kind=backend_kind,
          model="test-model",
          max_retries=1,
          backoff_seconds=0.0,
          mock_fixture=FIXTURES / "scripted_responses.jsonl",
          synthetic=SyntheticSettings(p_drop=0.0, p_noise=0.0, seed=7),
        ),
      ),
      embedding=sections.get("embedding", EmbeddingSettings(kind="hashed", dim=128, batch_size=4)),
      retrieval=sections.get("retrieval", RetrievalSettings(pool_size=5)),
      prompt=sections.get("prompt", PromptSettings(quiz_size=2, demo_count=3)),
      ensemble=sections.get("ensemble", EnsembleSettings(size=5, subset_size=3, threshold=0.8)),
      pipeline=sections.get("pipeline", PipelineSettings(mode=mode, workers=2, seed=11)),
      storage=StorageSettings(
        cache_dir=artifacts_dir / "cache",
        run_log_path=artifacts_dir / "logs" / "extraction_runs.jsonl",
      ),
    )
    loaded = LoadedConfig(raw=app_config, config_path=tmp_path / "extraction.yaml", base_dir=tmp_path)
    loaded.ensure_storage_paths()
    return loaded

  return factory


@pytest.fixture
def loaded_config(make_config) -> LoadedConfig:
  return make_config()


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
  """A YAML config pointing every writable path into tmp_path."""
  path = tmp_path / "extraction.yaml"
  path.write_text(
    "\n".join(
      [
        "config_version: 1",
        "backend:",
        "  kind: synthetic",
        "  model: test-model",
        "  max_retries: 0",
        "  backoff_seconds: 0.0",
        "  synthetic:",
        "    p_drop: 0.3",
        "    p_noise: 0.5",
        "    seed: 3",
        "embedding:",
        "  kind: hashed",
        "  dim: 128",
        "retrieval:",
        "  pool_size: 5",
        "pipeline:",
        "  workers: 2",
        "storage:",
        f"  cache_dir: {tmp_path / 'cache'}",
        f"  run_log_path: {tmp_path / 'logs' / 'runs.jsonl'}",
        "",
      ]
    ),
    encoding="utf-8",
  )
  return path
