from pathlib import Path

import pytest
from evaluation_helpers import FIXTURES

from oie_evaluation.config import AppConfig, LoadedConfig, ScoringSettings, StorageSettings
from oie_extraction.corpus import AnnotatedCorpus, load_jsonl


@pytest.fixture
def flemish_corpus() -> AnnotatedCorpus:
  return load_jsonl(FIXTURES / "flemish_gold.jsonl")


@pytest.fixture
def loaded_config(tmp_path: Path) -> LoadedConfig:
  app_config = AppConfig(
    config_version=1,
    scoring=ScoringSettings(matcher="exact"),
    storage=StorageSettings(report_log_path=tmp_path / "logs" / "evaluation_runs.jsonl"),
  )
  return LoadedConfig(raw=app_config, config_path=tmp_path / "evaluation.yaml", base_dir=tmp_path)


@pytest.fixture
def evaluation_config_file(tmp_path: Path) -> Path:
  path = tmp_path / "evaluation.yaml"
  path.write_text(
    "\n".join(
      [
        "config_version: 1",
        "scoring:",
        "  matcher: exact",
        "storage:",
        f"  report_log_path: {tmp_path / 'logs' / 'evaluation_runs.jsonl'}",
        "",
      ]
    ),
    encoding="utf-8",
  )
  return path


@pytest.fixture
def extraction_config_file(tmp_path: Path) -> Path:
  """Extraction config for offline runs whose outputs feed the scorer."""
  path = tmp_path / "extraction.yaml"
  path.write_text(
    "\n".join(
      [
        "config_version: 1",
        "backend:",
        "  kind: mock",
        "  max_retries: 0",
        "  backoff_seconds: 0.0",
        "embedding:",
        "  kind: hashed",
        "pipeline:",
        "  mode: zero_shot",
        "  workers: 1",
        "storage:",
        f"  cache_dir: {tmp_path / 'cache'}",
        f"  run_log_path: {tmp_path / 'logs' / 'extraction_runs.jsonl'}",
        "",
      ]
    ),
    encoding="utf-8",
  )
  return path
