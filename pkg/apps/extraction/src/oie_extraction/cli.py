from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, NoReturn, Optional

import typer
from oie_core.logging import configure_logging, get_logger

from .backends import build_chat_backend
from .config import LoadedConfig, load_config
from .corpus import AnnotatedCorpus, load_corpus
from .errors import BackendError, CorpusError
from .gateway import ResponseCache
from .pipeline import ExtractionPipeline
from .promptkit import load_prompt_assets

cli_app = typer.Typer(help="Few-shot open information extraction controls.")
cache_app = typer.Typer(help="Inspect or empty the response cache.")
cli_app.add_typer(cache_app, name="cache")
logger = get_logger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


def _fail(message: str, code: int) -> NoReturn:
  typer.secho(message, fg=typer.colors.RED, err=True)
  raise typer.Exit(code=code)


def _absolute(path: Optional[Path]) -> Optional[str]:
  return str(path.expanduser().resolve()) if path is not None else None


def _backend_overrides(backend: Optional[str]) -> Dict[str, Any]:
  if backend is None:
    return {}
  if backend in ("http", "synthetic"):
    return {"backend.kind": backend}
  if backend.startswith("mock:") and len(backend) > len("mock:"):
    return {"backend.kind": "mock", "backend.mock_fixture": _absolute(Path(backend[len("mock:") :]))}
  _fail(f"Unsupported --backend {backend!r}: expected http, synthetic or mock:<fixture>", EXIT_USAGE)


def _load(config: Optional[Path], overrides: Dict[str, Any]) -> LoadedConfig:
  try:
    return load_config(config, overrides)
  except (ValueError, FileNotFoundError) as exc:
    _fail(str(exc), EXIT_USAGE)


def _load_corpus(path: Path) -> AnnotatedCorpus:
  try:
    return load_corpus(path)
  except (CorpusError, FileNotFoundError) as exc:
    _fail(str(exc), EXIT_DATA)


@cli_app.command()
def extract(
  dataset: Path = typer.Option(..., "--dataset", help="Sentences to extract from (.jsonl or benchmark .tsv)."),
  out: Path = typer.Option(..., "--out", help="Extraction JSONL to write."),
  train: Optional[Path] = typer.Option(None, "--train", help="Annotated corpus demonstrations are retrieved from."),
  mode: Optional[str] = typer.Option(None, "--mode"),
  backend: Optional[str] = typer.Option(None, "--backend", help="http, synthetic or mock:<fixture.jsonl>."),
  model: Optional[str] = typer.Option(None, "--model"),
  pool_size: Optional[int] = typer.Option(None, "--pool-size"),
  subset_size: Optional[int] = typer.Option(None, "--subset-size"),
  ensemble: Optional[int] = typer.Option(None, "--ensemble"),
  threshold: Optional[float] = typer.Option(None, "--threshold"),
  count_mode: Optional[str] = typer.Option(None, "--count-mode"),
  threshold_rule: Optional[str] = typer.Option(None, "--threshold-rule"),
  seed: Optional[int] = typer.Option(None, "--seed"),
  cache_dir: Optional[Path] = typer.Option(None, "--cache-dir"),
  assets_dir: Optional[Path] = typer.Option(None, "--assets-dir"),
  workers: Optional[int] = typer.Option(None, "--workers"),
  embedder: Optional[str] = typer.Option(None, "--embedder", help="http or hashed."),
  leakage_guard: Optional[bool] = typer.Option(None, "--leakage-guard/--no-leakage-guard"),
  config: Optional[Path] = typer.Option(None, "--config", "-c"),
) -> None:
  """Run a pipeline mode over a dataset and write one extraction record per sentence."""
  configure_logging()
  overrides: Dict[str, Any] = {
    "pipeline.mode": mode,
    "pipeline.seed": seed,
    "pipeline.workers": workers,
    "backend.model": model,
    "retrieval.pool_size": pool_size,
    "retrieval.leakage_guard": leakage_guard,
    "ensemble.subset_size": subset_size,
    "ensemble.size": ensemble,
    "ensemble.threshold": threshold,
    "ensemble.count_mode": count_mode,
    "ensemble.threshold_rule": threshold_rule,
    "embedding.kind": embedder,
    "storage.cache_dir": _absolute(cache_dir),
    "prompt.assets_dir": _absolute(assets_dir),
    **_backend_overrides(backend),
  }
  loaded = _load(config, overrides)
  logger.info("Resolved config from %s: %s", loaded.config_path, json.dumps(loaded.to_dict(), sort_keys=True))
  if loaded.needs_retrieval and train is None:
    _fail(f"--train is required for mode {loaded.pipeline.mode}", EXIT_USAGE)
  missing = loaded.missing_credentials()
  if missing:
    _fail(f"Missing credentials: set {', '.join(missing)}", EXIT_BACKEND)
  corpus = _load_corpus(dataset)
  train_corpus = _load_corpus(train) if train is not None else None
  try:
    assets = load_prompt_assets(loaded.prompt.assets_dir)
  except (CorpusError, FileNotFoundError) as exc:
    _fail(f"Prompt assets: {exc}", EXIT_DATA)
  try:
    chat_backend = build_chat_backend(loaded.backend, gold=corpus)
  except BackendError as exc:
    _fail(str(exc), EXIT_BACKEND)
  except (CorpusError, FileNotFoundError, ValueError) as exc:
    _fail(str(exc), EXIT_DATA)
  loaded.ensure_storage_paths()
  pipeline = ExtractionPipeline(loaded, chat_backend, assets)
  summary = pipeline.run(corpus, train_corpus, out.expanduser().resolve())
  typer.echo(f"Extraction completed. Summary: {json.dumps(summary)}")
  if summary["failure_ratio"] > loaded.pipeline.max_failure_ratio:
    _fail(
      f"{summary['failed']} of {summary['sentences']} sentences failed "
      f"(limit {loaded.pipeline.max_failure_ratio:.0%})",
      EXIT_BACKEND,
    )


@cli_app.command()
def validate(
  dataset: Optional[Path] = typer.Option(None, "--dataset"),
  train: Optional[Path] = typer.Option(None, "--train"),
  backend: Optional[str] = typer.Option(None, "--backend"),
  mode: Optional[str] = typer.Option(None, "--mode"),
  config: Optional[Path] = typer.Option(None, "--config", "-c"),
) -> None:
  """Check configuration, input files and credentials without calling any backend."""
  configure_logging()
  loaded = _load(config, {"pipeline.mode": mode, **_backend_overrides(backend)})
  for path in (dataset, train):
    if path is not None:
      corpus = _load_corpus(path)
      typer.echo(f"{path}: {len(corpus)} sentences, {sum(len(item.gold) for item in corpus)} gold triplets")
  if loaded.needs_retrieval and dataset is not None and train is None:
    _fail(f"--train is required for mode {loaded.pipeline.mode}", EXIT_USAGE)
  if loaded.backend.kind == "mock":
    fixture = loaded.backend.mock_fixture
    if fixture is None or not fixture.exists():
      _fail(f"Mock fixture not found: {fixture}", EXIT_DATA)
  try:
    load_prompt_assets(loaded.prompt.assets_dir)
  except (CorpusError, FileNotFoundError) as exc:
    _fail(f"Prompt assets: {exc}", EXIT_DATA)
  missing = loaded.missing_credentials()
  if missing:
    _fail(f"Missing credentials: set {', '.join(missing)}", EXIT_BACKEND)
  typer.echo("Configuration validated successfully.")


def _cache(config: Optional[Path], cache_dir: Optional[Path]) -> ResponseCache:
  loaded = _load(config, {"storage.cache_dir": _absolute(cache_dir)})
  return ResponseCache(loaded.storage.cache_dir)


@cache_app.command("stats")
def cache_stats(
  cache_dir: Optional[Path] = typer.Option(None, "--cache-dir"),
  config: Optional[Path] = typer.Option(None, "--config", "-c"),
) -> None:
  """Print the entry count and total size of the response cache."""
  configure_logging()
  cache = _cache(config, cache_dir)
  try:
    stats = cache.stats()
  except OSError as exc:
    _fail(f"Cannot read cache {cache.directory}: {exc}", EXIT_DATA)
  typer.echo(json.dumps(stats, indent=2))


@cache_app.command("clear")
def cache_clear(
  yes: bool = typer.Option(False, "--yes", help="Confirm deleting every cached response."),
  cache_dir: Optional[Path] = typer.Option(None, "--cache-dir"),
  config: Optional[Path] = typer.Option(None, "--config", "-c"),
) -> None:
  """Delete every cached response."""
  configure_logging()
  cache = _cache(config, cache_dir)
  if not yes:
    _fail(f"Refusing to clear {cache.directory} without --yes", EXIT_USAGE)
  try:
    removed = cache.clear()
  except OSError as exc:
    _fail(f"Cannot clear cache {cache.directory}: {exc}", EXIT_DATA)
  typer.echo(f"Removed {removed} cached responses from {cache.directory}.")


if __name__ == "__main__":
  cli_app()
