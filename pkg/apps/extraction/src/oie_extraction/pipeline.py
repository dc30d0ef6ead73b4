from __future__ import annotations

import time
import uuid
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, List, Optional, Tuple

from oie_core.logging import RunLog, get_logger
from oie_core.schema_versions import (
  CACHE_LAYOUT_VERSION,
  CORPUS_FORMAT_VERSION,
  EXTRACTION_RECORD_VERSION,
  RUN_LOG_VERSION,
)

from .config import LoadedConfig
from .corpus import AnnotatedCorpus, AnnotatedSentence
from .embeddings import EmbeddingBackend, Embedder, build_embedding_backend
from .ensemble import (
  DemonstrationSubset,
  EnsembleConfig,
  ExtractionRun,
  ScoredTriplet,
  compute_uncertainty,
  filter_scored,
  run_ensemble,
  sample_subsets,
  single_run_scores,
  total_occurrences,
)
from .errors import BackendError
from .gateway import ChatBackend, CompletionParams, LLMGateway, ResponseCache
from .promptkit import PromptAssets, PromptConfig
from .records import ExtractionRecord, TripletRecord, write_records
from .retrieval import select_demonstrations

logger = get_logger(__name__)


@dataclass
class SentenceOutcome:
  record: ExtractionRecord
  elapsed_seconds: float
  backend_calls: int = 0
  cache_hits: int = 0
  warnings: List[str] = field(default_factory=list)
  error: Optional[str] = None
  backend_failure: bool = False


class ExtractionPipeline:
  """Runs one pipeline mode over a dataset and writes one extraction record per sentence, in input order."""

  def __init__(
    self,
    config: LoadedConfig,
    chat_backend: ChatBackend,
    assets: PromptAssets,
    embedding_factory: Optional[Callable[[], EmbeddingBackend]] = None,
    sleep: Callable[[float], None] = time.sleep,
  ):
    self.config = config
    self.mode = config.pipeline.mode
    cache = ResponseCache(config.storage.cache_dir)
    self.gateway = LLMGateway(
      chat_backend,
      cache,
      max_retries=config.backend.max_retries,
      backoff_seconds=config.backend.backoff_seconds,
      sleep=sleep,
    )
    self.params = CompletionParams(
      model=config.backend.model,
      temperature=config.backend.temperature,
      max_tokens=config.backend.max_tokens,
    )
    self.prompt_config = self._prompt_config(assets)
    self.fixed_demos = assets.fixed_demos[: config.prompt.demo_count]
    self.ensemble_config = EnsembleConfig(
      ensemble_size=config.ensemble.size,
      subset_size=config.ensemble.subset_size,
      threshold=config.ensemble.threshold,
      seed=config.pipeline.seed,
      count_mode=config.ensemble.count_mode,
      threshold_rule=config.ensemble.threshold_rule,
    )
    self._embedding_factory = embedding_factory or (lambda: build_embedding_backend(config.embedding))
    self._embedder: Optional[Embedder] = None
    self.run_log = RunLog(config.storage.run_log_path)

  @property
  def embedder(self) -> Embedder:
    # built on first use so modes without retrieval never touch the embedding backend
    if self._embedder is None:
      self._embedder = Embedder(self._embedding_factory(), batch_size=self.config.embedding.batch_size)
    return self._embedder

  def _prompt_config(self, assets: PromptAssets) -> PromptConfig:
    if self.mode == "zero_shot":
      return PromptConfig(instruction_text=assets.instruction_text, demo_mode="none")
    quiz = assets.quiz[: self.config.prompt.quiz_size]
    if self.mode == "fixed_demo":
      return PromptConfig(
        instruction_text=assets.instruction_text,
        quiz=quiz,
        demo_count=self.config.prompt.demo_count,
        demo_mode="fixed",
        fixed_demos=assets.fixed_demos,
      )
    return PromptConfig(
      instruction_text=assets.instruction_text,
      quiz=quiz,
      demo_count=self.config.prompt.demo_count,
      demo_mode="selected",
    )

  def run(self, dataset: AnnotatedCorpus, train: Optional[AnnotatedCorpus], out_path: Path) -> dict:
    if self.config.needs_retrieval and train is None:
      raise ValueError(f"Mode {self.mode} needs a demonstration corpus")
    run_id = uuid.uuid4().hex
    logger.info("Starting %s extraction over %s sentences (run %s)", self.mode, len(dataset), run_id)
    start = time.perf_counter()
    self.run_log.write(
      "header",
      {
        "run_id": run_id,
        "started_at": datetime.now(timezone.utc).isoformat(),
        "config": self.config.to_dict(),
        "config_path": str(self.config.config_path),
        "backend_id": self.gateway.backend_id,
        "dataset": dataset.source,
        "train": train.source if train is not None else None,
        "versions": {
          "corpus_format": CORPUS_FORMAT_VERSION,
          "extraction_record": EXTRACTION_RECORD_VERSION,
          "run_log": RUN_LOG_VERSION,
          "cache_layout": CACHE_LAYOUT_VERSION,
        },
      },
    )
    outcomes: List[Optional[SentenceOutcome]] = [None] * len(dataset)
    with ThreadPoolExecutor(max_workers=self.config.pipeline.workers) as executor:
      future_map = {executor.submit(self.extract_one, item, train): idx for idx, item in enumerate(dataset.items)}
      for future in as_completed(future_map):
        idx = future_map[future]
        outcome = future.result()
        outcomes[idx] = outcome
        self._log_outcome(run_id, outcome)
    finished = [outcome for outcome in outcomes if outcome is not None]
    write_records((outcome.record for outcome in finished), out_path)
    failed = sum(1 for outcome in finished if outcome.error is not None)
    summary = {
      "run_id": run_id,
      "mode": self.mode,
      "sentences": len(finished),
      "failed": failed,
      "backend_failures": sum(1 for outcome in finished if outcome.backend_failure),
      "failure_ratio": failed / len(finished) if finished else 0.0,
      "triplets": sum(len(outcome.record.triplets) for outcome in finished),
      "backend_calls": self.gateway.calls,
      "cache_hits": self.gateway.cache_hits,
      "duration_seconds": round(time.perf_counter() - start, 3),
      "output": str(out_path),
    }
    self.run_log.write("summary", summary)
    logger.info(
      "Extraction complete in %.2fs: %s sentences, %s failed, %s backend calls, %s cache hits",
      summary["duration_seconds"],
      summary["sentences"],
      failed,
      summary["backend_calls"],
      summary["cache_hits"],
    )
    return summary

  def extract_one(self, item: AnnotatedSentence, train: Optional[AnnotatedCorpus]) -> SentenceOutcome:
    start = time.perf_counter()
    try:
      runs, ensemble = self._runs(item, train)
    except (BackendError, ValueError) as exc:
      logger.error("Extraction failed for %s: %s", item.id, exc)
      return SentenceOutcome(
        record=self._record(item, [], n=0, failed_runs=0, error=str(exc)),
        elapsed_seconds=time.perf_counter() - start,
        error=str(exc),
        backend_failure=isinstance(exc, BackendError),
      )
    failed_runs = [run for run in runs if not run.ok]
    if len(failed_runs) == len(runs):
      error = failed_runs[0].error or "backend failure"
      logger.error("Every extraction run failed for %s: %s", item.id, error)
      kept: List[ScoredTriplet] = []
    else:
      error = None
      kept = self._score(runs, ensemble)
    record = self._record(item, kept, n=total_occurrences(runs), failed_runs=len(failed_runs), error=error)
    return SentenceOutcome(
      record=record,
      elapsed_seconds=time.perf_counter() - start,
      backend_calls=sum(run.raw.calls for run in runs if run.raw is not None),
      cache_hits=sum(run.raw.cache_hits for run in runs if run.raw is not None),
      warnings=[warning for run in runs for warning in run.warnings],
      error=error,
      backend_failure=error is not None,
    )

  def _runs(self, item: AnnotatedSentence, train: Optional[AnnotatedCorpus]) -> Tuple[List[ExtractionRun], bool]:
    seed = self.config.pipeline.seed
    if self.mode == "zero_shot":
      subsets = [DemonstrationSubset(demos=(), draw_index=0, seed=seed)]
    elif self.mode == "fixed_demo":
      subsets = [DemonstrationSubset(demos=tuple(self.fixed_demos), draw_index=0, seed=seed)]
    else:
      if train is None:
        raise ValueError(f"Mode {self.mode} needs a demonstration corpus")
      pool = select_demonstrations(
        item.sentence,
        train,
        self.config.retrieval.pool_size,
        self.embedder,
        leakage_guard=self.config.retrieval.leakage_guard,
      )
      if self.mode == "selected_demo":
        demos = tuple(pool.demos[: self.config.prompt.demo_count])
        subsets = [DemonstrationSubset(demos=demos, draw_index=0, seed=seed)]
      else:
        subsets = sample_subsets(pool, self.ensemble_config)
    ensemble = self.mode == "selected_demo_uncertainty"
    runs = run_ensemble(item.sentence, subsets, self.prompt_config, self.gateway, self.params)
    return runs, ensemble

  def _score(self, runs: List[ExtractionRun], ensemble: bool) -> List[ScoredTriplet]:
    if not ensemble:
      return single_run_scores(runs[0])
    scored = compute_uncertainty(runs, self.ensemble_config.count_mode)
    return filter_scored(scored, self.ensemble_config.threshold, self.ensemble_config.threshold_rule)

  def _record(
    self,
    item: AnnotatedSentence,
    kept: List[ScoredTriplet],
    n: int,
    failed_runs: int,
    error: Optional[str],
  ) -> ExtractionRecord:
    ensemble = self.mode == "selected_demo_uncertainty"
    return ExtractionRecord(
      id=item.id,
      sentence=item.text,
      triplets=[TripletRecord.from_scored(scored) for scored in kept],
      N=n,
      ensemble=self.ensemble_config.ensemble_size if ensemble else 1,
      mode=self.ensemble_config.count_mode if ensemble else "single",
      k=self.ensemble_config.threshold if ensemble else None,
      pipeline=self.mode,
      failed_runs=failed_runs,
      error=error,
    )

  def _log_outcome(self, run_id: str, outcome: SentenceOutcome) -> None:
    self.run_log.write(
      "sentence",
      {
        "run_id": run_id,
        "id": outcome.record.id,
        "status": "failed" if outcome.error else "ok",
        "elapsed_seconds": round(outcome.elapsed_seconds, 4),
        "backend_calls": outcome.backend_calls,
        "cache_hits": outcome.cache_hits,
        "triplets": len(outcome.record.triplets),
        "warnings": outcome.warnings,
        "error": outcome.error,
      },
    )
