from __future__ import annotations

from collections import Counter
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from oie_core.logging import get_logger

from .corpus import AnnotatedSentence, Sentence
from .errors import BackendError
from .gateway import CompletionParams, LLMGateway, RawResponse
from .promptkit import PromptConfig, Transcript, build_preamble, extraction_query
from .retrieval import DemonstrationPool
from .triplets import Triplet, canonical_key, parse_response

logger = get_logger(__name__)

COUNT_MODES = ("concat", "run_fraction")
THRESHOLD_RULES = ("keep_low", "keep_high")


@dataclass(frozen=True)
class EnsembleConfig:
  ensemble_size: int = 5
  subset_size: int = 3
  threshold: float = 0.8
  seed: int = 0
  count_mode: str = "concat"
  threshold_rule: str = "keep_low"

  def __post_init__(self) -> None:
    if self.ensemble_size <= 0:
      raise ValueError("ensemble_size must be positive")
    if self.subset_size <= 0:
      raise ValueError("subset_size must be positive")
    if not 0.0 <= self.threshold <= 1.0:
      raise ValueError("threshold must be within [0, 1]")
    if self.count_mode not in COUNT_MODES:
      raise ValueError(f"Unsupported count mode: {self.count_mode}")
    if self.threshold_rule not in THRESHOLD_RULES:
      raise ValueError(f"Unsupported threshold rule: {self.threshold_rule}")


@dataclass(frozen=True)
class DemonstrationSubset:
  demos: Tuple[AnnotatedSentence, ...]
  draw_index: int
  seed: int

  @property
  def ids(self) -> List[str]:
    return [demo.id for demo in self.demos]


@dataclass(frozen=True)
class ExtractionRun:
  subset: DemonstrationSubset
  transcript: Transcript
  raw: Optional[RawResponse]
  triplets: Tuple[Triplet, ...] = ()
  warnings: Tuple[str, ...] = ()
  error: Optional[str] = None

  @property
  def ok(self) -> bool:
    return self.error is None


@dataclass(frozen=True)
class ScoredTriplet:
  triplet: Triplet
  key: str
  count: int
  uncertainty: float


def sample_subsets(pool: DemonstrationPool, config: EnsembleConfig) -> List[DemonstrationSubset]:
  """Draw `ensemble_size` subsets without replacement, draw i using `default_rng([seed, i])`."""
  if len(pool) == 0:
    raise ValueError("Cannot sample subsets from an empty pool")
  size = config.subset_size
  if size > len(pool):
    logger.warning(
      "subset_size %s exceeds pool size %s for %s; clamping",
      size,
      len(pool),
      pool.target_id,
    )
    size = len(pool)
  demos = pool.demos
  subsets = []
  for draw_index in range(config.ensemble_size):
    rng = np.random.default_rng([config.seed, draw_index])
    picks = rng.choice(len(demos), size=size, replace=False)
    subsets.append(
      DemonstrationSubset(
        demos=tuple(demos[int(idx)] for idx in picks),
        draw_index=draw_index,
        seed=config.seed,
      )
    )
  return subsets


def run_ensemble(
  target: Sentence,
  subsets: Sequence[DemonstrationSubset],
  prompt_config: PromptConfig,
  gateway: LLMGateway,
  params: CompletionParams,
) -> List[ExtractionRun]:
  """One extraction per subset, run concurrently and returned in draw order.

  A member whose backend call fails is kept as an errored run with no triplets.
  """
  transcripts = [build_preamble(prompt_config, subset.demos).append(extraction_query(target)) for subset in subsets]
  results: List[Optional[ExtractionRun]] = [None] * len(subsets)
  workers = max(1, min(gateway.max_in_flight, len(subsets)))
  with ThreadPoolExecutor(max_workers=workers) as executor:
    future_map = {
      executor.submit(gateway.complete, transcript, params): idx for idx, transcript in enumerate(transcripts)
    }
    for future in as_completed(future_map):
      idx = future_map[future]
      subset = subsets[idx]
      try:
        raw = future.result()
      except BackendError as exc:
        logger.warning("Ensemble member %s for %s failed: %s", subset.draw_index, target.id, exc)
        results[idx] = ExtractionRun(subset=subset, transcript=transcripts[idx], raw=None, error=str(exc))
        continue
      triplets, warnings = parse_response(raw.text)
      for warning in warnings:
        logger.warning("Response for %s (member %s): %s", target.id, subset.draw_index, warning)
      results[idx] = ExtractionRun(
        subset=subset,
        transcript=raw.transcript or transcripts[idx],
        raw=raw,
        triplets=tuple(triplets),
        warnings=tuple(warnings),
      )
  return [run for run in results if run is not None]


def total_occurrences(runs: Sequence[ExtractionRun]) -> int:
  return sum(len({canonical_key(triplet) for triplet in run.triplets}) for run in runs)


def compute_uncertainty(runs: Sequence[ExtractionRun], count_mode: str = "concat") -> List[ScoredTriplet]:
  """Score each distinct triplet by how many runs produced it.

  concat: u = 1 - count / N with N the total occurrences over all runs.
  run_fraction: u = 1 - count / M with M the number of runs, errored runs included.
  The surface form reported for a key is its lexicographically smallest variant.
  """
  if not runs:
    raise ValueError("compute_uncertainty needs at least one run")
  if count_mode not in COUNT_MODES:
    raise ValueError(f"Unsupported count mode: {count_mode}")
  counts: Counter[str] = Counter()
  surfaces: Dict[str, Tuple[str, str, str]] = {}
  for run in runs:
    seen = set()
    for triplet in run.triplets:
      key = canonical_key(triplet)
      if key in seen:
        continue
      seen.add(key)
      counts[key] += 1
      surface = triplet.as_tuple()
      if key not in surfaces or surface < surfaces[key]:
        surfaces[key] = surface
  total = sum(counts.values())
  if total == 0:
    return []
  denominator = total if count_mode == "concat" else len(runs)
  scored = [
    ScoredTriplet(triplet=Triplet(*surfaces[key]), key=key, count=count, uncertainty=1.0 - count / denominator)
    for key, count in counts.items()
  ]
  scored.sort(key=lambda item: (item.uncertainty, item.key))
  return scored


def filter_scored(scored: Sequence[ScoredTriplet], k: float, rule: str = "keep_low") -> List[ScoredTriplet]:
  if not 0.0 <= k <= 1.0:
    raise ValueError("threshold must be within [0, 1]")
  if rule == "keep_low":
    return [item for item in scored if item.uncertainty <= k]
  if rule == "keep_high":
    return [item for item in scored if item.uncertainty >= k]
  raise ValueError(f"Unsupported threshold rule: {rule}")


def filter_by_threshold(scored: Sequence[ScoredTriplet], k: float, rule: str = "keep_low") -> List[Triplet]:
  return [item.triplet for item in filter_scored(scored, k, rule)]


def single_run_scores(run: ExtractionRun) -> List[ScoredTriplet]:
  """Scores for pipelines without an ensemble: every triplet counts once with uncertainty 0."""
  return [
    ScoredTriplet(triplet=triplet, key=canonical_key(triplet), count=1, uncertainty=0.0) for triplet in run.triplets
  ]
