from __future__ import annotations

import time
from dataclasses import dataclass
from typing import List, Union

import numpy as np
from oie_core.logging import get_logger

from .corpus import AnnotatedCorpus, AnnotatedSentence, Sentence
from .embeddings import EmbeddingBackend, Embedder
from .errors import EmptyPoolError

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
  values: np.ndarray

  def __post_init__(self) -> None:
    values = np.asarray(self.values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
      raise ValueError("Embedding must be a non-empty 1-D vector")
    if not np.all(np.isfinite(values)):
      raise ValueError("Embedding contains non-finite values")
    object.__setattr__(self, "values", values)

  @property
  def dim(self) -> int:
    return int(self.values.shape[0])


@dataclass(frozen=True)
class PoolEntry:
  item: AnnotatedSentence
  similarity: float
  corpus_index: int


@dataclass(frozen=True)
class DemonstrationPool:
  entries: tuple[PoolEntry, ...]
  target_id: str

  def __len__(self) -> int:
    return len(self.entries)

  @property
  def demos(self) -> List[AnnotatedSentence]:
    return [entry.item for entry in self.entries]

  @property
  def ids(self) -> List[str]:
    return [entry.item.id for entry in self.entries]


def embed(text: str, backend: Union[Embedder, EmbeddingBackend]) -> EmbeddingVector:
  if not text.strip():
    raise ValueError("Cannot embed empty text")
  if isinstance(backend, Embedder):
    return EmbeddingVector(backend.embed(text))
  return EmbeddingVector(backend.embed_batch([text])[0])


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
  if a.dim != b.dim:
    raise ValueError(f"Dimension mismatch: {a.dim} vs {b.dim}")
  norm_a = float(np.linalg.norm(a.values))
  norm_b = float(np.linalg.norm(b.values))
  if norm_a == 0.0 or norm_b == 0.0:
    raise ValueError("Cosine similarity is undefined for a zero vector")
  value = float(np.dot(a.values, b.values)) / (norm_a * norm_b)
  return max(-1.0, min(1.0, value))


def _is_zero(vector: EmbeddingVector) -> bool:
  return not np.any(vector.values)


def select_demonstrations(
  target: Sentence,
  corpus: AnnotatedCorpus,
  pool_size: int,
  embedder: Embedder,
  leakage_guard: bool = True,
) -> DemonstrationPool:
  """Exhaustively score every corpus sentence against the target and keep the top `pool_size`.

  Ties keep corpus order. With the leakage guard on, sentences whose normalized text equals
  the target's are never candidates. A zero embedding on either side scores 0.0.
  """
  if len(corpus) == 0:
    raise ValueError("Cannot select demonstrations from an empty corpus")
  if pool_size <= 0:
    raise ValueError("pool_size must be positive")
  start = time.perf_counter()
  candidates = [
    (idx, item)
    for idx, item in enumerate(corpus.items)
    if not (leakage_guard and item.sentence.tokens == target.tokens)
  ]
  if not candidates:
    raise EmptyPoolError(f"empty pool: every corpus sentence matches target {target.id!r}")
  target_vector = EmbeddingVector(embedder.embed(target.text))
  if _is_zero(target_vector):
    logger.warning("Target %s embeds to a zero vector; demonstrations fall back to corpus order", target.id)
  vectors = embedder.embed_many([item.text for _, item in candidates])
  scored: List[PoolEntry] = []
  zero_candidates = 0
  for (idx, item), vector in zip(candidates, vectors):
    candidate = EmbeddingVector(vector)
    if _is_zero(candidate):
      zero_candidates += 1
    if _is_zero(target_vector) or _is_zero(candidate):
      similarity = 0.0
    else:
      similarity = cosine_similarity(target_vector, candidate)
    scored.append(PoolEntry(item=item, similarity=similarity, corpus_index=idx))
  if zero_candidates:
    logger.warning("%s corpus sentences embed to a zero vector and score 0.0 for %s", zero_candidates, target.id)
  scored.sort(key=lambda entry: (-entry.similarity, entry.corpus_index))
  pool = DemonstrationPool(entries=tuple(scored[:pool_size]), target_id=target.id)
  logger.debug(
    "Selected %s/%s demonstrations for %s in %.3fs (top similarity %.3f)",
    len(pool),
    len(candidates),
    target.id,
    time.perf_counter() - start,
    pool.entries[0].similarity,
  )
  return pool
