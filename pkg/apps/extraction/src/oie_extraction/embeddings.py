from __future__ import annotations

import hashlib
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from oie_core.config import env_secret
from oie_core.logging import get_logger
from oie_core.text import normalize_text
from openai import OpenAI, OpenAIError

from .config import EmbeddingSettings
from .errors import BackendError, backend_error_from_openai

logger = get_logger(__name__)


class EmbeddingBackend(Protocol):
  backend_id: str
  max_in_flight: int

  def embed_batch(self, texts: Sequence[str]) -> List[np.ndarray]:
    ...


class HashedBagOfWordsBackend:
  """Offline embedder: each normalized token bumps bucket sha256(token) mod dim, then L2-normalize."""

  def __init__(self, dim: int = 256):
    if dim <= 0:
      raise ValueError("dim must be positive")
    self.dim = dim
    self.backend_id = f"hashed-bow-{dim}"
    self.max_in_flight = 8
    self.calls = 0
    self._lock = threading.Lock()

  def bucket(self, token: str) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % self.dim

  def embed_batch(self, texts: Sequence[str]) -> List[np.ndarray]:
    with self._lock:
      self.calls += 1
    vectors = []
    for text in texts:
      vector = np.zeros(self.dim, dtype=np.float64)
      for token in normalize_text(text):
        vector[self.bucket(token)] += 1.0
      norm = np.linalg.norm(vector)
      if norm > 0:
        vector = vector / norm
      vectors.append(vector)
    return vectors


class OpenAIEmbeddingBackend:
  """Remote embedding endpoint speaking the OpenAI `/embeddings` protocol."""

  def __init__(
    self,
    model: str,
    api_key: str,
    base_url: Optional[str] = None,
    max_retries: int = 3,
    backoff_seconds: float = 1.0,
    max_in_flight: int = 4,
    client: Optional[OpenAI] = None,
  ):
    self.client = client or OpenAI(api_key=api_key, base_url=base_url, max_retries=0)
    self.model = model
    self.backend_id = f"openai-embeddings:{model}"
    self.max_retries = max_retries
    self.backoff_seconds = backoff_seconds
    self.max_in_flight = max_in_flight
    self.calls = 0
    self._lock = threading.Lock()

  def embed_batch(self, texts: Sequence[str]) -> List[np.ndarray]:
    attempt = 0
    while True:
      with self._lock:
        self.calls += 1
      try:
        response = self.client.embeddings.create(model=self.model, input=list(texts))
        return self._vectors(response, len(texts))
      except OpenAIError as exc:
        error = backend_error_from_openai(exc, self.backend_id)
      if not error.retriable or attempt >= self.max_retries:
        raise error
      sleep_for = self.backoff_seconds * (2**attempt)
      attempt += 1
      logger.warning(
        "Embedding batch failed (attempt %s/%s): %s. Retrying in %.1fs",
        attempt,
        self.max_retries,
        error,
        sleep_for,
      )
      time.sleep(sleep_for)

  def _vectors(self, response: object, expected: int) -> List[np.ndarray]:
    data = getattr(response, "data", None)
    if not data or len(data) != expected:
      raise BackendError(
        f"Expected {expected} embeddings, received {len(data or [])}",
        retriable=False,
        backend_id=self.backend_id,
        excerpt=repr(response)[:200],
      )
    vectors = []
    for item in data:
      vector = np.asarray(getattr(item, "embedding", None) or [], dtype=np.float64)
      if vector.ndim != 1 or vector.size == 0 or not np.all(np.isfinite(vector)):
        raise BackendError(
          "Malformed embedding payload",
          retriable=False,
          backend_id=self.backend_id,
          excerpt=repr(item)[:200],
        )
      vectors.append(vector)
    return vectors


class Embedder:
  """Per-run embedding cache keyed by (backend id, text), batching misses across threads.

  A text already being embedded by another thread is awaited rather than requested again.
  """

  def __init__(self, backend: EmbeddingBackend, batch_size: int = 64):
    self.backend = backend
    self.batch_size = max(1, batch_size)
    self._cache: Dict[Tuple[str, str], np.ndarray] = {}
    self._pending: Dict[Tuple[str, str], Future] = {}
    self._lock = threading.Lock()
    self._dim: Optional[int] = None

  @property
  def backend_id(self) -> str:
    return self.backend.backend_id

  def embed(self, text: str) -> np.ndarray:
    return self.embed_many([text])[0]

  def embed_many(self, texts: Sequence[str]) -> List[np.ndarray]:
    for text in texts:
      if not text.strip():
        raise ValueError("Cannot embed empty text")
    owned, waiting = self._claim(texts)
    if owned:
      self._embed_owned(owned)
    for future in waiting:
      future.result()
    with self._lock:
      return [self._cache[(self.backend_id, text)] for text in texts]

  def _claim(self, texts: Iterable[str]) -> Tuple[Dict[str, Future], List[Future]]:
    owned: Dict[str, Future] = {}
    waiting: List[Future] = []
    with self._lock:
      for text in texts:
        key = (self.backend_id, text)
        if text in owned or key in self._cache:
          continue
        pending = self._pending.get(key)
        if pending is not None:
          waiting.append(pending)
          continue
        future: Future = Future()
        self._pending[key] = future
        owned[text] = future
    return owned, waiting

  def _embed_owned(self, owned: Dict[str, Future]) -> None:
    missing = list(owned)
    batches = list(self._batched(missing))
    try:
      workers = max(1, min(self.backend.max_in_flight, len(batches)))
      with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(self.backend.embed_batch, batches))
      with self._lock:
        for batch, vectors in zip(batches, results):
          for text, vector in zip(batch, vectors):
            self._check_dim(vector)
            self._cache[(self.backend_id, text)] = vector
    except BaseException as exc:
      self._release(owned, exc)
      raise
    self._release(owned, None)
    logger.debug("Embedded %s new texts in %s batches", len(missing), len(batches))

  def _release(self, owned: Dict[str, Future], error: Optional[BaseException]) -> None:
    with self._lock:
      for text in owned:
        self._pending.pop((self.backend_id, text), None)
    for future in owned.values():
      if error is None:
        future.set_result(None)
      else:
        future.set_exception(error)

  def _batched(self, items: Sequence[str]) -> Iterable[Sequence[str]]:
    for idx in range(0, len(items), self.batch_size):
      yield items[idx : idx + self.batch_size]

  def _check_dim(self, vector: np.ndarray) -> None:
    if self._dim is None:
      self._dim = int(vector.shape[0])
    elif vector.shape[0] != self._dim:
      raise BackendError(
        f"Embedding dimension changed from {self._dim} to {vector.shape[0]}",
        retriable=False,
        backend_id=self.backend_id,
      )


def build_embedding_backend(settings: EmbeddingSettings) -> EmbeddingBackend:
  if settings.kind == "hashed":
    return HashedBagOfWordsBackend(dim=settings.dim)
  api_key = env_secret(settings.api_key_env)
  if api_key is None:
    raise BackendError(f"missing credentials: set {settings.api_key_env}", retriable=False, backend_id="embeddings")
  return OpenAIEmbeddingBackend(model=settings.model, api_key=api_key, base_url=settings.base_url)
