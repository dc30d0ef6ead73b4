from __future__ import annotations

import hashlib
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Tuple, Union

from oie_core.logging import get_logger

from .errors import BackendError
from .promptkit import ChatMessage, Transcript

logger = get_logger(__name__)

CACHE_SUFFIX = ".txt"


@dataclass(frozen=True)
class CompletionParams:
  model: str
  temperature: float = 0.7
  max_tokens: int = 512
  seed_hint: Optional[int] = None

  def __post_init__(self) -> None:
    if not self.model:
      raise ValueError("model must be non-empty")
    if not 0.0 <= self.temperature <= 2.0:
      raise ValueError("temperature must be within [0, 2]")
    if self.max_tokens <= 0:
      raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class RawResponse:
  text: str
  backend_id: str
  cached: bool
  latency_ms: int
  transcript: Optional[Transcript] = None
  calls: int = 0
  cache_hits: int = 0


class ChatBackend(Protocol):
  backend_id: str
  max_in_flight: int

  def generate(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
    ...


Messages = Union[Transcript, Sequence[ChatMessage]]


def _messages(transcript: Messages) -> Tuple[ChatMessage, ...]:
  if isinstance(transcript, Transcript):
    return transcript.messages
  return tuple(transcript)


def transcript_digest(transcript: Messages) -> str:
  hasher = hashlib.sha256()
  for message in _messages(transcript):
    hasher.update(f"{message.role}\x00{message.content}\x00".encode("utf-8"))
  return hasher.hexdigest()


def cache_key(backend_id: str, transcript: Messages, params: CompletionParams) -> str:
  """SHA-256 over `backend_id, model, temperature (%.6f), max_tokens`, each NUL-terminated,
  followed by `role NUL content NUL` for every message."""
  hasher = hashlib.sha256()
  header = f"{backend_id}\x00{params.model}\x00{params.temperature:.6f}\x00{params.max_tokens}\x00"
  hasher.update(header.encode("utf-8"))
  for message in _messages(transcript):
    hasher.update(f"{message.role}\x00{message.content}\x00".encode("utf-8"))
  return hasher.hexdigest()


class ResponseCache:
  """Content-addressed directory: one `<key>.txt` file per response, written atomically."""

  def __init__(self, directory: Path):
    self.directory = directory

  def path_for(self, key: str) -> Path:
    return self.directory / f"{key}{CACHE_SUFFIX}"

  def get(self, key: str) -> Optional[str]:
    path = self.path_for(key)
    if not path.exists():
      return None
    return path.read_bytes().decode("utf-8")

  def put(self, key: str, text: str) -> None:
    self.directory.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(dir=self.directory, prefix=".tmp-", suffix=CACHE_SUFFIX, delete=False)
    try:
      with handle:
        handle.write(text.encode("utf-8"))
      os.replace(handle.name, self.path_for(key))
    except BaseException:
      Path(handle.name).unlink(missing_ok=True)
      raise

  def entries(self) -> list[Path]:
    if not self.directory.exists():
      return []
    return sorted(path for path in self.directory.glob(f"*{CACHE_SUFFIX}") if not path.name.startswith(".tmp-"))

  def stats(self) -> dict:
    entries = self.entries()
    return {
      "path": str(self.directory),
      "exists": self.directory.exists(),
      "entries": len(entries),
      "bytes": sum(path.stat().st_size for path in entries),
    }

  def clear(self) -> int:
    if not self.directory.exists():
      return 0
    removed = 0
    for path in self.directory.glob(f"*{CACHE_SUFFIX}"):
      path.unlink()
      if not path.name.startswith(".tmp-"):
        removed += 1
    return removed


class LLMGateway:
  """Runs transcripts against one chat backend with caching, bounded retries and an in-flight limit."""

  def __init__(
    self,
    backend: ChatBackend,
    cache: Optional[ResponseCache] = None,
    max_retries: int = 3,
    backoff_seconds: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
  ):
    self.backend = backend
    self.cache = cache
    self.max_retries = max_retries
    self.backoff_seconds = backoff_seconds
    self._sleep = sleep
    self._slots = threading.BoundedSemaphore(max(1, backend.max_in_flight))
    self._lock = threading.Lock()
    self.calls = 0
    self.cache_hits = 0

  @property
  def backend_id(self) -> str:
    return self.backend.backend_id

  @property
  def max_in_flight(self) -> int:
    return max(1, self.backend.max_in_flight)

  def complete(self, transcript: Transcript, params: CompletionParams) -> RawResponse:
    """Complete the final turn, first playing out the quiz exchange when one is pending.

    The returned response carries the full transcript including the final assistant answer.
    """
    if not transcript.messages:
      raise ValueError("Cannot complete an empty transcript")
    start = time.perf_counter()
    turns = []
    if transcript.awaiting_quiz:
      quiz_text, quiz_cached, quiz_calls = self._complete_messages(transcript.quiz_turn(), params)
      turns.append((quiz_cached, quiz_calls))
      transcript = transcript.resolve_quiz(quiz_text)
    text, cached, calls = self._complete_messages(transcript.messages, params)
    turns.append((cached, calls))
    final = transcript.append(ChatMessage("assistant", text if text else "(empty response)"))
    return RawResponse(
      text=text,
      backend_id=self.backend_id,
      cached=all(hit for hit, _ in turns),
      latency_ms=int((time.perf_counter() - start) * 1000),
      transcript=final,
      calls=sum(count for _, count in turns),
      cache_hits=sum(1 for hit, _ in turns if hit),
    )

  def _complete_messages(self, messages: Sequence[ChatMessage], params: CompletionParams) -> Tuple[str, bool, int]:
    key = cache_key(self.backend_id, messages, params)
    if self.cache is not None:
      stored = self.cache.get(key)
      if stored is not None:
        with self._lock:
          self.cache_hits += 1
        return stored, True, 0
    text, attempts = self._call_with_retries(messages, params)
    if self.cache is not None:
      self.cache.put(key, text)
    return text, False, attempts

  def _call_with_retries(self, messages: Sequence[ChatMessage], params: CompletionParams) -> Tuple[str, int]:
    attempt = 0
    while True:
      try:
        with self._slots:
          with self._lock:
            self.calls += 1
          return self.backend.generate(messages, params), attempt + 1
      except BackendError as exc:
        if not exc.retriable or attempt >= self.max_retries:
          raise
        sleep_for = self.backoff_seconds * (2**attempt)
        attempt += 1
        logger.warning(
          "Backend call failed (attempt %s/%s): %s. Retrying in %.1fs",
          attempt,
          self.max_retries,
          exc,
          sleep_for,
        )
        self._sleep(sleep_for)
