from __future__ import annotations

from typing import Optional

from openai import APIConnectionError, APIStatusError, RateLimitError


class CorpusError(ValueError):
  pass


class EmptyPoolError(ValueError):
  pass


class DegenerateTripletError(ValueError):
  pass


class BackendError(RuntimeError):
  def __init__(
    self,
    message: str,
    retriable: bool,
    backend_id: str = "",
    excerpt: Optional[str] = None,
  ):
    super().__init__(message)
    self.retriable = retriable
    self.backend_id = backend_id
    self.excerpt = excerpt

  def __str__(self) -> str:
    text = super().__str__()
    if self.backend_id:
      text = f"[{self.backend_id}] {text}"
    if self.excerpt:
      text = f"{text} (payload: {self.excerpt!r})"
    return text


def backend_error_from_openai(exc: Exception, backend_id: str) -> BackendError:
  """Transport errors, 429 and 5xx are retriable; everything else is fatal."""
  if isinstance(exc, (APIConnectionError, RateLimitError)):
    return BackendError(str(exc), retriable=True, backend_id=backend_id)
  if isinstance(exc, APIStatusError):
    return BackendError(str(exc), retriable=exc.status_code >= 500, backend_id=backend_id)
  return BackendError(str(exc), retriable=False, backend_id=backend_id)
