from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from oie_core.config import env_secret
from oie_core.logging import get_logger
from oie_core.text import normalize_text
from openai import OpenAI, OpenAIError

from .config import BackendSettings
from .corpus import AnnotatedSentence
from .errors import BackendError, CorpusError, backend_error_from_openai
from .gateway import ChatBackend, CompletionParams, transcript_digest
from .promptkit import ChatMessage, has_demonstrations, query_target
from .triplets import Triplet, canonical_key, format_triplets

logger = get_logger(__name__)

DEFAULT_KEY = "*"
NON_QUERY_ANSWER = "(no triplets)"
DISTRACTOR_PREDICATE = "is linked to"


class OpenAIChatBackend:
  """Chat-completions endpoint (OpenAI or any compatible `base_url`).

  Retries belong to the gateway, so the client itself never retries.
  """

  def __init__(
    self,
    api_key: str,
    base_url: Optional[str] = None,
    max_in_flight: int = 4,
    client: Optional[OpenAI] = None,
  ):
    self.client = client or OpenAI(api_key=api_key, base_url=base_url, max_retries=0)
    self.backend_id = f"http:{base_url or 'openai'}"
    self.max_in_flight = max_in_flight

  def generate(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
    request = {
      "model": params.model,
      "messages": [message.to_dict() for message in messages],
      "temperature": params.temperature,
      "max_tokens": params.max_tokens,
    }
    if params.seed_hint is not None:
      request["seed"] = params.seed_hint
    try:
      response = self.client.chat.completions.create(**request)
    except OpenAIError as exc:
      raise backend_error_from_openai(exc, self.backend_id) from exc
    choices = getattr(response, "choices", None)
    if not choices:
      raise BackendError("Response has no choices", retriable=False, backend_id=self.backend_id, excerpt=repr(response)[:200])
    message = getattr(choices[0], "message", None)
    content = getattr(message, "content", None)
    if content is None:
      logger.warning("Backend %s returned a choice without text content", self.backend_id)
      return ""
    if not isinstance(content, str):
      raise BackendError("Message content is not text", retriable=False, backend_id=self.backend_id, excerpt=repr(content)[:200])
    return content


class ScriptedBackend:
  """Canned responses looked up by transcript digest, then by target sentence, then the `*` default."""

  def __init__(
    self,
    by_digest: Dict[str, str],
    by_sentence: Optional[Dict[str, str]] = None,
    default: Optional[str] = None,
    name: str = "scripted",
  ):
    self.by_digest = dict(by_digest)
    self.by_sentence = dict(by_sentence or {})
    self.default = default
    self.backend_id = f"mock:{name}"
    self.max_in_flight = 4
    self.calls = 0
    self._lock = threading.Lock()

  def generate(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
    with self._lock:
      self.calls += 1
    digest = transcript_digest(messages)
    if digest in self.by_digest:
      return self.by_digest[digest]
    target = query_target(messages[-1]) if messages else None
    if target is not None and target in self.by_sentence:
      return self.by_sentence[target]
    if self.default is not None:
      return self.default
    if target is None:
      return NON_QUERY_ANSWER
    raise BackendError(
      f"No scripted response for transcript {digest[:12]}",
      retriable=False,
      backend_id=self.backend_id,
      excerpt=target[:80],
    )


def load_scripted_backend(path: Path) -> ScriptedBackend:
  """Read a fixture of `{"key": digest|"*", "response": ...}` or `{"sentence": ..., "response": ...}` lines."""
  if not path.exists():
    raise FileNotFoundError(f"Mock fixture not found: {path}")
  by_digest: Dict[str, str] = {}
  by_sentence: Dict[str, str] = {}
  default: Optional[str] = None
  with path.open("r", encoding="utf-8") as handle:
    for line_no, line in enumerate(handle, start=1):
      if not line.strip():
        continue
      try:
        entry = json.loads(line)
      except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
      response = entry.get("response") if isinstance(entry, dict) else None
      if not isinstance(response, str):
        raise CorpusError(f"{path}:{line_no}: entry needs a string 'response'")
      if entry.get("key") == DEFAULT_KEY:
        default = response
      elif isinstance(entry.get("key"), str):
        by_digest[entry["key"]] = response
      elif isinstance(entry.get("sentence"), str):
        by_sentence[entry["sentence"]] = response
      else:
        raise CorpusError(f"{path}:{line_no}: entry needs a 'key' or a 'sentence'")
  logger.info(
    "Loaded scripted backend %s: %s digest entries, %s sentence entries, default=%s",
    path.stem,
    len(by_digest),
    len(by_sentence),
    default is not None,
  )
  return ScriptedBackend(by_digest, by_sentence, default, name=path.stem)


class SyntheticExtractorBackend:
  """Offline extractor that answers from gold annotations with seeded mistakes.

  Each answer draws from `default_rng([seed, first 8 bytes of the transcript digest])`: every gold
  triplet is dropped with probability `p_drop`, then one distractor `(token, "is linked to", token)`
  built from the target's tokens is added with probability `p_noise`. Without demonstrations in
  the transcript both probabilities are scaled by `zero_shot_penalty`, capped at 1.
  """

  def __init__(
    self,
    gold: Iterable[AnnotatedSentence],
    seed: int = 0,
    p_drop: float = 0.3,
    p_noise: float = 0.5,
    zero_shot_penalty: float = 1.5,
  ):
    for name, value in (("p_drop", p_drop), ("p_noise", p_noise)):
      if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be within [0, 1]")
    if zero_shot_penalty < 0:
      raise ValueError("zero_shot_penalty must be non-negative")
    self.gold: Dict[str, tuple[Triplet, ...]] = {}
    for item in gold:
      self.gold.setdefault(item.text, item.gold)
    self.seed = seed
    self.p_drop = p_drop
    self.p_noise = p_noise
    self.zero_shot_penalty = zero_shot_penalty
    self.backend_id = f"synthetic:{seed}:{p_drop}:{p_noise}:{zero_shot_penalty}"
    self.max_in_flight = 8
    self.calls = 0
    self._lock = threading.Lock()

  def rates(self, messages: Sequence[ChatMessage]) -> tuple[float, float]:
    if has_demonstrations(messages):
      return self.p_drop, self.p_noise
    return min(1.0, self.p_drop * self.zero_shot_penalty), min(1.0, self.p_noise * self.zero_shot_penalty)

  def generator(self, messages: Sequence[ChatMessage]) -> np.random.Generator:
    digest = transcript_digest(messages)
    return np.random.default_rng([self.seed, int(digest[:16], 16)])

  def sample(self, messages: Sequence[ChatMessage], gold: Sequence[Triplet], target: str) -> List[Triplet]:
    p_drop, p_noise = self.rates(messages)
    rng = self.generator(messages)
    kept = [triplet for triplet in gold if not rng.random() < p_drop]
    if rng.random() < p_noise:
      tokens = normalize_text(target)
      if len(tokens) >= 2:
        i, j = rng.choice(len(tokens), size=2, replace=False)
        distractor = Triplet(tokens[int(i)], DISTRACTOR_PREDICATE, tokens[int(j)])
        if canonical_key(distractor) not in {canonical_key(triplet) for triplet in kept}:
          kept.append(distractor)
    return kept

  def generate(self, messages: Sequence[ChatMessage], params: CompletionParams) -> str:
    with self._lock:
      self.calls += 1
    target = query_target(messages[-1]) if messages else None
    if target is None:
      return NON_QUERY_ANSWER
    if target not in self.gold:
      raise BackendError(
        "Synthetic extractor has no annotation for the target sentence",
        retriable=False,
        backend_id=self.backend_id,
        excerpt=target[:80],
      )
    return format_triplets(self.sample(messages, self.gold[target], target))


def build_chat_backend(settings: BackendSettings, gold: Iterable[AnnotatedSentence] = ()) -> ChatBackend:
  """Construct the configured chat backend; `gold` feeds the synthetic extractor."""
  if settings.kind == "http":
    api_key = env_secret(settings.api_key_env)
    if api_key is None:
      raise BackendError(f"missing credentials: set {settings.api_key_env}", retriable=False, backend_id="http")
    return OpenAIChatBackend(api_key=api_key, base_url=settings.base_url, max_in_flight=settings.max_in_flight)
  if settings.kind == "mock":
    if settings.mock_fixture is None:
      raise ValueError("backend.kind 'mock' needs backend.mock_fixture")
    return load_scripted_backend(settings.mock_fixture)
  synthetic = settings.synthetic
  return SyntheticExtractorBackend(
    gold,
    seed=synthetic.seed,
    p_drop=synthetic.p_drop,
    p_noise=synthetic.p_noise,
    zero_shot_penalty=synthetic.zero_shot_penalty,
  )
