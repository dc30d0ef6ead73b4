from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple

from oie_core.logging import get_logger
from oie_core.text import normalize_text
from pydantic import BaseModel, ValidationError, field_validator

from .errors import CorpusError
from .triplets import Triplet, canonical_key

logger = get_logger(__name__)

__all__ = [
  "AnnotatedCorpus",
  "AnnotatedSentence",
  "Sentence",
  "export_jsonl",
  "load_benchmark_tsv",
  "load_corpus",
  "load_jsonl",
  "normalize_text",
]


@dataclass(frozen=True)
class Sentence:
  id: str
  text: str
  tokens: Tuple[str, ...] = field(init=False, compare=False)

  def __post_init__(self) -> None:
    if not self.text.strip():
      raise ValueError(f"Sentence {self.id!r} has empty text")
    object.__setattr__(self, "tokens", tuple(normalize_text(self.text)))

  @property
  def normalized(self) -> str:
    return " ".join(self.tokens)


@dataclass(frozen=True)
class AnnotatedSentence:
  sentence: Sentence
  gold: Tuple[Triplet, ...] = ()

  @property
  def id(self) -> str:
    return self.sentence.id

  @property
  def text(self) -> str:
    return self.sentence.text


@dataclass(frozen=True)
class AnnotatedCorpus:
  items: Tuple[AnnotatedSentence, ...]
  source: str

  def __post_init__(self) -> None:
    seen = set()
    for item in self.items:
      if item.id in seen:
        raise CorpusError(f"Duplicate sentence id {item.id!r} in {self.source}")
      seen.add(item.id)

  def __len__(self) -> int:
    return len(self.items)

  def __iter__(self) -> Iterator[AnnotatedSentence]:
    return iter(self.items)

  @property
  def ids(self) -> List[str]:
    return [item.id for item in self.items]


class _JsonlRecord(BaseModel):
  id: str
  sentence: str
  gold: List[List[str]] = []

  @field_validator("id")
  @classmethod
  def validate_id(cls, value: str) -> str:
    if not value.strip():
      raise ValueError("id must be non-empty")
    return value

  @field_validator("gold")
  @classmethod
  def validate_arity(cls, value: List[List[str]]) -> List[List[str]]:
    for idx, entry in enumerate(value):
      if len(entry) != 3:
        raise ValueError(f"gold entry {idx} has arity {len(entry)}, expected 3 (subject, predicate, object)")
    return value


def annotate(sentence_id: str, text: str, gold: Sequence[Triplet], where: str = "") -> AnnotatedSentence:
  """Build an AnnotatedSentence, dropping duplicate and degenerate gold triplets with a warning."""
  unique: List[Triplet] = []
  seen = set()
  for triplet in gold:
    try:
      key = canonical_key(triplet)
    except ValueError as exc:
      logger.warning("Dropping degenerate gold triplet for %s%s: %s", sentence_id, where, exc)
      continue
    if key in seen:
      logger.warning("Dropping duplicate gold triplet for %s%s: %s", sentence_id, where, triplet.as_tuple())
      continue
    seen.add(key)
    unique.append(triplet)
  return AnnotatedSentence(sentence=Sentence(id=sentence_id, text=text), gold=tuple(unique))


def load_jsonl(path: Path) -> AnnotatedCorpus:
  if not path.exists():
    raise FileNotFoundError(f"Corpus file not found: {path}")
  items: List[AnnotatedSentence] = []
  seen_ids: Dict[str, int] = {}
  with path.open("r", encoding="utf-8") as handle:
    for line_no, line in enumerate(handle, start=1):
      if not line.strip():
        continue
      try:
        payload = json.loads(line)
      except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}:{line_no}: invalid JSON: {exc.msg}") from exc
      try:
        record = _JsonlRecord.model_validate(payload)
      except ValidationError as exc:
        reasons = "; ".join(error["msg"] for error in exc.errors())
        raise CorpusError(f"{path}:{line_no}: {reasons}") from exc
      if record.id in seen_ids:
        raise CorpusError(f"{path}:{line_no}: duplicate id {record.id!r} (first seen on line {seen_ids[record.id]})")
      seen_ids[record.id] = line_no
      try:
        gold = [Triplet.of(*entry) for entry in record.gold]
        items.append(annotate(record.id, record.sentence, gold, where=f" ({path.name}:{line_no})"))
      except ValueError as exc:
        raise CorpusError(f"{path}:{line_no}: {exc}") from exc
  logger.info("Loaded %s sentences from %s", len(items), path)
  return AnnotatedCorpus(items=tuple(items), source=f"{path} (jsonl)")


def load_benchmark_tsv(path: Path) -> AnnotatedCorpus:
  """Read `sentence<TAB>relation<TAB>arg1<TAB>arg2[<TAB>argN...]` rows, grouping rows by sentence."""
  if not path.exists():
    raise FileNotFoundError(f"Benchmark file not found: {path}")
  order: List[str] = []
  grouped: Dict[str, List[Triplet]] = {}
  with path.open("r", encoding="utf-8") as handle:
    for row_no, line in enumerate(handle, start=1):
      line = line.rstrip("\r\n")
      if not line.strip():
        continue
      columns = line.split("\t")
      if len(columns) < 4:
        raise CorpusError(f"{path}: row {row_no} has {len(columns)} columns, expected at least 4")
      sentence, relation, arg1 = columns[0], columns[1], columns[2]
      obj = " ".join(part.strip() for part in columns[3:] if part.strip())
      if not sentence.strip():
        raise CorpusError(f"{path}: row {row_no} has an empty sentence")
      if sentence not in grouped:
        grouped[sentence] = []
        order.append(sentence)
      try:
        grouped[sentence].append(Triplet.of(arg1, relation, obj))
      except ValueError as exc:
        logger.warning("Skipping row %s of %s: %s", row_no, path, exc)
  items = [
    annotate(f"tsv-{idx}", sentence, grouped[sentence], where=f" ({path.name})")
    for idx, sentence in enumerate(order, start=1)
  ]
  logger.info("Loaded %s sentences (%s tuples) from %s", len(items), sum(len(item.gold) for item in items), path)
  return AnnotatedCorpus(items=tuple(items), source=f"{path} (tsv)")


def load_corpus(path: Path) -> AnnotatedCorpus:
  if path.suffix.lower() in {".tsv", ".txt"}:
    return load_benchmark_tsv(path)
  return load_jsonl(path)


def export_jsonl(corpus: AnnotatedCorpus, path: Path) -> None:
  path.parent.mkdir(parents=True, exist_ok=True)
  with path.open("w", encoding="utf-8", newline="\n") as handle:
    for item in corpus:
      payload = {
        "id": item.id,
        "sentence": item.text,
        "gold": [list(triplet.as_tuple()) for triplet in item.gold],
      }
      handle.write(json.dumps(payload, ensure_ascii=False) + "\n")
