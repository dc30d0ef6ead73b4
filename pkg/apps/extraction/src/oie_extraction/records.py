from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, List, Optional

from oie_core.logging import get_logger
from pydantic import BaseModel, Field, ValidationError, model_validator

from .corpus import AnnotatedSentence
from .ensemble import ScoredTriplet
from .errors import CorpusError
from .triplets import Triplet, canonical_key

logger = get_logger(__name__)


class TripletRecord(BaseModel):
  subject: str
  predicate: str
  object: str
  uncertainty: float = Field(0.0, ge=0.0, le=1.0)
  count: int = Field(1, ge=1)

  @model_validator(mode="after")
  def validate_slots(self) -> "TripletRecord":
    canonical_key(Triplet(self.subject, self.predicate, self.object))
    return self

  @classmethod
  def from_scored(cls, scored: ScoredTriplet) -> "TripletRecord":
    triplet = scored.triplet
    return cls(
      subject=triplet.subject,
      predicate=triplet.predicate,
      object=triplet.object,
      uncertainty=scored.uncertainty,
      count=scored.count,
    )

  def to_scored(self) -> ScoredTriplet:
    triplet = Triplet(self.subject, self.predicate, self.object)
    return ScoredTriplet(triplet=triplet, key=canonical_key(triplet), count=self.count, uncertainty=self.uncertainty)


class ExtractionRecord(BaseModel):
  """One line of the extraction output: a target sentence with its kept triplets."""

  id: str = Field(..., min_length=1)
  sentence: str
  triplets: List[TripletRecord] = Field(default_factory=list)
  N: int = Field(0, ge=0)
  ensemble: int = Field(1, ge=1)
  mode: str = "single"
  k: Optional[float] = None
  pipeline: str = ""
  failed_runs: int = Field(0, ge=0)
  error: Optional[str] = None

  def scored(self) -> List[ScoredTriplet]:
    return [item.to_scored() for item in self.triplets]

  def to_json(self) -> str:
    return json.dumps(self.model_dump(exclude_none=True), ensure_ascii=False)


def record_from_gold(item: AnnotatedSentence) -> ExtractionRecord:
  return ExtractionRecord(
    id=item.id,
    sentence=item.text,
    triplets=[
      TripletRecord(subject=triplet.subject, predicate=triplet.predicate, object=triplet.object)
      for triplet in item.gold
    ],
    N=len(item.gold),
    pipeline="gold",
  )


def write_records(records: Iterable[ExtractionRecord], path: Path) -> int:
  path.parent.mkdir(parents=True, exist_ok=True)
  written = 0
  with path.open("w", encoding="utf-8", newline="\n") as handle:
    for record in records:
      handle.write(record.to_json() + "\n")
      written += 1
  return written


def read_records(path: Path) -> List[ExtractionRecord]:
  if not path.exists():
    raise FileNotFoundError(f"Extraction file not found: {path}")
  records: List[ExtractionRecord] = []
  seen = set()
  with path.open("r", encoding="utf-8") as handle:
    for line_no, line in enumerate(handle, start=1):
      if not line.strip():
        continue
      try:
        record = ExtractionRecord.model_validate_json(line)
      except ValidationError as exc:
        reasons = "; ".join(error["msg"] for error in exc.errors())
        raise CorpusError(f"{path}:{line_no}: {reasons}") from exc
      if record.id in seen:
        raise CorpusError(f"{path}:{line_no}: duplicate id {record.id!r}")
      seen.add(record.id)
      records.append(record)
  logger.info("Loaded %s extraction records from %s", len(records), path)
  return records
