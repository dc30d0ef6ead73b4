from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Dict, List, Tuple

from oie_core.text import normalize_text

from .errors import DegenerateTripletError

# str.split() treats \x1f as whitespace, so no normalized token can contain it
KEY_SEPARATOR = "\x1f"

_INDEX_PREFIX = re.compile(r"^\d+\s*[.)]\s*")


@dataclass(frozen=True)
class Triplet:
  subject: str
  predicate: str
  object: str

  def __post_init__(self) -> None:
    for name in ("subject", "predicate", "object"):
      value = getattr(self, name)
      if not isinstance(value, str) or not value.strip():
        raise ValueError(f"Triplet {name} must be a non-empty string")
      if "\n" in value or "\r" in value:
        raise ValueError(f"Triplet {name} must not contain a newline")

  @classmethod
  def of(cls, subject: str, predicate: str, obj: str) -> "Triplet":
    return cls(subject.strip(), predicate.strip(), obj.strip())

  def as_tuple(self) -> Tuple[str, str, str]:
    return (self.subject, self.predicate, self.object)


def canonical_key(triplet: Triplet) -> str:
  parts = []
  for name, value in zip(("subject", "predicate", "object"), triplet.as_tuple()):
    tokens = normalize_text(value)
    if not tokens:
      raise DegenerateTripletError(f"Triplet {name} {value!r} normalizes to nothing")
    parts.append(" ".join(tokens))
  return KEY_SEPARATOR.join(parts)


def format_triplet(triplet: Triplet, index: int) -> str:
  return f"{index}. ({triplet.subject}, {triplet.predicate}, {triplet.object})"


def format_triplets(triplets: List[Triplet]) -> str:
  return "\n".join(format_triplet(triplet, idx) for idx, triplet in enumerate(triplets, start=1))


def parse_response(text: str) -> Tuple[List[Triplet], List[str]]:
  """Parse `N. (subject, predicate, object)` lines out of a model response.

  Never raises: lines that do not follow the grammar become warnings.
  """
  triplets: List[Triplet] = []
  warnings: List[str] = []
  seen: Dict[str, int] = {}
  for line_no, raw_line in enumerate(text.splitlines(), start=1):
    line = raw_line.strip()
    if not line:
      continue
    line = _INDEX_PREFIX.sub("", line, count=1).strip()
    if not (line.startswith("(") and line.endswith(")")) or len(line) < 2:
      warnings.append(f"line {line_no}: not a parenthesized triplet: {_excerpt(raw_line)}")
      continue
    parts = line[1:-1].split(",", 2)
    if len(parts) != 3:
      warnings.append(f"line {line_no}: expected 3 fields, found {len(parts)}: {_excerpt(raw_line)}")
      continue
    fields = [part.strip() for part in parts]
    if not all(fields):
      warnings.append(f"line {line_no}: empty field: {_excerpt(raw_line)}")
      continue
    try:
      triplet = Triplet(*fields)
      key = canonical_key(triplet)
    except ValueError as exc:
      warnings.append(f"line {line_no}: {exc}")
      continue
    if key in seen:
      warnings.append(f"line {line_no}: duplicate of line {seen[key]}")
      continue
    seen[key] = line_no
    triplets.append(triplet)
  return triplets, warnings


def _excerpt(line: str, limit: int = 80) -> str:
  stripped = line.strip()
  return stripped if len(stripped) <= limit else stripped[: limit - 3] + "..."
