from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from oie_core.logging import get_logger
from oie_core.text import normalize_text
from oie_extraction.corpus import AnnotatedCorpus
from oie_extraction.ensemble import ScoredTriplet
from oie_extraction.triplets import Triplet, canonical_key

logger = get_logger(__name__)

MATCHERS = ("exact", "lexical", "tuple")
DEFAULT_STOPWORDS: FrozenSet[str] = frozenset({"the", "a", "an", "of", "and", "to", "in", "is"})

BooleanMatcher = Callable[[Triplet, Triplet], bool]


class IdMismatchError(ValueError):
  """Prediction ids that do not appear in the gold corpus."""

  def __init__(self, unknown: Sequence[str]):
    self.unknown = list(unknown)
    preview = ", ".join(self.unknown[:10])
    more = f" (and {len(self.unknown) - 10} more)" if len(self.unknown) > 10 else ""
    super().__init__(f"{len(self.unknown)} prediction ids are not in the gold corpus: {preview}{more}")


@dataclass(frozen=True)
class MatchDecision:
  pred_index: int
  gold_index: int
  matcher: str
  score: float

  def __post_init__(self) -> None:
    if self.matcher not in MATCHERS:
      raise ValueError(f"Unsupported matcher: {self.matcher}")
    if not 0.0 <= self.score <= 1.0:
      raise ValueError("score must be within [0, 1]")
    if self.matcher != "tuple" and self.score not in (0.0, 1.0):
      raise ValueError("boolean matchers score 0 or 1")


@dataclass(frozen=True)
class CurvePoint:
  threshold: float
  precision: float
  recall: float

  @property
  def f1(self) -> float:
    return f1_score(self.precision, self.recall)


@dataclass
class EvalReport:
  matcher: str
  precision: float
  recall: float
  f1: float
  best_threshold: Optional[float]
  curve: List[CurvePoint] = field(default_factory=list)
  num_pred: int = 0
  num_gold: int = 0
  matched: float = 0.0

  def to_dict(self) -> dict:
    return {
      "matcher": self.matcher,
      "precision": self.precision,
      "recall": self.recall,
      "f1": self.f1,
      "best_threshold": self.best_threshold,
      "curve": [
        {"threshold": point.threshold, "precision": point.precision, "recall": point.recall, "f1": point.f1}
        for point in self.curve
      ],
      "counts": {"num_pred": self.num_pred, "num_gold": self.num_gold, "matched": self.matched},
    }


def f1_score(precision: float, recall: float) -> float:
  if precision + recall == 0:
    return 0.0
  return 2 * precision * recall / (precision + recall)


def exact_match(pred: Triplet, gold: Triplet) -> bool:
  return canonical_key(pred) == canonical_key(gold)


def content_tokens(text: str, stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> Set[str]:
  """Normalized tokens minus stopwords; a slot made only of stopwords keeps all of its tokens."""
  tokens = normalize_text(text)
  stop = set(stopwords)
  kept = {token for token in tokens if token not in stop}
  return kept or set(tokens)


def lexical_match(pred: Triplet, gold: Triplet, stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> bool:
  stop = frozenset(stopwords)
  if not content_tokens(pred.predicate, stop) & content_tokens(gold.predicate, stop):
    return False
  if not content_tokens(pred.subject, stop) & content_tokens(gold.subject, stop):
    return False
  pred_object = content_tokens(pred.object, stop)
  gold_object = content_tokens(gold.object, stop)
  if not pred_object and not gold_object:
    return True
  return bool(pred_object & gold_object)


def matcher_for(name: str, stopwords: Iterable[str] = DEFAULT_STOPWORDS) -> BooleanMatcher:
  if name == "exact":
    return exact_match
  if name == "lexical":
    stop = frozenset(stopwords)
    return lambda pred, gold: lexical_match(pred, gold, stop)
  raise ValueError(f"No boolean matcher named {name!r}")


def _slot_counts(triplet: Triplet) -> Tuple[Counter, Counter, Counter]:
  return (
    Counter(normalize_text(triplet.subject)),
    Counter(normalize_text(triplet.predicate)),
    Counter(normalize_text(triplet.object)),
  )


def pair_scores(pred: Triplet, gold: Triplet) -> Tuple[float, float]:
  """Slotwise multiset token overlap as (precision-score, recall-score)."""
  pred_slots = _slot_counts(pred)
  gold_slots = _slot_counts(gold)
  overlap = sum((p & g).total() for p, g in zip(pred_slots, gold_slots))
  pred_total = sum(slot.total() for slot in pred_slots)
  gold_total = sum(slot.total() for slot in gold_slots)
  return (overlap / pred_total if pred_total else 0.0, overlap / gold_total if gold_total else 0.0)


def boolean_decisions(
  preds: Sequence[Triplet],
  golds: Sequence[Triplet],
  matcher: str = "exact",
  stopwords: Iterable[str] = DEFAULT_STOPWORDS,
) -> List[MatchDecision]:
  """One-to-one greedy matching: each prediction, in order, takes the first unmatched gold it matches."""
  match = matcher_for(matcher, stopwords)
  used: Set[int] = set()
  decisions: List[MatchDecision] = []
  for pred_index, pred in enumerate(preds):
    for gold_index, gold in enumerate(golds):
      if gold_index not in used and match(pred, gold):
        used.add(gold_index)
        decisions.append(MatchDecision(pred_index, gold_index, matcher, 1.0))
        break
  return decisions


def tuple_decisions(preds: Sequence[Triplet], golds: Sequence[Triplet]) -> List[MatchDecision]:
  """Greedy one-to-one recall assignment: best recall-score first, ties to the lower pred then gold index."""
  pairs = [
    (pair_scores(pred, gold)[1], pred_index, gold_index)
    for pred_index, pred in enumerate(preds)
    for gold_index, gold in enumerate(golds)
  ]
  pairs.sort(key=lambda item: (-item[0], item[1], item[2]))
  used_preds: Set[int] = set()
  used_golds: Set[int] = set()
  decisions: List[MatchDecision] = []
  for score, pred_index, gold_index in pairs:
    if score <= 0.0:
      break
    if pred_index in used_preds or gold_index in used_golds:
      continue
    used_preds.add(pred_index)
    used_golds.add(gold_index)
    decisions.append(MatchDecision(pred_index, gold_index, "tuple", score))
  return decisions


def _tuple_sums(preds: Sequence[Triplet], golds: Sequence[Triplet]) -> Tuple[float, float]:
  precision_sum = sum(max((pair_scores(pred, gold)[0] for gold in golds), default=0.0) for pred in preds)
  recall_sum = sum(decision.score for decision in tuple_decisions(preds, golds))
  return precision_sum, recall_sum


def tuple_match_scores(preds: Sequence[Triplet], golds: Sequence[Triplet]) -> Tuple[float, float]:
  """Best-match precision and one-to-one recall for one sentence.

  Both empty scores (1, 1), no predictions against gold scores (0, 0) and predictions without
  gold score (0, 1).
  """
  if not preds and not golds:
    return 1.0, 1.0
  if not preds:
    return 0.0, 0.0
  if not golds:
    return 0.0, 1.0
  precision_sum, recall_sum = _tuple_sums(preds, golds)
  return precision_sum / len(preds), recall_sum / len(golds)


def default_thresholds(predictions: Mapping[str, Sequence[ScoredTriplet]]) -> List[float]:
  values = {item.uncertainty for scored in predictions.values() for item in scored}
  values.add(1.0)
  return sorted(values)


def _ordered(scored: Iterable[ScoredTriplet], threshold: float) -> List[Triplet]:
  kept = sorted((item for item in scored if item.uncertainty <= threshold), key=lambda item: (item.uncertainty, item.key))
  return [item.triplet for item in kept]


def _point(
  predictions: Mapping[str, Sequence[ScoredTriplet]],
  gold_by_id: Dict[str, List[Triplet]],
  threshold: float,
  matcher: str,
  stopwords: FrozenSet[str],
) -> Tuple[CurvePoint, int, int, float]:
  num_pred = 0
  num_gold = 0
  precision_total = 0.0
  recall_total = 0.0
  for sentence_id in sorted(gold_by_id):
    gold = gold_by_id[sentence_id]
    preds = _ordered(predictions.get(sentence_id, ()), threshold)
    num_pred += len(preds)
    num_gold += len(gold)
    if matcher == "tuple":
      precision_sum, recall_sum = _tuple_sums(preds, gold)
      precision_total += precision_sum
      recall_total += recall_sum
    else:
      matched = len(boolean_decisions(preds, gold, matcher, stopwords))
      precision_total += matched
      recall_total += matched
  precision = precision_total / num_pred if num_pred else 0.0
  recall = recall_total / num_gold if num_gold else 0.0
  return CurvePoint(threshold, precision, recall), num_pred, num_gold, recall_total


def evaluate(
  predictions: Mapping[str, Sequence[ScoredTriplet]],
  golds: AnnotatedCorpus,
  matcher: str = "lexical",
  thresholds: Optional[Sequence[float]] = None,
  stopwords: Iterable[str] = DEFAULT_STOPWORDS,
) -> EvalReport:
  """Sweep the uncertainty threshold and report the point with the highest micro-averaged F1.

  Predictions with uncertainty above a threshold are dropped at that point. Gold sentences
  without a prediction entry count as sentences with no predictions.
  """
  if matcher not in MATCHERS:
    raise ValueError(f"Unsupported matcher: {matcher}")
  gold_by_id = {item.id: list(item.gold) for item in golds}
  unknown = sorted(set(predictions) - set(gold_by_id))
  if unknown:
    raise IdMismatchError(unknown)
  if thresholds is None:
    sweep = default_thresholds(predictions)
  else:
    sweep = sorted(set(thresholds))
    if not sweep:
      raise ValueError("thresholds must not be empty")
    if sweep[0] < 0.0 or sweep[-1] > 1.0:
      raise ValueError("thresholds must be within [0, 1]")
  stop = frozenset(stopwords)
  missing = len(gold_by_id) - len(set(predictions))
  if missing:
    logger.warning("%s gold sentences have no prediction record; scoring them as empty", missing)

  points = [_point(predictions, gold_by_id, threshold, matcher, stop) for threshold in sweep]
  curve = [point[0] for point in points]
  best = points[0]
  for point in points[1:]:
    if point[0].f1 > best[0].f1:
      best = point
  best_point, num_pred, num_gold, matched = best
  logger.info(
    "Scored %s sentences with the %s matcher over %s thresholds: P=%.4f R=%.4f F1=%.4f at k=%s",
    len(gold_by_id),
    matcher,
    len(curve),
    best_point.precision,
    best_point.recall,
    best_point.f1,
    best_point.threshold,
  )
  return EvalReport(
    matcher=matcher,
    precision=best_point.precision,
    recall=best_point.recall,
    f1=best_point.f1,
    best_threshold=best_point.threshold,
    curve=curve,
    num_pred=num_pred,
    num_gold=num_gold,
    matched=matched,
  )
