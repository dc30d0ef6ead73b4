import itertools
import random
from collections import Counter

import pytest
from evaluation_helpers import FLEMISH_GOLD, FLEMISH_UNCERTAINTY, all_triplets, corpus_of, random_instance, scored

from oie_core.text import normalize_text
from oie_evaluation.scorer import evaluate, exact_match, lexical_match, pair_scores
from oie_extraction.ensemble import ScoredTriplet
from oie_extraction.triplets import Triplet, canonical_key


def _set_f1(predictions, corpus, threshold):
  num_pred = num_gold = matched = 0
  for item in corpus:
    pred_keys = {s.key for s in predictions.get(item.id, []) if s.uncertainty <= threshold}
    gold_keys = {canonical_key(t) for t in item.gold}
    num_pred += len(pred_keys)
    num_gold += len(gold_keys)
    matched += len(pred_keys & gold_keys)
  precision = matched / num_pred if num_pred else 0.0
  recall = matched / num_gold if num_gold else 0.0
  return 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)


def test_max_f1_matches_brute_force_over_thresholds():
  rng = random.Random(2024)
  for _ in range(200):
    predictions, corpus = random_instance(rng)
    report = evaluate(predictions, corpus, "exact")
    thresholds = {s.uncertainty for preds in predictions.values() for s in preds} | {1.0}
    expected = max(_set_f1(predictions, corpus, k) for k in thresholds)
    assert report.f1 == pytest.approx(expected, abs=1e-12)
    assert all(point.f1 <= report.f1 for point in report.curve)
    assert [p.threshold for p in report.curve] == sorted(thresholds)
    for value in (report.precision, report.recall, report.f1):
      assert 0.0 <= value <= 1.0


def _perturb(text, rng):
  words = text.split()
  words = [word.upper() if rng.random() < 0.3 else word for word in words]
  suffix = rng.choice(["", ",", ".", "!"])
  return " ".join(words) + suffix


def test_exact_implies_lexical_implies_full_tuple_scores():
  rng = random.Random(7)
  universe = all_triplets()
  exact_pairs = lexical_only = 0
  for _ in range(1000):
    pred = rng.choice(universe)
    roll = rng.random()
    if roll < 0.4:
      gold = Triplet(*(_perturb(value, rng) for value in pred.as_tuple()))
    elif roll < 0.6:
      gold = Triplet(pred.subject, pred.predicate, f"{pred.object} by the gate")
    else:
      gold = rng.choice(universe)
    if exact_match(pred, gold):
      exact_pairs += 1
      assert lexical_match(pred, gold)
      assert pair_scores(pred, gold) == (1.0, 1.0)
    elif lexical_match(pred, gold):
      lexical_only += 1
    if not lexical_match(pred, gold):
      assert not exact_match(pred, gold)
  assert exact_pairs > 100
  assert lexical_only > 0


@pytest.mark.parametrize("matcher", ["exact", "lexical"])
def test_recall_is_monotone_in_threshold(matcher):
  rng = random.Random(11)
  for _ in range(100):
    predictions, corpus = random_instance(rng)
    recalls = [point.recall for point in evaluate(predictions, corpus, matcher).curve]
    assert recalls == sorted(recalls)


@pytest.mark.parametrize("matcher", ["exact", "lexical", "tuple"])
def test_evaluating_gold_against_itself_is_perfect(matcher):
  rng = random.Random(5)
  _, corpus = random_instance(rng, sentences=10)
  predictions = {item.id: scored(item.gold) for item in corpus}
  report = evaluate(predictions, corpus, matcher)
  assert (report.precision, report.recall, report.f1) == (1.0, 1.0, 1.0)


def test_exact_matching_equals_bipartite_oracle():
  rng = random.Random(99)
  universe = all_triplets()
  for _ in range(300):
    gold = rng.sample(universe, rng.randint(1, 10))
    preds = [rng.choice(universe) for _ in range(rng.randint(0, 10))]
    predictions = {
      "s": [ScoredTriplet(t, canonical_key(t), 1, rng.choice([0.0, 0.5])) for t in preds],
    }
    report = evaluate(predictions, corpus_of({"s": gold}), "exact", thresholds=[1.0])
    pred_counts = Counter(canonical_key(t) for t in preds)
    gold_counts = Counter(canonical_key(t) for t in gold)
    expected = sum(min(count, gold_counts[key]) for key, count in pred_counts.items())
    assert report.matched == expected
    assert report.num_pred == len(preds)


def _overlap(pred, gold):
  total = 0
  for p_value, g_value in zip(pred.as_tuple(), gold.as_tuple()):
    remaining = normalize_text(g_value)
    for token in normalize_text(p_value):
      if token in remaining:
        remaining.remove(token)
        total += 1
  return total


def _size(triplet):
  return sum(len(normalize_text(value)) for value in triplet.as_tuple())


def test_flemish_tuple_scores_match_slot_overlap_oracle(flemish_corpus):
  precision = sum(max(_overlap(p, g) / _size(p) for g in FLEMISH_GOLD) for p in FLEMISH_UNCERTAINTY) / len(
    FLEMISH_UNCERTAINTY
  )
  best_recall = max(
    sum(_overlap(p, g) / _size(g) for p, g in zip(assignment, FLEMISH_GOLD))
    for assignment in itertools.permutations(FLEMISH_UNCERTAINTY, len(FLEMISH_GOLD))
  ) / len(FLEMISH_GOLD)
  report = evaluate({"flemish": scored(FLEMISH_UNCERTAINTY)}, flemish_corpus, "tuple", thresholds=[1.0])
  assert report.precision == pytest.approx(precision)
  assert report.recall == pytest.approx(best_recall)
  assert precision == pytest.approx(17 / 24)
