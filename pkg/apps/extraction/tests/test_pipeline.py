import json

import pytest
from extraction_fakes import FIXTURES, CountingBackend

from oie_extraction.backends import SyntheticExtractorBackend, load_scripted_backend
from oie_extraction.embeddings import HashedBagOfWordsBackend
from oie_extraction.errors import BackendError
from oie_extraction.pipeline import ExtractionPipeline
from oie_extraction.promptkit import DEMONSTRATIONS_HEADER, load_prompt_assets
from oie_extraction.records import read_records
from oie_extraction.triplets import canonical_key, parse_response


class FailingBackend:
  backend_id = "failing"
  max_in_flight = 2

  def generate(self, messages, params):
    raise BackendError("service unavailable", retriable=False, backend_id=self.backend_id)


def _keys(triplets):
  return [canonical_key(triplet) for triplet in triplets]


def _pipeline(config, backend, embedding_backend=None):
  embedding_backend = embedding_backend or HashedBagOfWordsBackend(dim=128)
  return ExtractionPipeline(config, backend, load_prompt_assets(), embedding_factory=lambda: embedding_backend)


def test_zero_shot_with_scripted_backend(make_config, sentences, tmp_path):
  embedding_backend = HashedBagOfWordsBackend()
  backend = load_scripted_backend(FIXTURES / "scripted_responses.jsonl")
  pipeline = _pipeline(make_config(mode="zero_shot"), backend, embedding_backend)
  summary = pipeline.run(sentences, None, tmp_path / "out.jsonl")
  records = read_records(tmp_path / "out.jsonl")
  assert [record.id for record in records] == sentences.ids
  for record in records:
    expected, _ = parse_response(backend.by_sentence[record.sentence])
    assert _keys(triplet.to_scored().triplet for triplet in record.triplets) == _keys(expected)
    assert {(triplet.uncertainty, triplet.count) for triplet in record.triplets} == {(0.0, 1)}
    assert (record.mode, record.ensemble, record.pipeline) == ("single", 1, "zero_shot")
  assert summary["failed"] == 0
  assert backend.calls == len(sentences)
  assert embedding_backend.calls == 0


def test_zero_shot_transcripts_carry_no_demonstrations(make_config, sentences, tmp_path):
  backend = CountingBackend(text="1. (x, y, z)")
  _pipeline(make_config(mode="zero_shot"), backend).run(sentences, None, tmp_path / "out.jsonl")
  for messages in backend.seen:
    assert [message.role for message in messages] == ["system", "user"]


def test_fixed_demo_uses_static_demonstrations_and_the_quiz(make_config, sentences, tmp_path):
  embedding_backend = HashedBagOfWordsBackend()
  backend = CountingBackend(text="1. (x, y, z)")
  _pipeline(make_config(mode="fixed_demo"), backend, embedding_backend).run(sentences, None, tmp_path / "out.jsonl")
  assert embedding_backend.calls == 0
  final_turns = [messages for messages in backend.seen if len(messages) > 3]
  assert len(final_turns) == len(sentences)
  demos = final_turns[0][1].content
  assert demos.startswith(DEMONSTRATIONS_HEADER)
  assert demos.count("Sentence: ") == 3
  assert "The committee approved the budget on Tuesday." in demos


def test_selected_demo_retrieves_from_the_training_corpus(make_config, sentences, train_corpus, tmp_path):
  embedding_backend = HashedBagOfWordsBackend()
  backend = SyntheticExtractorBackend(sentences, p_drop=0.0, p_noise=0.0)
  summary = _pipeline(make_config(mode="selected_demo"), backend, embedding_backend).run(
    sentences, train_corpus, tmp_path / "out.jsonl"
  )
  assert embedding_backend.calls > 0
  assert summary["failed"] == 0
  for record, item in zip(read_records(tmp_path / "out.jsonl"), sentences):
    assert _keys(scored.triplet for scored in record.scored()) == _keys(item.gold)
    assert record.ensemble == 1


def test_uncertainty_mode_without_mistakes_keeps_exactly_the_gold(make_config, sentences, train_corpus, tmp_path):
  backend = SyntheticExtractorBackend(sentences, p_drop=0.0, p_noise=0.0)
  _pipeline(make_config(), backend).run(sentences, train_corpus, tmp_path / "out.jsonl")
  for record, item in zip(read_records(tmp_path / "out.jsonl"), sentences):
    assert sorted(_keys(scored.triplet for scored in record.scored())) == sorted(_keys(item.gold))
    assert record.N == 5 * len(item.gold)
    assert (record.ensemble, record.mode, record.k) == (5, "concat", 0.8)
    assert all(triplet.count == 5 for triplet in record.triplets)


def test_warm_cache_reproduces_output_without_backend_calls(make_config, sentences, train_corpus, tmp_path):
  config = make_config()
  first_backend = SyntheticExtractorBackend(sentences, seed=2, p_drop=0.3, p_noise=0.5)
  first = _pipeline(config, first_backend).run(sentences, train_corpus, tmp_path / "first.jsonl")
  second_backend = SyntheticExtractorBackend(sentences, seed=2, p_drop=0.3, p_noise=0.5)
  second = _pipeline(config, second_backend).run(sentences, train_corpus, tmp_path / "second.jsonl")
  assert first["backend_calls"] > 0
  assert second["backend_calls"] == 0
  assert second_backend.calls == 0
  assert second["cache_hits"] == first["backend_calls"] + first["cache_hits"]
  assert (tmp_path / "first.jsonl").read_bytes() == (tmp_path / "second.jsonl").read_bytes()


def test_failed_sentences_are_recorded_and_counted(make_config, sentences, tmp_path):
  summary = _pipeline(make_config(mode="zero_shot"), FailingBackend()).run(sentences, None, tmp_path / "out.jsonl")
  assert summary["failed"] == len(sentences)
  assert summary["failure_ratio"] == 1.0
  records = read_records(tmp_path / "out.jsonl")
  assert all(record.triplets == [] and "service unavailable" in record.error for record in records)


def test_retrieval_modes_need_training_data(make_config, sentences, tmp_path):
  with pytest.raises(ValueError, match="demonstration corpus"):
    _pipeline(make_config(mode="selected_demo"), CountingBackend()).run(sentences, None, tmp_path / "out.jsonl")


def test_run_log_records_header_sentences_and_summary(make_config, sentences, tmp_path):
  config = make_config(mode="zero_shot")
  _pipeline(config, CountingBackend()).run(sentences, None, tmp_path / "out.jsonl")
  entries = [json.loads(line) for line in config.storage.run_log_path.read_text(encoding="utf-8").splitlines()]
  kinds = [entry["kind"] for entry in entries]
  assert kinds[0] == "header" and kinds[-1] == "summary"
  assert kinds.count("sentence") == len(sentences)
  header = entries[0]
  assert header["config"]["pipeline"]["mode"] == "zero_shot"
  assert header["versions"]["extraction_record"] == 1
  assert header["backend_id"] == "counting"
  assert all(entry["status"] == "ok" for entry in entries if entry["kind"] == "sentence")
