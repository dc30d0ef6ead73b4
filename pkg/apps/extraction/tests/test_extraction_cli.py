import json
import os

import pytest
from extraction_fakes import FIXTURES
from typer.testing import CliRunner

from oie_extraction.cli import cli_app
from oie_extraction.records import read_records
from oie_extraction.triplets import canonical_key, parse_response

runner = CliRunner()


def _run_log(config_file, kind):
  log_path = config_file.parent / "logs" / "runs.jsonl"
  records = [json.loads(line) for line in log_path.read_text(encoding="utf-8").splitlines() if line.strip()]
  return [record for record in records if record["kind"] == kind]


def _stats(result):
  # log lines share stdout with the command output
  output = result.stdout
  return json.loads(output[output.index("{\n") : output.rindex("}") + 1])


def _extract(config_file, out, *extra):
  args = [
    "extract",
    "--config",
    str(config_file),
    "--dataset",
    str(FIXTURES / "sentences.jsonl"),
    "--train",
    str(FIXTURES / "train.jsonl"),
    "--out",
    str(out),
    *extra,
  ]
  return runner.invoke(cli_app, args)


def test_extract_is_deterministic_and_warm_cache_makes_no_calls(config_file, tmp_path):
  first = _extract(config_file, tmp_path / "first.jsonl", "--seed", "5")
  assert first.exit_code == 0, first.output
  second = _extract(config_file, tmp_path / "second.jsonl", "--seed", "5")
  assert second.exit_code == 0, second.output
  assert (tmp_path / "first.jsonl").read_bytes() == (tmp_path / "second.jsonl").read_bytes()
  first_summary, second_summary = _run_log(config_file, "summary")
  assert first_summary["backend_calls"] > 0
  assert second_summary["backend_calls"] == 0


def test_extract_is_deterministic_with_a_cold_cache(config_file, tmp_path):
  assert _extract(config_file, tmp_path / "a.jsonl", "--cache-dir", str(tmp_path / "cache-a")).exit_code == 0
  assert _extract(config_file, tmp_path / "b.jsonl", "--cache-dir", str(tmp_path / "cache-b")).exit_code == 0
  assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_zero_shot_with_scripted_fixture(config_file, tmp_path):
  fixture = FIXTURES / "scripted_responses.jsonl"
  result = _extract(config_file, tmp_path / "out.jsonl", "--mode", "zero_shot", "--backend", f"mock:{fixture}")
  assert result.exit_code == 0, result.output
  responses = {json.loads(line)["sentence"]: json.loads(line)["response"] for line in fixture.read_text().splitlines()}
  records = read_records(tmp_path / "out.jsonl")
  assert len(records) == 4
  for record in records:
    expected = [canonical_key(triplet) for triplet in parse_response(responses[record.sentence])[0]]
    assert [item.key for item in record.scored()] == expected


def test_flags_override_the_config_file(config_file, tmp_path):
  result = _extract(
    config_file,
    tmp_path / "out.jsonl",
    "--ensemble",
    "3",
    "--threshold",
    "0.5",
    "--count-mode",
    "run_fraction",
    "--subset-size",
    "2",
    "--pool-size",
    "4",
  )
  assert result.exit_code == 0, result.output
  (header,) = _run_log(config_file, "header")
  assert header["config"]["ensemble"] == {
    "size": 3,
    "subset_size": 2,
    "threshold": 0.5,
    "count_mode": "run_fraction",
    "threshold_rule": "keep_low",
  }
  assert header["config"]["retrieval"]["pool_size"] == 4
  records = read_records(tmp_path / "out.jsonl")
  assert all(record.ensemble == 3 and record.mode == "run_fraction" for record in records)
  assert all(triplet.uncertainty <= 0.5 for record in records for triplet in record.triplets)


def test_retrieval_mode_without_train_is_a_usage_error(config_file, tmp_path):
  args = ["extract", "--config", str(config_file), "--dataset", str(FIXTURES / "sentences.jsonl"), "--out", str(tmp_path / "o.jsonl")]
  result = runner.invoke(cli_app, args)
  assert result.exit_code == 1


def test_unknown_mode_is_a_usage_error(config_file, tmp_path):
  assert _extract(config_file, tmp_path / "o.jsonl", "--mode", "many_shot").exit_code == 1


def test_unknown_backend_is_a_usage_error(config_file, tmp_path):
  assert _extract(config_file, tmp_path / "o.jsonl", "--backend", "carrier-pigeon").exit_code == 1


def test_unreadable_dataset_is_a_data_error(config_file, tmp_path):
  broken = tmp_path / "broken.jsonl"
  broken.write_text('{"id": "x", "sentence": "A eats B", "gold": [["A", "eats"]]}\n', encoding="utf-8")
  result = runner.invoke(
    cli_app,
    ["extract", "--config", str(config_file), "--mode", "zero_shot", "--dataset", str(broken), "--out", str(tmp_path / "o.jsonl")],
  )
  assert result.exit_code == 2


def test_live_backend_without_credentials_is_a_backend_error(config_file, tmp_path, monkeypatch):
  monkeypatch.delenv("OPENAI_API_KEY", raising=False)
  assert _extract(config_file, tmp_path / "o.jsonl", "--backend", "http").exit_code == 3


def test_majority_of_failed_sentences_exits_with_backend_error(config_file, tmp_path):
  fixture = tmp_path / "sparse.jsonl"
  fixture.write_text(json.dumps({"sentence": "Ada Lovelace wrote the first published algorithm.", "response": "1. (a, b, c)"}) + "\n")
  result = _extract(config_file, tmp_path / "out.jsonl", "--mode", "zero_shot", "--backend", f"mock:{fixture}")
  assert result.exit_code == 3
  records = read_records(tmp_path / "out.jsonl")
  assert sum(1 for record in records if record.error) == 3


def test_cache_stats_and_clear(config_file, tmp_path):
  cache_dir = tmp_path / "cache-cli"
  stats = runner.invoke(cli_app, ["cache", "stats", "--config", str(config_file), "--cache-dir", str(cache_dir)])
  assert stats.exit_code == 0
  assert _stats(stats)["entries"] == 0

  single = tmp_path / "single.jsonl"
  single.write_text((FIXTURES / "sentences.jsonl").read_text(encoding="utf-8").splitlines()[1] + "\n", encoding="utf-8")
  extract = runner.invoke(
    cli_app,
    [
      "extract",
      "--config",
      str(config_file),
      "--mode",
      "zero_shot",
      "--backend",
      f"mock:{FIXTURES / 'scripted_responses.jsonl'}",
      "--dataset",
      str(single),
      "--cache-dir",
      str(cache_dir),
      "--out",
      str(tmp_path / "out.jsonl"),
    ],
  )
  assert extract.exit_code == 0, extract.output
  assert len(os.listdir(cache_dir)) == 1

  refused = runner.invoke(cli_app, ["cache", "clear", "--config", str(config_file), "--cache-dir", str(cache_dir)])
  assert refused.exit_code == 1
  cleared = runner.invoke(cli_app, ["cache", "clear", "--yes", "--config", str(config_file), "--cache-dir", str(cache_dir)])
  assert cleared.exit_code == 0
  after = runner.invoke(cli_app, ["cache", "stats", "--config", str(config_file), "--cache-dir", str(cache_dir)])
  assert _stats(after)["entries"] == 0


def test_validate_reports_inputs(config_file):
  result = runner.invoke(
    cli_app,
    ["validate", "--config", str(config_file), "--dataset", str(FIXTURES / "sentences.jsonl"), "--train", str(FIXTURES / "train.jsonl")],
  )
  assert result.exit_code == 0, result.output
  assert "Configuration validated successfully." in result.stdout


def test_validate_flags_missing_credentials(config_file, monkeypatch):
  monkeypatch.delenv("OPENAI_API_KEY", raising=False)
  result = runner.invoke(cli_app, ["validate", "--config", str(config_file), "--backend", "http"])
  assert result.exit_code == 3


@pytest.mark.skipif(not os.getenv("OIE_LIVE_SMOKE"), reason="set OIE_LIVE_SMOKE=1 to call the live API")
def test_live_smoke(tmp_path):
  single = tmp_path / "single.jsonl"
  single.write_text((FIXTURES / "sentences.jsonl").read_text(encoding="utf-8").splitlines()[1] + "\n", encoding="utf-8")
  result = runner.invoke(
    cli_app,
    [
      "extract",
      "--mode",
      "zero_shot",
      "--backend",
      "http",
      "--dataset",
      str(single),
      "--cache-dir",
      str(tmp_path / "cache"),
      "--out",
      str(tmp_path / "out.jsonl"),
    ],
  )
  assert result.exit_code == 0, result.output
  assert len(read_records(tmp_path / "out.jsonl")) == 1
