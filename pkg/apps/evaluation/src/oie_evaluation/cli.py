from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional

import typer
from oie_core.logging import RunLog, configure_logging, get_logger
from oie_extraction.corpus import AnnotatedCorpus, load_corpus
from oie_extraction.ensemble import ScoredTriplet
from oie_extraction.errors import CorpusError
from oie_extraction.records import read_records, record_from_gold, write_records

from .config import LoadedConfig, load_config
from .report import render_table, summary_record
from .scorer import IdMismatchError, evaluate as score

cli_app = typer.Typer(help="Score extraction output against gold triplets.")
logger = get_logger(__name__)

EXIT_USAGE = 1
EXIT_DATA = 2


def _fail(message: str, code: int) -> NoReturn:
  typer.secho(message, fg=typer.colors.RED, err=True)
  raise typer.Exit(code=code)


def _load(config: Optional[Path], overrides: Dict[str, Any]) -> LoadedConfig:
  try:
    return load_config(config, overrides)
  except (ValueError, FileNotFoundError) as exc:
    _fail(str(exc), EXIT_USAGE)


def _load_gold(path: Path) -> AnnotatedCorpus:
  try:
    return load_corpus(path)
  except (CorpusError, FileNotFoundError) as exc:
    _fail(str(exc), EXIT_DATA)


def _parse_thresholds(value: Optional[str]) -> Optional[List[float]]:
  if value is None:
    return None
  try:
    return [float(part) for part in value.split(",") if part.strip()]
  except ValueError:
    _fail(f"--thresholds must be a comma-separated list of numbers, got {value!r}", EXIT_USAGE)


@cli_app.command()
def evaluate(
  predictions: Path = typer.Option(..., "--predictions", help="Extraction JSONL to score."),
  gold: Path = typer.Option(..., "--gold", help="Gold corpus (.jsonl or benchmark .tsv)."),
  matcher: Optional[str] = typer.Option(None, "--matcher", help="exact, lexical or tuple."),
  thresholds: Optional[str] = typer.Option(None, "--thresholds", help="Comma-separated uncertainty thresholds."),
  out: Optional[Path] = typer.Option(None, "--out", help="Write the report JSON here."),
  table: bool = typer.Option(False, "--table", help="Also print the precision-recall curve as a table."),
  config: Optional[Path] = typer.Option(None, "--config", "-c"),
) -> None:
  """Score an extraction file and print the max-F1 report."""
  configure_logging()
  loaded = _load(config, {"scoring.matcher": matcher})
  sweep = _parse_thresholds(thresholds)
  try:
    records = read_records(predictions)
  except (CorpusError, FileNotFoundError) as exc:
    _fail(str(exc), EXIT_DATA)
  corpus = _load_gold(gold)
  scored: Dict[str, List[ScoredTriplet]] = {record.id: record.scored() for record in records}
  try:
    report = score(scored, corpus, loaded.scoring.matcher, sweep, loaded.scoring.stopwords)
  except IdMismatchError as exc:
    _fail(f"{exc}\nUnknown ids: {', '.join(exc.unknown)}", EXIT_DATA)
  except ValueError as exc:
    _fail(str(exc), EXIT_USAGE)
  payload = report.to_dict()
  if out is not None:
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    logger.info("Report written to %s", out)
  RunLog(loaded.storage.report_log_path).write(
    "summary",
    {"finished_at": datetime.now(timezone.utc).isoformat(), **summary_record(report, predictions, gold, out)},
  )
  typer.echo(json.dumps(payload, indent=2))
  if table:
    typer.echo(render_table(report))


@cli_app.command("convert-gold")
def convert_gold(
  gold: Path = typer.Option(..., "--gold", help="Gold corpus (.jsonl or benchmark .tsv)."),
  out: Path = typer.Option(..., "--out", help="Extraction JSONL to write."),
) -> None:
  """Write a gold corpus in the extraction record format."""
  configure_logging()
  corpus = _load_gold(gold)
  written = write_records((record_from_gold(item) for item in corpus), out)
  typer.echo(f"Wrote {written} records to {out}")


if __name__ == "__main__":
  cli_app()
