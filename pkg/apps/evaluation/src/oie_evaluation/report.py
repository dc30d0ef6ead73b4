from __future__ import annotations

from pathlib import Path
from typing import Optional

import pandas as pd

from .scorer import EvalReport


def curve_frame(report: EvalReport) -> pd.DataFrame:
  frame = pd.DataFrame(
    [
      {"threshold": point.threshold, "precision": point.precision, "recall": point.recall, "f1": point.f1}
      for point in report.curve
    ],
    columns=["threshold", "precision", "recall", "f1"],
  )
  frame["best"] = frame["threshold"] == report.best_threshold
  return frame


def render_table(report: EvalReport) -> str:
  header = (
    f"matcher={report.matcher} P={report.precision:.4f} R={report.recall:.4f} "
    f"F1={report.f1:.4f} k={report.best_threshold}"
  )
  body = curve_frame(report).to_string(index=False, float_format=lambda value: f"{value:.4f}")
  return f"{header}\n{body}"


def summary_record(
  report: EvalReport,
  predictions_path: Path,
  gold_path: Path,
  out_path: Optional[Path] = None,
) -> dict:
  return {
    "predictions": str(predictions_path),
    "gold": str(gold_path),
    "output": str(out_path) if out_path is not None else None,
    "matcher": report.matcher,
    "precision": report.precision,
    "recall": report.recall,
    "f1": report.f1,
    "best_threshold": report.best_threshold,
    "thresholds": len(report.curve),
    **{key: value for key, value in report.to_dict()["counts"].items()},
  }
