import json
import logging
import sys
import threading
from pathlib import Path
from typing import Any, Optional


def configure_logging(level: int = logging.INFO) -> None:
  handler = logging.StreamHandler(sys.stdout)
  formatter = logging.Formatter("%(asctime)s | %(levelname)s | %(name)s | %(message)s", "%Y-%m-%d %H:%M:%S")
  handler.setFormatter(formatter)
  root = logging.getLogger()
  root.handlers = [handler]
  root.setLevel(level)
  # openai/httpx log every request at INFO
  logging.getLogger("httpx").setLevel(logging.WARNING)


def get_logger(name: Optional[str] = None) -> logging.Logger:
  return logging.getLogger(name or __name__)


class RunLog:
  """Append-only JSONL log shared by the worker threads of one run."""

  def __init__(self, path: Path):
    self.path = path
    self._lock = threading.Lock()
    self.path.parent.mkdir(parents=True, exist_ok=True)

  def write(self, kind: str, payload: dict[str, Any]) -> None:
    line = json.dumps({"kind": kind, **payload}, default=str)
    with self._lock:
      with self.path.open("a", encoding="utf-8") as handle:
        handle.write(line + "\n")

  def read(self) -> list[dict[str, Any]]:
    if not self.path.exists():
      return []
    records = []
    with self.path.open("r", encoding="utf-8") as handle:
      for line in handle:
        if line.strip():
          records.append(json.loads(line))
    return records
