from functools import lru_cache
from pathlib import Path

WORKSPACE_MARKER = "[tool.uv.workspace]"


@lru_cache(maxsize=1)
def workspace_root() -> Path:
  """Directory holding the workspace pyproject, or the cwd when not installed from a checkout."""
  path = Path(__file__).resolve()
  for candidate in path.parents:
    manifest = candidate / "pyproject.toml"
    if not manifest.is_file():
      continue
    try:
      if WORKSPACE_MARKER in manifest.read_text(encoding="utf-8"):
        return candidate
    except OSError:
      continue
  return Path.cwd()
