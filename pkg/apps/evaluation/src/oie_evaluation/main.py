from __future__ import annotations

from .cli import cli_app

if __name__ == "__main__":
  cli_app()
