import string
from typing import List

ASCII_PUNCTUATION = string.punctuation


def normalize_text(text: str) -> List[str]:
  """Lowercase, split on Unicode whitespace, strip ASCII punctuation from token edges.

  Tokens that are pure punctuation vanish. Idempotent on its own space-joined output.
  """
  tokens: List[str] = []
  for raw in text.lower().split():
    token = raw.strip(ASCII_PUNCTUATION)
    if token:
      tokens.append(token)
  return tokens
