from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from oie_core.logging import get_logger

from .corpus import AnnotatedSentence, Sentence, load_jsonl
from .triplets import format_triplet

logger = get_logger(__name__)

ROLES = ("system", "user", "assistant")
DEMO_MODES = ("none", "fixed", "selected")

EXTRACTION_QUERY_PREFIX = "Identify as many combinations as possible in the following sentence: "
DEMONSTRATIONS_HEADER = "Here are example sentences annotated with their relational triplets:"
QUIZ_HEADER = (
  "Quiz: extract the relational triplets from each of the following sentences."
  " List the triplets of each sentence under its number, in the required format."
)
CORRECTION_PREFIX = "Correct answers:"

INSTRUCTION_FILE = "instruction.txt"
QUIZ_FILE = "quiz.jsonl"
FIXED_DEMOS_FILE = "fixed_demos.jsonl"


@dataclass(frozen=True)
class ChatMessage:
  role: str
  content: str

  def __post_init__(self) -> None:
    if self.role not in ROLES:
      raise ValueError(f"Unsupported chat role: {self.role}")
    if not self.content:
      raise ValueError("Chat message content must be non-empty")

  def to_dict(self) -> dict:
    return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class Transcript:
  """Ordered chat messages.

  While `quiz_cut` is set the transcript is awaiting a quiz answer: the first `quiz_cut`
  messages end with the quiz question, and `quiz_correction` must follow the model's answer.
  """

  messages: Tuple[ChatMessage, ...]
  quiz_cut: Optional[int] = None
  quiz_correction: Optional[ChatMessage] = None

  def __len__(self) -> int:
    return len(self.messages)

  @property
  def awaiting_quiz(self) -> bool:
    return self.quiz_cut is not None

  def append(self, *messages: ChatMessage) -> "Transcript":
    return replace(self, messages=self.messages + tuple(messages))

  def quiz_turn(self) -> Tuple[ChatMessage, ...]:
    if self.quiz_cut is None:
      raise ValueError("Transcript is not awaiting a quiz answer")
    return self.messages[: self.quiz_cut]

  def resolve_quiz(self, answer: str) -> "Transcript":
    if self.quiz_cut is None or self.quiz_correction is None:
      raise ValueError("Transcript is not awaiting a quiz answer")
    # an assistant turn may not be empty; keep the slot so the exchange stays two messages
    reply = ChatMessage("assistant", answer if answer else "(empty response)")
    head = self.messages[: self.quiz_cut]
    tail = self.messages[self.quiz_cut :]
    return Transcript(messages=head + (reply, self.quiz_correction) + tail)

  def to_dicts(self) -> List[dict]:
    return [message.to_dict() for message in self.messages]


@dataclass(frozen=True)
class PromptConfig:
  instruction_text: str
  quiz: Tuple[AnnotatedSentence, ...] = ()
  demo_count: int = 3
  demo_mode: str = "none"
  fixed_demos: Tuple[AnnotatedSentence, ...] = ()

  def __post_init__(self) -> None:
    if self.demo_mode not in DEMO_MODES:
      raise ValueError(f"Unsupported demo mode: {self.demo_mode}")
    if self.demo_count < 0:
      raise ValueError("demo_count must be non-negative")
    if self.demo_mode == "fixed" and not self.fixed_demos:
      raise ValueError("Fixed demo mode requires a static demonstration list")


@dataclass(frozen=True)
class PromptAssets:
  instruction_text: str
  quiz: Tuple[AnnotatedSentence, ...] = field(default_factory=tuple)
  fixed_demos: Tuple[AnnotatedSentence, ...] = field(default_factory=tuple)


def render_demonstration(annotated: AnnotatedSentence) -> str:
  if not annotated.gold:
    raise ValueError(f"Sentence {annotated.id!r} has no gold triplets to demonstrate")
  lines = [f"Sentence: {annotated.text}", "Triplets:"]
  lines.extend(format_triplet(triplet, idx) for idx, triplet in enumerate(annotated.gold, start=1))
  return "\n".join(lines)


def extraction_query(target: Sentence) -> ChatMessage:
  return ChatMessage("user", f"{EXTRACTION_QUERY_PREFIX}{target.text}")


def query_target(message: ChatMessage) -> Optional[str]:
  """Sentence text of an extraction query, or None for any other message."""
  if message.role != "user" or not message.content.startswith(EXTRACTION_QUERY_PREFIX):
    return None
  return message.content[len(EXTRACTION_QUERY_PREFIX) :]


def has_demonstrations(messages: Sequence[ChatMessage]) -> bool:
  return any(message.role == "user" and message.content.startswith(DEMONSTRATIONS_HEADER) for message in messages)


def build_preamble(config: PromptConfig, demos: Sequence[AnnotatedSentence]) -> Transcript:
  if config.demo_mode == "none" and demos:
    raise ValueError("Demonstrations supplied while demo_mode is 'none'")
  messages: List[ChatMessage] = []
  if config.instruction_text.strip():
    messages.append(ChatMessage("system", config.instruction_text.strip()))
  if demos:
    rendered = "\n\n".join(render_demonstration(demo) for demo in demos)
    messages.append(ChatMessage("user", f"{DEMONSTRATIONS_HEADER}\n\n{rendered}"))
  if not config.quiz:
    return Transcript(messages=tuple(messages))
  for item in config.quiz:
    if not item.gold:
      raise ValueError(f"Quiz sentence {item.id!r} has no gold answer")
  questions = "\n".join(f"{idx}. {item.text}" for idx, item in enumerate(config.quiz, start=1))
  messages.append(ChatMessage("user", f"{QUIZ_HEADER}\n\n{questions}"))
  answers = "\n\n".join(render_demonstration(item) for item in config.quiz)
  return Transcript(
    messages=tuple(messages),
    quiz_cut=len(messages),
    quiz_correction=ChatMessage("user", f"{CORRECTION_PREFIX}\n\n{answers}"),
  )


def load_prompt_assets(assets_dir: Optional[Path] = None) -> PromptAssets:
  """Packaged defaults, replaced file by file by whatever `assets_dir` provides."""
  packaged = resources.files("oie_extraction") / "assets"
  with resources.as_file(packaged) as default_dir:
    instruction_path = _pick(assets_dir, default_dir, INSTRUCTION_FILE)
    quiz_path = _pick(assets_dir, default_dir, QUIZ_FILE)
    demos_path = _pick(assets_dir, default_dir, FIXED_DEMOS_FILE)
    instruction = instruction_path.read_text(encoding="utf-8").strip()
    quiz = load_jsonl(quiz_path).items
    fixed = load_jsonl(demos_path).items
  logger.info(
    "Prompt assets: instruction=%s quiz=%s (%s) fixed_demos=%s (%s)",
    instruction_path,
    quiz_path,
    len(quiz),
    demos_path,
    len(fixed),
  )
  return PromptAssets(instruction_text=instruction, quiz=quiz, fixed_demos=fixed)


def _pick(override_dir: Optional[Path], default_dir: Path, name: str) -> Path:
  if override_dir is not None and (override_dir / name).exists():
    return override_dir / name
  return Path(default_dir) / name
