"""Parsing of ``<think>/<answer>`` model outputs and task-specific payloads."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

TAG_RE = re.compile(r"</?(?:think|answer)>")
TEMPLATE_RE = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)
THINK_BLOCK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
ANSWER_BLOCK_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)

# A bracketed list of bracketed entries; entry contents are validated separately.
BOX_LIST_RE = re.compile(r"\[\s*\[[^\[\]]*\](?:\s*,\s*\[[^\[\]]*\])*\s*,?\s*\]")
BOX_ENTRY_RE = re.compile(r"\[([^\[\]]*)\]")
NUMBER_RE = re.compile(r"^\s*\+?(\d+(?:\.\d*)?|\.\d+)\s*$")

PAREN_OPTION_RE = re.compile(r"\(\s*([A-Za-z])\s*\)")
LEADING_OPTION_RE = re.compile(r"^\s*([A-Za-z])(?:\s*[.):]|\s*$)")
PROMPT_OPTION_RE = re.compile(r"\(([A-Z])\)")


class TaskKind(str, enum.Enum):
    CLASSIFICATION = "cls"
    DETECTION = "det"
    SEGMENTATION = "seg"
    VQA_CLOSED = "vqa_closed"
    VQA_OPEN = "vqa_open"


@dataclass(frozen=True)
class ParsedResponse:
    think: Optional[str]
    answer: Optional[str]
    format_ok: bool


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if min(self.x_min, self.y_min) < 0:
            raise ValueError(f"negative box coordinate: {self}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box: {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


def parse_response(raw: str) -> ParsedResponse:
    """Split a raw model output into its reasoning and answer parts.

    ``format_ok`` holds only for exactly one think block followed by exactly
    one answer block with nothing but whitespace around them. Malformed
    outputs still yield a best-effort ``answer`` so task scoring can proceed:
    the first closed answer block if there is one, otherwise the whole text
    with tags removed.
    """
    m = TEMPLATE_RE.fullmatch(raw)
    if m is not None:
        think, answer = m.group(1), m.group(2)
        if not TAG_RE.search(think) and not TAG_RE.search(answer):
            return ParsedResponse(think.strip(), answer.strip(), True)

    tm = THINK_BLOCK_RE.search(raw)
    think = TAG_RE.sub(" ", tm.group(1)).strip() if tm else None
    am = ANSWER_BLOCK_RE.search(raw)
    if am is not None:
        answer = TAG_RE.sub(" ", am.group(1)).strip()
    else:
        answer = " ".join(TAG_RE.sub(" ", raw).split())
    return ParsedResponse(think, answer, False)


def _parse_number(text: str) -> Optional[float]:
    m = NUMBER_RE.match(text)
    return float(m.group(1)) if m else None


def parse_boxes(answer: Optional[str]) -> list[BoundingBox]:
    """Parse the first ``[[x_min, y_min, x_max, y_max], ...]`` list in ``answer``.

    Entries with the wrong arity, non-numeric fields or an empty extent are
    dropped one by one; no list at all means no predictions.
    """
    if not answer:
        return []
    m = BOX_LIST_RE.search(answer)
    if m is None:
        return []
    boxes = []
    for entry in BOX_ENTRY_RE.findall(m.group(0)):
        fields = entry.split(",")
        if len(fields) != 4:
            continue
        values = [_parse_number(f) for f in fields]
        if any(v is None for v in values):
            continue
        x0, y0, x1, y1 = values
        if x0 < x1 and y0 < y1:
            boxes.append(BoundingBox(x0, y0, x1, y1))
    return boxes


OptionSpec = Union[Mapping[str, str], Sequence[str]]


def normalize_text(text: str) -> str:
    """Casefold, collapse whitespace, drop trailing sentence punctuation."""
    return " ".join(text.strip().rstrip(".!?;,").split()).casefold()


def extract_option(answer: Optional[str], options: OptionSpec) -> Optional[str]:
    """Map a free-text answer to one of the option labels, or None.

    Rules, first hit wins: a parenthesized letter such as ``(B)``; a leading
    letter such as ``B.``, ``B)`` or a bare ``B``; a case-insensitive exact
    match of an option's full text. ``options`` is either a label->text
    mapping or a plain sequence of labels.
    """
    if not answer:
        return None
    if isinstance(options, Mapping):
        texts = {k.upper(): v for k, v in options.items()}
    else:
        texts = {k.upper(): None for k in options}

    for m in PAREN_OPTION_RE.finditer(answer):
        label = m.group(1).upper()
        if label in texts:
            return label

    m = LEADING_OPTION_RE.match(answer)
    if m and m.group(1).upper() in texts:
        return m.group(1).upper()

    norm = normalize_text(answer)
    for label, text in texts.items():
        if text and normalize_text(text) == norm:
            return label
    return None


def parse_prompt_options(prompt: str) -> dict[str, str]:
    """Read ``(A) text, (B) text, ...`` option lists out of a prompt."""
    marks = list(PROMPT_OPTION_RE.finditer(prompt))
    options: dict[str, str] = {}
    for i, m in enumerate(marks):
        end = marks[i + 1].start() if i + 1 < len(marks) else len(prompt)
        text = prompt[m.end():end].strip().rstrip(",;").strip()
        if i + 1 == len(marks):
            # the last option may run into the end of a sentence
            text = text.split("\n")[0].strip().rstrip(".?!").strip()
        options.setdefault(m.group(1), text)
    return options


def route_task(prompt: str) -> TaskKind:
    """Pick the task kind for a prompt from its template shape; total."""
    head = prompt.lstrip().casefold()
    if head.startswith("classify this pathological image"):
        return TaskKind.CLASSIFICATION
    if head.startswith("detect"):
        return TaskKind.DETECTION
    if head.startswith("segment"):
        return TaskKind.SEGMENTATION
    labels = [m.group(1) for m in PROMPT_OPTION_RE.finditer(prompt)]
    if "A" in labels and "B" in labels:
        return TaskKind.VQA_CLOSED
    return TaskKind.VQA_OPEN
