"""Composite task-aware rewards: ``total = r_task + lambda * r_format``."""

from __future__ import annotations

import math
import string
from dataclasses import dataclass
from typing import Optional, Protocol, Sequence, Union

import numpy as np

from . import metrics
from .parsing import (
    BoundingBox,
    OptionSpec,
    ParsedResponse,
    TaskKind,
    extract_option,
    normalize_text,
    parse_boxes,
    parse_response,
)

LETTERS = tuple(string.ascii_uppercase)


class MalformedRecord(ValueError):
    """Ground truth does not fit the task it is paired with."""


@dataclass(frozen=True)
class RewardConfig:
    lam: float = 1.0
    iou_threshold: float = 0.5

    def __post_init__(self):
        if not (math.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be finite and non-negative, got {self.lam}")


@dataclass(frozen=True)
class ClsLabel:
    label: str


@dataclass(frozen=True)
class DetBoxes:
    boxes: tuple[BoundingBox, ...]


@dataclass(frozen=True, eq=False)
class SegMask:
    mask: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


@dataclass(frozen=True)
class ClosedAnswer:
    answer: str


@dataclass(frozen=True)
class OpenAnswer:
    reference: str


GroundTruth = Union[ClsLabel, DetBoxes, SegMask, ClosedAnswer, OpenAnswer]

GT_TYPES = {
    TaskKind.CLASSIFICATION: ClsLabel,
    TaskKind.DETECTION: DetBoxes,
    TaskKind.SEGMENTATION: SegMask,
    TaskKind.VQA_CLOSED: ClosedAnswer,
    TaskKind.VQA_OPEN: OpenAnswer,
}


@dataclass(frozen=True)
class RewardBreakdown:
    r_task: float
    r_format: int
    lam: float
    total: float
    format_ok: bool
    extracted: Optional[str] = None
    n_boxes: Optional[int] = None

    def to_dict(self) -> dict:
        return {
            "r_task": self.r_task,
            "r_format": self.r_format,
            "lambda": self.lam,
            "total": self.total,
            "format_ok": self.format_ok,
            "extracted": self.extracted,
            "n_boxes": self.n_boxes,
        }


class PromptableSegmenter(Protocol):
    def __call__(self, image, boxes: Sequence[BoundingBox]) -> np.ndarray: ...


@dataclass(frozen=True)
class BoxFillSegmenter:
    """Stand-in segmenter: union of the prompt boxes, rasterized.

    A pixel cell is set when its center lies inside some box; ``image`` is
    anything carrying the output ``(h, w)`` either as a 2-tuple or a
    ``.shape``.
    """

    def __call__(self, image, boxes: Sequence[BoundingBox]) -> np.ndarray:
        h, w = _image_dims(image)
        mask = np.zeros((h, w), dtype=bool)
        for b in boxes:
            c0 = max(0, math.ceil(b.x_min - 0.5))
            c1 = min(w, math.floor(b.x_max - 0.5) + 1)
            r0 = max(0, math.ceil(b.y_min - 0.5))
            r1 = min(h, math.floor(b.y_max - 0.5) + 1)
            if c0 < c1 and r0 < r1:
                mask[r0:r1, c0:c1] = True
        return mask


def _image_dims(image) -> tuple[int, int]:
    if hasattr(image, "shape"):
        return int(image.shape[0]), int(image.shape[1])
    h, w = image
    return int(h), int(w)


def _compose(r_task: float, parsed: ParsedResponse, cfg: RewardConfig, **diag) -> RewardBreakdown:
    r_format = format_reward(parsed)
    return RewardBreakdown(
        r_task=float(r_task),
        r_format=r_format,
        lam=cfg.lam,
        total=float(r_task) + cfg.lam * r_format,
        format_ok=parsed.format_ok,
        **diag,
    )


def format_reward(parsed: ParsedResponse) -> int:
    return 1 if parsed.format_ok else 0


def reward_classification(parsed: ParsedResponse, gt: ClsLabel,
                          options: Optional[OptionSpec] = None,
                          cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    pred = extract_option(parsed.answer, options if options else LETTERS)
    hit = pred is not None and pred == gt.label.upper()
    return _compose(1.0 if hit else 0.0, parsed, cfg, extracted=pred)


def reward_detection(parsed: ParsedResponse, gt: DetBoxes,
                     cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    boxes = parse_boxes(parsed.answer)
    ap = metrics.average_precision(boxes, list(gt.boxes), cfg.iou_threshold)
    return _compose(ap, parsed, cfg, n_boxes=len(boxes))


def reward_segmentation(parsed: ParsedResponse, gt: SegMask,
                        segmenter: Optional[PromptableSegmenter] = None,
                        image=None,
                        cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    segmenter = segmenter or BoxFillSegmenter()
    image = gt.shape if image is None else image
    boxes = parse_boxes(parsed.answer)
    pred = segmenter(image, boxes)
    if pred.shape != gt.shape:
        raise MalformedRecord(f"segmenter produced {pred.shape}, ground truth is {gt.shape}")
    return _compose(metrics.dice(pred, gt.mask), parsed, cfg, n_boxes=len(boxes))


def _closed_match(answer: Optional[str], gt: str, options: Optional[OptionSpec]) -> tuple[bool, Optional[str]]:
    target = gt.strip()
    if len(target) == 1 and target.isalpha():
        pred = extract_option(answer, options if options else LETTERS)
        return pred is not None and pred == target.upper(), pred
    if options:
        # gt given as option text: resolve it to its label first
        label = extract_option(target, options)
        if label is not None:
            pred = extract_option(answer, options)
            return pred == label, pred
    norm = normalize_text(answer or "")
    return norm == normalize_text(target), norm


def reward_vqa(parsed: ParsedResponse, gt: Union[ClosedAnswer, OpenAnswer],
               options: Optional[OptionSpec] = None,
               cfg: RewardConfig = RewardConfig()) -> RewardBreakdown:
    if isinstance(gt, ClosedAnswer):
        hit, pred = _closed_match(parsed.answer, gt.answer, options)
        return _compose(1.0 if hit else 0.0, parsed, cfg, extracted=pred)
    if isinstance(gt, OpenAnswer):
        score = metrics.bleu4(parsed.answer or "", gt.reference).score
        return _compose(score, parsed, cfg, extracted=parsed.answer)
    raise MalformedRecord(f"VQA ground truth expected, got {type(gt).__name__}")


def score(task: Union[TaskKind, str], raw: str, gt: GroundTruth,
          cfg: RewardConfig = RewardConfig(),
          segmenter: Optional[PromptableSegmenter] = None,
          image=None,
          options: Optional[OptionSpec] = None) -> RewardBreakdown:
    """Score one raw response for ``task`` against its ground truth."""
    task = TaskKind(task)
    expected = GT_TYPES[task]
    if not isinstance(gt, expected):
        raise MalformedRecord(f"task {task.value} needs {expected.__name__}, got {type(gt).__name__}")
    parsed = parse_response(raw)
    if task is TaskKind.CLASSIFICATION:
        return reward_classification(parsed, gt, options, cfg)
    if task is TaskKind.DETECTION:
        return reward_detection(parsed, gt, cfg)
    if task is TaskKind.SEGMENTATION:
        return reward_segmentation(parsed, gt, segmenter, image, cfg)
    return reward_vqa(parsed, gt, options, cfg)
