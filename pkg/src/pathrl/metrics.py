"""Evaluation metrics: IoU, AP, Dice, accuracy, F1 and BLEU-4."""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Optional, Sequence, Union

import numpy as np

from .parsing import BoundingBox

TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.recall.tolist(), self.precision.tolist()))


@dataclass(frozen=True)
class BleuBreakdown:
    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    score: float
    candidate_length: int
    reference_length: int


# -- boxes -------------------------------------------------------------------

def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(preds: Sequence[BoundingBox], gts: Sequence[BoundingBox]) -> np.ndarray:
    """Pairwise IoU, shape ``(len(preds), len(gts))``."""
    if not preds or not gts:
        return np.zeros((len(preds), len(gts)))
    p = np.array([b.as_list() for b in preds], dtype=float)
    g = np.array([b.as_list() for b in gts], dtype=float)
    iw = np.minimum(p[:, None, 2], g[None, :, 2]) - np.maximum(p[:, None, 0], g[None, :, 0])
    ih = np.minimum(p[:, None, 3], g[None, :, 3]) - np.maximum(p[:, None, 1], g[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_p = (p[:, 2] - p[:, 0]) * (p[:, 3] - p[:, 1])
    area_g = (g[:, 2] - g[:, 0]) * (g[:, 3] - g[:, 1])
    union = area_p[:, None] + area_g[None, :] - inter
    return np.where(inter > 0, inter / union, 0.0)


def match_predictions(preds: Sequence[BoundingBox], gts: Sequence[BoundingBox],
                      iou_threshold: float) -> np.ndarray:
    """Greedy one-to-one matching in prediction order; returns TP flags.

    Each prediction takes the still-unmatched ground truth with the highest
    IoU (lowest index on ties) and counts as a true positive when that IoU
    reaches the threshold.
    """
    ious = iou_matrix(preds, gts)
    taken = np.zeros(len(gts), dtype=bool)
    flags = np.zeros(len(preds), dtype=bool)
    for i in range(len(preds)):
        if taken.all():
            break
        row = np.where(taken, -1.0, ious[i])
        j = int(np.argmax(row))
        if row[j] >= iou_threshold:
            taken[j] = True
            flags[i] = True
    return flags


def pr_curve(tp_flags: Sequence[bool], n_gt: int) -> PrCurve:
    flags = np.asarray(tp_flags, dtype=bool)
    tp = np.cumsum(flags)
    ranks = np.arange(1, len(flags) + 1)
    return PrCurve(recall=tp / n_gt, precision=tp / ranks)


def ap_from_flags(tp_flags: Sequence[bool], n_gt: int) -> float:
    """All-point interpolated AP of a ranked TP/FP list against ``n_gt`` targets."""
    if n_gt == 0:
        return 1.0 if len(tp_flags) == 0 else 0.0
    if len(tp_flags) == 0:
        return 0.0
    curve = pr_curve(tp_flags, n_gt)
    envelope = np.maximum.accumulate(curve.precision[::-1])[::-1]
    steps = np.diff(np.concatenate(([0.0], curve.recall)))
    return float(np.sum(steps * envelope))


def average_precision(preds: Sequence[BoundingBox], gts: Sequence[BoundingBox],
                      iou_threshold: float = 0.5) -> float:
    """AP of an unscored, emission-ordered prediction list.

    Empty ground truth scores 1.0 when there are no predictions and 0.0
    otherwise.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    flags = match_predictions(preds, gts, iou_threshold)
    return ap_from_flags(flags, len(gts))


# -- masks -------------------------------------------------------------------

def dice(x, y) -> float:
    x = np.asarray(x, dtype=bool)
    y = np.asarray(y, dtype=bool)
    if x.shape != y.shape:
        raise ValueError(f"mask shapes differ: {x.shape} vs {y.shape}")
    total = int(x.sum()) + int(y.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(x, y).sum()) / total


def decode_rle(size: Sequence[int], counts: Sequence[int]) -> np.ndarray:
    """Row-major run lengths starting with a run of zeros -> boolean mask."""
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise ValueError(f"mask size must be positive, got {size}")
    counts = [int(c) for c in counts]
    if any(c < 0 for c in counts):
        raise ValueError("negative run length")
    if sum(counts) != h * w:
        raise ValueError(f"run lengths sum to {sum(counts)}, expected {h * w}")
    values = np.arange(len(counts)) % 2 == 1
    return np.repeat(values, counts).reshape(h, w)


def encode_rle(mask) -> dict:
    mask = np.asarray(mask, dtype=bool)
    flat = mask.ravel()
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    return {"size": list(mask.shape), "rle": counts}


# -- classification ------------------------------------------------------------

Label = Optional[Hashable]


def accuracy(y_true: Union[ConfusionCounts, Sequence[Label]],
             y_pred: Optional[Sequence[Label]] = None) -> float:
    """Fraction correct; a ``None`` prediction (failed extraction) is wrong."""
    if isinstance(y_true, ConfusionCounts):
        if y_true.total == 0:
            raise ValueError("accuracy of zero samples")
        return (y_true.tp + y_true.tn) / y_true.total
    if y_pred is None or len(y_true) != len(y_pred):
        raise ValueError("paired labels of equal length required")
    if len(y_true) == 0:
        raise ValueError("accuracy of zero samples")
    correct = sum(p is not None and p == t for t, p in zip(y_true, y_pred))
    return correct / len(y_true)


def _binary_f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1(y_true: Union[ConfusionCounts, Sequence[Label]],
       y_pred: Optional[Sequence[Label]] = None,
       average: str = "macro",
       labels: Optional[Iterable[Hashable]] = None) -> float:
    """Binary F1 from counts, or averaged one-vs-rest F1 from paired labels.

    ``average`` is ``"macro"`` (unweighted mean over classes) or
    ``"weighted"`` (support-weighted). Classes come from ``labels`` or from
    the union of seen true/predicted labels.
    """
    if isinstance(y_true, ConfusionCounts):
        return _binary_f1(y_true.tp, y_true.fp, y_true.fn)
    if y_pred is None or len(y_true) != len(y_pred):
        raise ValueError("paired labels of equal length required")
    if labels is None:
        classes = sorted({t for t in y_true} | {p for p in y_pred if p is not None}, key=str)
    else:
        classes = list(labels)
    if not classes:
        return 0.0
    scores, support = [], []
    for c in classes:
        tp = sum(t == c and p == c for t, p in zip(y_true, y_pred))
        fp = sum(t != c and p == c for t, p in zip(y_true, y_pred))
        fn = sum(t == c and p != c for t, p in zip(y_true, y_pred))
        scores.append(_binary_f1(tp, fp, fn))
        support.append(tp + fn)
    if average == "macro":
        return float(np.mean(scores))
    if average == "weighted":
        total = sum(support)
        return float(np.dot(scores, support) / total) if total else 0.0
    raise ValueError(f"unknown averaging mode {average!r}")


# -- text ----------------------------------------------------------------------

def tokenize(text: str) -> list[str]:
    """Lowercase, split punctuation off words, split on whitespace."""
    return TOKEN_RE.findall(text.lower())


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(candidate: Union[str, Sequence[str]], reference: Union[str, Sequence[str]]) -> BleuBreakdown:
    """Sentence BLEU-4 with clipped n-gram precisions and no smoothing."""
    cand = tokenize(candidate) if isinstance(candidate, str) else list(candidate)
    ref = tokenize(reference) if isinstance(reference, str) else list(reference)
    c, r = len(cand), len(ref)

    precisions = []
    for n in range(1, 5):
        cand_counts = _ngrams(cand, n)
        total = sum(cand_counts.values())
        if total == 0:
            precisions.append(0.0)
            continue
        ref_counts = _ngrams(ref, n)
        clipped = sum(min(k, ref_counts[g]) for g, k in cand_counts.items())
        precisions.append(clipped / total)

    if c == 0:
        bp = 0.0
    elif c > r:
        bp = 1.0
    else:
        bp = math.exp(1.0 - r / c)

    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = bp * math.exp(sum(0.25 * math.log(p) for p in precisions))
    return BleuBreakdown(tuple(precisions), bp, score, c, r)
