"""JSON wire shapes for ground truths (shared by files and the HTTP service)."""

from __future__ import annotations

import numpy as np

from .metrics import decode_rle, encode_rle
from .parsing import BoundingBox, TaskKind
from .rewards import (
    ClosedAnswer,
    ClsLabel,
    DetBoxes,
    GroundTruth,
    MalformedRecord,
    OpenAnswer,
    SegMask,
)

GT_KEYS = {
    TaskKind.CLASSIFICATION: "label",
    TaskKind.DETECTION: "boxes",
    TaskKind.SEGMENTATION: "mask",
    TaskKind.VQA_CLOSED: "answer",
    TaskKind.VQA_OPEN: "reference",
}


def parse_task(value) -> TaskKind:
    try:
        return TaskKind(value)
    except ValueError:
        names = ", ".join(t.value for t in TaskKind)
        raise MalformedRecord(f"unknown task {value!r}; expected one of {names}") from None


def gt_from_wire(task, gt, image=None) -> GroundTruth:
    """Build the typed ground truth for ``task`` from its JSON object."""
    task = parse_task(task)
    if not isinstance(gt, dict):
        raise MalformedRecord("gt must be an object")
    key = GT_KEYS[task]
    if set(gt) != {key}:
        raise MalformedRecord(f"task {task.value} needs gt of shape {{{key!r}: ...}}, got keys {sorted(gt)}")
    value = gt[key]

    if task is TaskKind.DETECTION:
        if not isinstance(value, list):
            raise MalformedRecord("gt.boxes must be a list")
        boxes = []
        for b in value:
            if not (isinstance(b, list) and len(b) == 4 and all(_is_number(v) for v in b)):
                raise MalformedRecord(f"bad gt box {b!r}")
            try:
                boxes.append(BoundingBox(*map(float, b)))
            except ValueError as e:
                raise MalformedRecord(str(e)) from None
        return DetBoxes(tuple(boxes))

    if task is TaskKind.SEGMENTATION:
        if not (isinstance(value, dict) and set(value) == {"size", "rle"}):
            raise MalformedRecord("gt.mask must be {'size': [h, w], 'rle': [...]}")
        size, rle = value["size"], value["rle"]
        if not (isinstance(size, list) and len(size) == 2 and all(isinstance(v, int) for v in size)):
            raise MalformedRecord("gt.mask.size must be [h, w]")
        if not (isinstance(rle, list) and all(isinstance(v, int) for v in rle)):
            raise MalformedRecord("gt.mask.rle must be a list of integers")
        try:
            mask = decode_rle(size, rle)
        except ValueError as e:
            raise MalformedRecord(str(e)) from None
        if image is not None:
            h, w = image_dims(image)
            if (h, w) != mask.shape:
                raise MalformedRecord(f"image {h}x{w} does not match mask {mask.shape[0]}x{mask.shape[1]}")
        return SegMask(mask)

    if not isinstance(value, str):
        raise MalformedRecord(f"gt.{key} must be a string")
    if task is TaskKind.CLASSIFICATION:
        label = value.strip().upper()
        if len(label) != 1 or not label.isalpha():
            raise MalformedRecord(f"gt.label must be a single option letter, got {value!r}")
        return ClsLabel(label)
    if task is TaskKind.VQA_CLOSED:
        return ClosedAnswer(value)
    return OpenAnswer(value)


def gt_to_wire(gt: GroundTruth) -> dict:
    if isinstance(gt, ClsLabel):
        return {"label": gt.label}
    if isinstance(gt, DetBoxes):
        return {"boxes": [b.as_list() for b in gt.boxes]}
    if isinstance(gt, SegMask):
        return {"mask": encode_rle(gt.mask)}
    if isinstance(gt, ClosedAnswer):
        return {"answer": gt.answer}
    if isinstance(gt, OpenAnswer):
        return {"reference": gt.reference}
    raise TypeError(f"not a ground truth: {gt!r}")


def image_dims(image) -> tuple[int, int]:
    if isinstance(image, dict):
        try:
            h, w = image["h"], image["w"]
        except KeyError:
            raise MalformedRecord("image must be {'h': int, 'w': int}") from None
    else:
        h, w = image
    if not (isinstance(h, (int, np.integer)) and isinstance(w, (int, np.integer)) and h > 0 and w > 0):
        raise MalformedRecord(f"image dims must be positive integers, got {image!r}")
    return int(h), int(w)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)
