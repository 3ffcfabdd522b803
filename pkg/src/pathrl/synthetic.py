"""Synthetic evaluation records in the JSONL wire format."""

from __future__ import annotations

import json

import numpy as np

from .metrics import encode_rle
from .parsing import BoundingBox
from .rewards import BoxFillSegmenter

CLASSES = ["Tumor", "Normal", "Stroma", "Blood", "Necrosis"]
SENTENCES = [
    "the image shows glands lined by atypical columnar cells",
    "there is dense lymphocytic infiltration around the tumor nests",
    "sheets of pleomorphic cells with frequent mitotic figures are present",
    "the stroma is fibrotic with scattered inflammatory cells",
    "normal renal tubules surround a small focus of clear cells",
    "the nuclei are enlarged with prominent nucleoli",
]
FILLER = ["cells", "tissue", "pattern", "lesion", "region", "area", "visible", "mild"]

# model name -> (answer accuracy, format compliance, box jitter in px)
MODELS = {
    "model-strong": (0.9, 0.95, 2.0),
    "model-mid": (0.7, 0.8, 6.0),
    "model-weak": (0.45, 0.5, 14.0),
    "model-base": (0.3, 0.2, 25.0),
}
DATASETS = [("cls-synth", "cls", 35), ("det-synth", "det", 25), ("seg-synth", "seg", 15),
            ("vqa-closed-synth", "vqa_closed", 30), ("vqa-open-synth", "vqa_open", 20)]


def _wrap(answer: str, ok: bool, rng) -> str:
    if ok:
        return f"<think>looking at the morphology</think>\n<answer>{answer}</answer>"
    return answer if rng.random() < 0.5 else f"<answer>{answer}</answer> final"


def _random_boxes(rng, size: int, k: int) -> list[list[float]]:
    boxes = []
    for _ in range(k):
        w, h = rng.integers(size // 10, size // 3, size=2)
        x, y = rng.integers(0, size - w), rng.integers(0, size - h)
        boxes.append([int(x), int(y), int(x + w), int(y + h)])
    return boxes


def _jitter(rng, boxes, scale: float, size: int) -> list[list[float]]:
    out = []
    for b in boxes:
        x0, y0, x1, y1 = (np.array(b, float) + rng.normal(0, scale, 4)).clip(0, size)
        if x1 - x0 >= 1 and y1 - y0 >= 1:
            out.append([round(float(v), 1) for v in (x0, y0, x1, y1)])
    return out


def generate(seed: int = 42, models=MODELS, datasets=DATASETS) -> list[dict]:
    rng = np.random.default_rng(seed)
    items = []
    for ds, task, n in datasets:
        for i in range(n):
            rid = f"{ds}-{i:03d}"
            if task == "cls":
                gt_idx = int(rng.integers(len(CLASSES)))
                opts = ", ".join(f"({chr(65 + j)}) {c}" for j, c in enumerate(CLASSES))
                items.append((ds, task, rid, f"Classify this pathological image into one of these classes: {opts}.",
                              {"label": chr(65 + gt_idx)}, None, gt_idx))
            elif task == "det":
                boxes = _random_boxes(rng, 256, int(rng.integers(1, 5)))
                items.append((ds, task, rid, "Detect nuclei in pathology colon. Output bounding boxes in "
                              "[[x_min, y_min, x_max, y_max],...] format.", {"boxes": boxes}, (256, 256), boxes))
            elif task == "seg":
                boxes = _random_boxes(rng, 64, int(rng.integers(1, 4)))
                mask = BoxFillSegmenter()((64, 64), [BoundingBox(*b) for b in boxes])
                items.append((ds, task, rid, "Segment glands in pathology colon. Output bounding boxes in "
                              "[[x_min, y_min, x_max, y_max],...] format.", {"mask": encode_rle(mask)},
                              (64, 64), boxes))
            elif task == "vqa_closed":
                gt_idx = int(rng.integers(4))
                opts = " ".join(f"({chr(65 + j)}) {c}" for j, c in enumerate(CLASSES[:4]))
                items.append((ds, task, rid, f"Which tissue type dominates this region? {opts}",
                              {"answer": chr(65 + gt_idx)}, None, gt_idx))
            else:
                ref = SENTENCES[int(rng.integers(len(SENTENCES)))]
                items.append((ds, task, rid, "Describe the key histological finding?",
                              {"reference": ref}, None, ref))

    records = []
    for model, (acc, fmt, jitter) in models.items():
        for ds, task, rid, prompt, gt, image, payload in items:
            ok = bool(rng.random() < fmt)
            good = bool(rng.random() < acc)
            if task in ("cls", "vqa_closed"):
                n_opt = len(CLASSES) if task == "cls" else 4
                idx = payload if good else int((payload + rng.integers(1, n_opt)) % n_opt)
                answer = f"({chr(65 + idx)}) {CLASSES[idx]}" if rng.random() < 0.7 else CLASSES[idx]
            elif task in ("det", "seg"):
                size = image[0]
                kept = [b for b in payload if rng.random() < 0.5 + acc / 2]
                preds = _jitter(rng, kept, jitter * size / 256, size)
                if not good:
                    preds += _random_boxes(rng, size, int(rng.integers(1, 3)))
                answer = json.dumps(preds)
            else:
                words = payload.split()
                if not good:
                    for _ in range(int(rng.integers(1, len(words)))):
                        words[int(rng.integers(len(words)))] = FILLER[int(rng.integers(len(FILLER)))]
                answer = " ".join(words)
            rec = {"id": rid, "dataset": ds, "task": task, "model": model, "prompt": prompt,
                   "response": _wrap(answer, ok, rng), "gt": gt}
            if image is not None:
                rec["image"] = {"h": image[0], "w": image[1]}
            records.append(rec)
    return records


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
