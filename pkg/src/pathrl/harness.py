"""Record ingestion, per-task metrics with bootstrap CIs, pairwise tests, reports."""

from __future__ import annotations

import csv
import io
import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import metrics, stats
from .parsing import TaskKind, parse_boxes, parse_prompt_options, parse_response
from .rewards import GroundTruth, MalformedRecord, RewardConfig, score
from .wire import gt_from_wire, image_dims, parse_task

log = logging.getLogger(__name__)

AP_THRESHOLDS = {"AP30": 0.3, "AP50": 0.5, "AP70": 0.7}
TASK_METRICS = {
    TaskKind.CLASSIFICATION: ("ACC", "F1"),
    TaskKind.DETECTION: ("AP30", "AP50", "AP70"),
    TaskKind.SEGMENTATION: ("Dice",),
    TaskKind.VQA_CLOSED: ("ACC",),
    TaskKind.VQA_OPEN: ("BLEU4",),
}
PRIMARY_METRIC = {
    TaskKind.CLASSIFICATION: "ACC",
    TaskKind.DETECTION: "AP50",
    TaskKind.SEGMENTATION: "Dice",
    TaskKind.VQA_CLOSED: "ACC",
    TaskKind.VQA_OPEN: "BLEU4",
}
REPORT_FIELDS = ["dataset", "task", "model", "metric", "point", "ci_low", "ci_high", "n"]
WILCOXON_FIELDS = ["dataset", "metric", "model_a", "model_b", "n_pairs", "p_value", "note"]


@dataclass
class TaskRecord:
    id: str
    task: TaskKind
    model: str
    prompt: str
    response: str
    gt: GroundTruth
    image: Optional[tuple[int, int]] = None
    dataset: str = ""

    def __post_init__(self):
        if not self.dataset:
            self.dataset = self.task.value


@dataclass
class IngestError:
    line: int
    message: str


@dataclass
class TaskReport:
    dataset: str
    task: str
    model: str
    metric: str
    point: float
    ci_low: float
    ci_high: float
    n: int


def record_from_json(obj) -> TaskRecord:
    if not isinstance(obj, dict):
        raise MalformedRecord("record must be a JSON object")
    missing = [k for k in ("id", "task", "model", "prompt", "response", "gt") if k not in obj]
    if missing:
        raise MalformedRecord(f"missing fields: {', '.join(missing)}")
    for k in ("id", "model", "prompt", "response"):
        if not isinstance(obj[k], str):
            raise MalformedRecord(f"field {k!r} must be a string")
    task = parse_task(obj["task"])
    image = obj.get("image")
    if task is TaskKind.SEGMENTATION and image is None:
        raise MalformedRecord("segmentation records need image {'h', 'w'}")
    image = image_dims(image) if image is not None else None
    dataset = obj.get("dataset", "")
    if not isinstance(dataset, str):
        raise MalformedRecord("field 'dataset' must be a string")
    return TaskRecord(
        id=obj["id"], task=task, model=obj["model"], prompt=obj["prompt"],
        response=obj["response"], gt=gt_from_wire(task, obj["gt"], image),
        image=image, dataset=dataset,
    )


def ingest(path) -> tuple[list[TaskRecord], list[IngestError]]:
    """Read line-delimited JSON records; bad lines become per-line errors.

    An unreadable file raises ``OSError``.
    """
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except json.JSONDecodeError as e:
                errors.append(IngestError(lineno, f"invalid JSON: {e.msg}"))
            except MalformedRecord as e:
                errors.append(IngestError(lineno, str(e)))
    if not records and not errors:
        log.warning("%s contains no records", path)
    for err in errors:
        log.warning("%s:%d: %s", path, err.line, err.message)
    return records, errors


# -- per-record scoring ----------------------------------------------------------

@dataclass
class ScoredGroup:
    """Per-record quantities a group's metrics are recomputed from."""

    dataset: str
    task: TaskKind
    model: str
    ids: list[str]
    per_record: np.ndarray  # primary metric per record, used for paired tests
    labels_true: list = field(default_factory=list)
    labels_pred: list = field(default_factory=list)
    det_flags: dict = field(default_factory=dict)  # metric -> list of per-record TP flag arrays
    det_ngt: Optional[np.ndarray] = None


def score_group(records: Sequence[TaskRecord], cfg: RewardConfig = RewardConfig()) -> ScoredGroup:
    first = records[0]
    group = ScoredGroup(first.dataset, first.task, first.model, [r.id for r in records],
                        np.zeros(len(records)))
    if first.task is TaskKind.DETECTION:
        group.det_flags = {m: [] for m in AP_THRESHOLDS}
        group.det_ngt = np.array([len(r.gt.boxes) for r in records])

    for i, rec in enumerate(records):
        options = parse_prompt_options(rec.prompt) or None
        res = score(rec.task, rec.response, rec.gt, cfg, image=rec.image, options=options)
        group.per_record[i] = res.r_task
        if rec.task is TaskKind.CLASSIFICATION:
            group.labels_true.append(rec.gt.label)
            group.labels_pred.append(res.extracted)
        elif rec.task is TaskKind.DETECTION:
            boxes = parse_boxes(parse_response(rec.response).answer)
            for name, t in AP_THRESHOLDS.items():
                group.det_flags[name].append(metrics.match_predictions(boxes, rec.gt.boxes, t))
            group.per_record[i] = metrics.ap_from_flags(group.det_flags["AP50"][-1], len(rec.gt.boxes))
    return group


def pooled_ap(flags: Sequence[np.ndarray], n_gt: np.ndarray, idx: np.ndarray) -> float:
    """Dataset-level AP over the records ``idx`` (repeats allowed).

    Predictions are ranked by emission position within their response, then
    by the record's position in ``idx``.
    """
    chosen = [flags[i] for i in idx]
    if not chosen:
        return 0.0
    lengths = np.array([len(f) for f in chosen])
    all_flags = np.concatenate(chosen) if lengths.sum() else np.zeros(0, dtype=bool)
    emission = np.concatenate([np.arange(k) for k in lengths]) if lengths.sum() else np.zeros(0, int)
    position = np.repeat(np.arange(len(chosen)), lengths)
    order = np.lexsort((position, emission))
    return metrics.ap_from_flags(all_flags[order], int(n_gt[idx].sum()))


def metric_fn(group: ScoredGroup, metric: str):
    """Return ``f(indices) -> value`` for one metric of a scored group."""
    if metric in AP_THRESHOLDS:
        flags = group.det_flags[metric]
        return lambda idx: pooled_ap(flags, group.det_ngt, idx)
    if metric == "F1":
        t = np.array(group.labels_true, dtype=object)
        p = np.array(group.labels_pred, dtype=object)
        return lambda idx: metrics.f1(list(t[idx]), list(p[idx]))
    # ACC, Dice, BLEU4: mean of per-record scores
    vals = group.per_record
    return lambda idx: float(vals[idx].mean())


def evaluate(records: Sequence[TaskRecord], n_resamples: int = 1000, seed: int = 42,
             cfg: RewardConfig = RewardConfig(),
             metric_names: Optional[Iterable[str]] = None) -> tuple[list[TaskReport], dict]:
    """Point estimates and percentile-bootstrap 95% CIs per (dataset, model).

    Returns the reports and the scored groups keyed by ``(dataset, model)``
    (for paired tests).
    """
    wanted = set(metric_names) if metric_names else None
    groups: dict[tuple[str, str], list[TaskRecord]] = {}
    for rec in records:
        groups.setdefault((rec.dataset, rec.model), []).append(rec)

    reports, scored = [], {}
    for key in sorted(groups):
        recs = groups[key]
        kinds = {r.task for r in recs}
        if len(kinds) > 1:
            raise MalformedRecord(f"dataset {key[0]!r} mixes tasks {sorted(k.value for k in kinds)}")
        group = score_group(recs, cfg)
        scored[key] = group
        n = len(recs)
        draws = stats.bootstrap_indices(n, n_resamples, stats.group_rng(seed, "/".join(key)))
        everything = np.arange(n)
        for metric in TASK_METRICS[group.task]:
            if wanted is not None and metric not in wanted:
                continue
            fn = metric_fn(group, metric)
            low, high = stats.percentile_interval([fn(idx) for idx in draws])
            reports.append(TaskReport(key[0], group.task.value, key[1], metric,
                                      float(fn(everything)), low, high, n))
    return reports, scored


def pairwise_wilcoxon(scored: dict) -> tuple[list[dict], list[str]]:
    """Signed-rank p-values between every model pair on each dataset.

    Pairs are matched on record id and compared on the primary metric's
    per-record values. Underpowered pairs are reported without a p-value.
    """
    rows, warnings = [], []
    datasets = sorted({d for d, _ in scored})
    for ds in datasets:
        models = sorted(m for d, m in scored if d == ds)
        for a, b in itertools.combinations(models, 2):
            ga, gb = scored[(ds, a)], scored[(ds, b)]
            pos_b = {rid: i for i, rid in enumerate(gb.ids)}
            common = [(i, pos_b[rid]) for i, rid in enumerate(ga.ids) if rid in pos_b]
            va = np.array([ga.per_record[i] for i, _ in common])
            vb = np.array([gb.per_record[j] for _, j in common])
            row = {"dataset": ds, "metric": PRIMARY_METRIC[ga.task], "model_a": a, "model_b": b,
                   "n_pairs": len(common), "p_value": None, "note": ""}
            try:
                row["p_value"] = stats.wilcoxon_signed_rank(va, vb)
            except stats.UnderpoweredTest as e:
                row["note"] = f"skipped: {e}"
                warnings.append(f"wilcoxon {ds} {a} vs {b} skipped: {e}")
                log.warning(warnings[-1])
            rows.append(row)
    return rows, warnings


# -- output ----------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: Sequence[dict], fields: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    for row in rows:
        writer.writerow([_fmt(row[f]) for f in fields])
    return buf.getvalue()


def report_table(reports: Sequence[TaskReport]) -> str:
    """Fixed-width human-readable table."""
    header = f"{'dataset':<20} {'task':<10} {'model':<16} {'metric':<6} {'point':>7} {'95% CI':>17} {'n':>5}"
    lines = [header, "-" * len(header)]
    for r in reports:
        ci = f"[{r.ci_low:.4f}, {r.ci_high:.4f}]"
        lines.append(f"{r.dataset:<20} {r.task:<10} {r.model:<16} {r.metric:<6} {r.point:>7.4f} {ci:>17} {r.n:>5}")
    return "\n".join(lines) + "\n"


def write_reports(out_dir, reports: Sequence[TaskReport], wilcoxon_rows: Optional[list] = None,
                  meta: Optional[dict] = None) -> list[Path]:
    """Write report.json, report.csv, report.txt and (optionally) wilcoxon.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [asdict(r) for r in reports]
    doc = {"meta": meta or {}, "reports": rows}
    if wilcoxon_rows is not None:
        doc["wilcoxon"] = wilcoxon_rows
    written = []
    path = out / "report.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    written.append(path)
    path = out / "report.csv"
    path.write_text(to_csv(rows, REPORT_FIELDS))
    written.append(path)
    path = out / "report.txt"
    path.write_text(report_table(reports))
    written.append(path)
    if wilcoxon_rows is not None:
        path = out / "wilcoxon.csv"
        path.write_text(to_csv(wilcoxon_rows, WILCOXON_FIELDS))
        written.append(path)
    return written


def load_report_values(paths: Iterable[Path]) -> dict[str, dict[str, float]]:
    """Primary-metric point estimates, ``dataset -> model -> value``, from report.json files."""
    values: dict[str, dict[str, float]] = {}
    for p in paths:
        doc = json.loads(Path(p).read_text())
        for r in doc["reports"]:
            if r["metric"] != PRIMARY_METRIC[TaskKind(r["task"])]:
                continue
            values.setdefault(r["dataset"], {})[r["model"]] = r["point"]
    return values
