import json

import numpy as np
import pytest

from pathrl import harness
from pathrl.harness import evaluate, ingest, pairwise_wilcoxon, write_reports

from oracles import exhaustive_ap, greedy_flags

CLS_PROMPT = "Classify this pathological image into one of these classes: (A) Tumor, (B) Normal."


def cls_record(i, model="m", label="A", answer="(A) Tumor", fmt=True):
    resp = f"<think>t</think><answer>{answer}</answer>" if fmt else answer
    return {"id": f"r{i}", "task": "cls", "model": model, "prompt": CLS_PROMPT,
            "response": resp, "gt": {"label": label}}


def write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines))
    return path


def test_ingest_three_lines(tmp_path):
    p = write_lines(tmp_path / "r.jsonl", [json.dumps(cls_record(i)) for i in range(3)])
    records, errors = ingest(p)
    assert len(records) == 3 and errors == []
    assert records[0].dataset == "cls"


def test_ingest_soft_errors(tmp_path):
    bad_variant = cls_record(1)
    bad_variant["task"] = "det"
    seg_no_image = {"id": "s", "task": "seg", "model": "m", "prompt": "Segment x", "response": "",
                    "gt": {"mask": {"size": [2, 2], "rle": [4]}}}
    p = write_lines(tmp_path / "r.jsonl", [
        json.dumps(cls_record(0)), json.dumps(bad_variant), "{not json", "",
        json.dumps(seg_no_image), json.dumps(["a"]),
    ])
    records, errors = ingest(p)
    assert len(records) == 1
    assert [e.line for e in errors] == [2, 3, 5, 6]


def test_ingest_empty_file_warns(tmp_path, caplog):
    p = write_lines(tmp_path / "e.jsonl", [])
    assert ingest(p) == ([], [])
    assert "no records" in caplog.text


def test_ingest_unreadable_is_fatal(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "missing.jsonl")


def records_from(objs):
    return [harness.record_from_json(o) for o in objs]


def test_all_correct_classification():
    reports, _ = evaluate(records_from([cls_record(i) for i in range(12)]), n_resamples=200)
    acc = next(r for r in reports if r.metric == "ACC")
    assert (acc.point, acc.ci_low, acc.ci_high, acc.n) == (1.0, 1.0, 1.0, 12)
    assert {r.metric for r in reports} == {"ACC", "F1"}


def test_ci_ordering_and_metric_filter():
    objs = [cls_record(i, answer="(A)" if i % 3 else "(B)") for i in range(30)]
    reports, _ = evaluate(records_from(objs), n_resamples=300, metric_names=["ACC"])
    assert [r.metric for r in reports] == ["ACC"]
    r = reports[0]
    assert r.ci_low <= r.point <= r.ci_high
    assert r.point == pytest.approx(20 / 30)


def det_corpus(seed, n=20):
    rng = np.random.default_rng(seed)
    objs, truth = [], []
    for i in range(n):
        gts = []
        for _ in range(int(rng.integers(0, 4))):
            x, y = rng.integers(0, 40, 2)
            w, h = rng.integers(4, 20, 2)
            gts.append([int(x), int(y), int(x + w), int(y + h)])
        preds = []
        for g in gts:
            if rng.random() < 0.7:
                preds.append([max(0, int(v + rng.integers(-3, 4))) for v in g])
        for _ in range(int(rng.integers(0, 3))):
            x, y = rng.integers(0, 40, 2)
            preds.append([int(x), int(y), int(x + rng.integers(3, 20)), int(y + rng.integers(3, 20))])
        preds = [p for p in preds if p[0] < p[2] and p[1] < p[3]]
        order = rng.permutation(len(preds))
        preds = [preds[k] for k in order]
        objs.append({"id": f"d{i}", "task": "det", "model": "m", "prompt": "Detect nuclei",
                     "response": f"<think>x</think><answer>{json.dumps(preds)}</answer>",
                     "gt": {"boxes": gts}})
        truth.append((preds, gts))
    return objs, truth


@pytest.mark.parametrize("seed", range(5))
def test_detection_ap_matches_pooled_oracle(seed):
    objs, truth = det_corpus(seed)
    reports, _ = evaluate(records_from(objs), n_resamples=50)
    got = {r.metric: r.point for r in reports}
    for metric, t in harness.AP_THRESHOLDS.items():
        per_record = [greedy_flags(p, g, t) for p, g in truth]
        pooled = []
        depth = max((len(f) for f in per_record), default=0)
        for k in range(depth):
            pooled += [f[k] for f in per_record if k < len(f)]
        expected = exhaustive_ap(pooled, sum(len(g) for _, g in truth))
        assert got[metric] == pytest.approx(float(expected), abs=1e-12)


def test_evaluate_is_deterministic():
    objs, _ = det_corpus(9)
    objs += [cls_record(i, answer="(B)" if i % 4 == 0 else "(A)") for i in range(25)]
    a, _ = evaluate(records_from(objs), n_resamples=100, seed=3)
    assert a == evaluate(records_from(objs), n_resamples=100, seed=3)[0]
    assert a != evaluate(records_from(objs), n_resamples=100, seed=4)[0]


def test_mixed_tasks_in_dataset_rejected():
    objs = [cls_record(0)]
    objs.append({"id": "x", "task": "vqa_open", "model": "m", "prompt": "why?", "response": "a",
                 "gt": {"reference": "b"}, "dataset": "cls"})
    with pytest.raises(ValueError):
        evaluate(records_from(objs), n_resamples=10)


def test_pairwise_wilcoxon_underpowered_and_powered():
    objs = [cls_record(i, model="good") for i in range(8)]
    objs += [cls_record(i, model="bad", answer="(B)" if i < 6 else "(A)") for i in range(8)]
    objs += [cls_record(i, model="same") for i in range(8)]
    _, scored = evaluate(records_from(objs), n_resamples=10)
    rows, warnings = pairwise_wilcoxon(scored)
    by_pair = {(r["model_a"], r["model_b"]): r for r in rows}
    assert by_pair[("bad", "good")]["p_value"] == pytest.approx(0.03125)
    assert by_pair[("good", "same")]["p_value"] is None
    assert len(warnings) == 1


def test_write_reports_round_trip(tmp_path):
    reports, _ = evaluate(records_from([cls_record(i) for i in range(6)]), n_resamples=20)
    files = write_reports(tmp_path, reports, meta={"seed": 42})
    assert sorted(f.name for f in files) == ["report.csv", "report.json", "report.txt"]
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["meta"] == {"seed": 42}
    assert (tmp_path / "report.csv").read_text().splitlines()[0] == ",".join(harness.REPORT_FIELDS)
    assert harness.load_report_values([tmp_path / "report.json"]) == {"cls": {"m": 1.0}}
