"""``pathrl`` command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2
DEFAULT_SEED = 42

log = logging.getLogger("pathrl")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _json_arg(text: str, what: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{what} is not valid JSON: {e.msg}") from None


def cmd_score(args) -> int:
    from .service import RequestError, ScoreRequest, handle_score
    from pydantic import ValidationError

    if args.response is None and args.response_file is None:
        raise UsageError("one of --response or --response-file is required")
    response = args.response if args.response is not None else Path(args.response_file).read_text()
    gt = _json_arg(args.gt if args.gt is not None else Path(args.gt_file).read_text(), "gt")
    body = {"task": args.task, "response": response, "gt": gt, "lambda": args.lam}
    if args.image:
        body["image"] = _json_arg(args.image, "image")
    if args.prompt:
        body["prompt"] = args.prompt
    try:
        out = handle_score(ScoreRequest.model_validate(body))
    except (ValidationError, RequestError) as e:
        raise UsageError(str(e)) from None
    print(json.dumps(out.model_dump(by_alias=True), sort_keys=True))
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import harness
    from .rewards import RewardConfig

    records, errors = harness.ingest(args.input)
    reports, scored = harness.evaluate(records, n_resamples=args.bootstrap, seed=args.seed,
                                       cfg=RewardConfig(lam=args.lam))
    wilcoxon_rows = None
    warnings = []
    if args.wilcoxon:
        wilcoxon_rows, warnings = harness.pairwise_wilcoxon(scored)
    meta = {
        "input": Path(args.input).name,
        "seed": args.seed,
        "bootstrap": args.bootstrap,
        "confidence": 0.95,
        "n_records": len(records),
        "ingest_errors": [{"line": e.line, "message": e.message} for e in errors],
        "warnings": warnings,
        "version": __version__,
    }
    written = harness.write_reports(args.out, reports, wilcoxon_rows, meta)
    if args.figures:
        from .plotting import plot_metric_cis
        written += plot_metric_cis(reports, Path(args.out) / "figures")
    sys.stdout.write(harness.report_table(reports))
    for p in written:
        log.info("wrote %s", p)
    return EXIT_OK


def _report_files(inputs) -> list[Path]:
    files = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            files.extend(sorted(p.rglob("report.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise FileNotFoundError(f"no such file or directory: {item}")
    if not files:
        raise FileNotFoundError("no report.json files found")
    return files


def cmd_rank(args) -> int:
    from . import harness
    from .stats import rank_models

    values = harness.load_report_values(_report_files(args.inputs))
    table = rank_models(values, method=args.method)
    doc = table.to_dict()
    rows = [{"model": m, "average_rank": table.average[m],
             **{t: table.ranks[t][m] for t in table.ranks}} for m in sorted(table.average)]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rank.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        (out / "rank.csv").write_text(harness.to_csv(rows, ["model", "average_rank", *sorted(table.ranks)]))
        if args.figures:
            from .plotting import plot_average_rank
            plot_average_rank(table, out / "average_rank.png")
    for m in sorted(table.average, key=lambda m: (table.average[m], m)):
        print(f"{m:<24} {table.average[m]:.3f}")
    return EXIT_OK


def cmd_resize(args) -> int:
    from .scaling import plan_resize

    try:
        plan = plan_resize(args.h, args.w, args.max_tokens, args.patch)
    except ValueError as e:
        raise UsageError(str(e)) from None
    print(json.dumps(plan.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_train_toy(args) -> int:
    from dataclasses import replace

    from . import harness, training

    cfg = training.load_config(args.config)
    if args.seed is not None:
        cfg.grpo = replace(cfg.grpo, seed=args.seed)
    if args.iterations is not None:
        cfg.grpo = replace(cfg.grpo, iterations=args.iterations)
    rows = training.run(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fields = ["phase", "step", "loss", "mean_reward", "expected_reward", "mean_kl", "clip_fraction", "objective"]
    (out / "trajectory.csv").write_text(harness.to_csv([{f: r.get(f) for f in fields} for r in rows], fields))
    sft = [r for r in rows if r["phase"] == "sft"]
    rl = [r for r in rows if r["phase"] == "grpo"]
    summary = {
        "seed": cfg.grpo.seed,
        "sft_initial_loss": sft[0]["loss"] if sft else None,
        "sft_final_loss": sft[-1]["loss"] if sft else None,
        "grpo_steps": len(rl),
        "final_expected_reward": rl[-1]["expected_reward"] if rl else None,
        "final_mean_reward": rl[-1]["mean_reward"] if rl else None,
        "max_reward": float(cfg.task.reward_table.max(axis=1).mean()),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    if args.figures:
        from .plotting import plot_training
        plot_training(rows, out / "training.png")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import serve

    serve(args.host, args.port, args.lam)
    return EXIT_OK


def build_parser() -> Parser:
    p = Parser(prog="pathrl", description=__doc__.splitlines()[0],
               epilog="Exit codes: 0 success, 1 validation error, 2 I/O error.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("score", help="score one response and print the reward breakdown")
    s.add_argument("--task", required=True, choices=["cls", "det", "seg", "vqa_closed", "vqa_open"])
    s.add_argument("--response", help="response text")
    s.add_argument("--response-file", help="file holding the response text")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--gt", help='ground truth JSON, e.g. \'{"label": "B"}\'')
    g.add_argument("--gt-file", help="file holding the ground truth JSON")
    s.add_argument("--image", help='image dims JSON {"h": int, "w": int} (needed for seg)')
    s.add_argument("--prompt", help="prompt text; its (A) ... (B) ... options enable full-text matching")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0, help="format reward weight (default 1)")
    s.set_defaults(func=cmd_score)

    e = sub.add_parser("eval", help="per-task metrics with bootstrap CIs from a JSONL record file")
    e.add_argument("--input", required=True, help="line-delimited JSON records")
    e.add_argument("--out", default="report", help="output directory (default ./report)")
    e.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"bootstrap seed (default {DEFAULT_SEED})")
    e.add_argument("--bootstrap", type=int, default=1000, help="bootstrap resamples (default 1000)")
    e.add_argument("--lambda", dest="lam", type=float, default=1.0, help="format reward weight (default 1)")
    e.add_argument("--wilcoxon", action="store_true", help="also write pairwise two-sided signed-rank tests")
    e.add_argument("--figures", action="store_true", help="render CI bar charts into OUT/figures")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rank", help="tied average ranking over report.json files")
    r.add_argument("inputs", nargs="+", help="report.json files or directories searched recursively")
    r.add_argument("--method", choices=["competition", "dense"], default="competition",
                   help="tie handling (default competition: 1, 2, 2, 4)")
    r.add_argument("--out", help="directory for rank.json / rank.csv")
    r.add_argument("--figures", action="store_true", help="render average_rank.png into --out")
    r.set_defaults(func=cmd_rank)

    z = sub.add_parser("resize", help="plan a patch-aligned resize under a token budget")
    z.add_argument("--h", type=int, required=True, help="input height in pixels")
    z.add_argument("--w", type=int, required=True, help="input width in pixels")
    z.add_argument("--max-tokens", type=int, default=256, help="token budget M (256 ROI, 1024 WSI)")
    z.add_argument("--patch", type=int, default=28, help="patch size P (default 28)")
    z.set_defaults(func=cmd_resize)

    t = sub.add_parser("train-toy", help="SFT then GRPO on the toy softmax policy")
    t.add_argument("--config", default=None, help="JSON training config (default: shipped MCQ task)")
    t.add_argument("--out", default="train_toy", help="output directory (default ./train_toy)")
    t.add_argument("--seed", type=int, default=None, help="override the config seed (config default 42)")
    t.add_argument("--iterations", type=int, default=None, help="override GRPO iterations")
    t.add_argument("--figures", action="store_true", help="render training.png into --out")
    t.set_defaults(func=cmd_train_toy)

    v = sub.add_parser("serve", help="run the HTTP scoring service",
                       epilog="Environment: PATHRL_HOST, PATHRL_PORT, PATHRL_BUILD.")
    v.add_argument("--host", default=None, help="listen address (env PATHRL_HOST, default 127.0.0.1)")
    v.add_argument("--port", type=int, default=None, help="listen port (env PATHRL_PORT, default 8000)")
    v.add_argument("--lambda", dest="lam", type=float, default=1.0, help="default format reward weight")
    v.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "config", "unset") is None:
        from .training import DEFAULT_CONFIG
        args.config = DEFAULT_CONFIG
    try:
        return args.func(args)
    except UsageError as e:
        print(f"pathrl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as e:
        print(f"pathrl {args.command}: I/O error: {e}", file=sys.stderr)
        return EXIT_IO
    except ValueError as e:
        print(f"pathrl {args.command}: error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
