"""Command-line entry point: ``granalign <subcommand> [options]``.

Subcommands: precaption, rewrite, score, retrieve, eval, run, sweep, synth.
Exit codes: 0 success, 1 config/dataset error, 2 every query failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

from .caption import build_agnostic_captions
from .core import PipelineConfig, load_config
from .data import (LOADERS, DatasetRecord, read_predictions, read_score_series, write_predictions,
                   write_score_series)
from .errors import GranAlignError
from .metrics import evaluate
from .pipeline import SWEEPABLE, format_table, process_query, run_pipeline, sweep
from .propose import propose
from .providers import ProviderKind, ProviderSet, ProviderSpec, build_provider
from .rewrite import classify_query, extract_guidance, generate_rewrites

log = logging.getLogger("granalign")

EXIT_OK, EXIT_CONFIG, EXIT_ALL_FAILED = 0, 1, 2

# CLI flag -> PipelineConfig field
CONFIG_FLAGS = {
    "fps": "fps",
    "top_k": "top_k_percent",
    "m": "num_rewrites",
    "tau": "merge_gap",
    "bottom_n": "bottom_percent",
    "lambda_": "length_weight",
    "nms_iou": "nms_iou",
    "bins": "histogram_bins",
    "top_bins": "histogram_top_bins",
    "instruction_pair": "instruction_pair",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline configuration")
    g.add_argument("--config", help="flat JSON/YAML file with PipelineConfig fields")
    g.add_argument("--fps", type=float)
    g.add_argument("--top-k", type=float, help="percent of frames given query-aware captions")
    g.add_argument("--m", type=int, help="number of rewritten query pairs")
    g.add_argument("--tau", type=int, help="max gap (frames) bridged when merging")
    g.add_argument("--bottom-n", type=float, help="percentile below which spans are dropped")
    g.add_argument("--lambda", dest="lambda_", type=float, help="span length weight")
    g.add_argument("--nms-iou", type=float)
    g.add_argument("--bins", type=int)
    g.add_argument("--top-bins", type=int)
    g.add_argument("--instruction-pair", type=int)


def _add_dataset_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", choices=[*LOADERS, "synthetic"], default="qvhighlights")
    g.add_argument("--annotations", help="annotation file for the chosen dataset")
    g.add_argument("--durations", help="Charades-STA duration index (JSON or 'vid duration' lines)")
    g.add_argument("--split", choices=["train", "val", "test"], default="val")
    g.add_argument("--limit", type=int, help="only use the first N queries")


def _add_provider_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model providers")
    g.add_argument("--provider", choices=[k.value for k in ProviderKind], default="mock")
    g.add_argument("--endpoint", help="base URL of an OpenAI-compatible server")
    g.add_argument("--model", help="model name for every capability")
    g.add_argument("--rewrite-model")
    g.add_argument("--caption-model")
    g.add_argument("--embed-model")
    g.add_argument("--clip-model", help="model used for frame/query similarity")
    g.add_argument("--auth-env", help="env var holding the bearer token")
    g.add_argument("--frame-url-template", help="e.g. 'file:///frames/{video_id}/{frame_index:05d}.jpg'")
    g.add_argument("--seed", type=int, default=0, help="mock provider seed")
    g.add_argument("--mock-fixture", help="JSON {video_id: [frame caption tokens]} for the mock provider")
    g.add_argument("--cache-dir", help="JSON-lines cache directory (read-through)")
    g.add_argument("--jobs", type=int, default=1, help="queries processed concurrently")
    g.add_argument("--grammar-check", action="store_true", help="flag Error queries via the rewriter")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="granalign", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def cmd(name, help_, *, dataset=True, providers=True, config=True):
        p = sub.add_parser(name, help=help_)
        if config:
            _add_config_flags(p)
        if dataset:
            _add_dataset_flags(p)
        if providers:
            _add_provider_flags(p)
        return p

    p = cmd("precaption", "caption every frame without the query and store it in --cache-dir")
    p = cmd("rewrite", "write rewritten query pairs, guidance and query types")
    p.add_argument("--out", required=True)
    p = cmd("score", "write per-frame moment scores")
    p.add_argument("--out", required=True)
    p = cmd("retrieve", "turn a score file into predictions", dataset=False, providers=False)
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p = cmd("eval", "evaluate a prediction file", providers=False)
    p.add_argument("--predictions", required=True)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--strict-iou", action="store_true", help="count IoU > t instead of >= t")
    p = cmd("run", "full pipeline: predictions, report and manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict-iou", action="store_true")
    p = cmd("sweep", "one run per value of a single hyperparameter")
    p.add_argument("--param", required=True, choices=SWEEPABLE)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out", required=True, help="output directory")
    p = sub.add_parser("synth", help="write the bundled synthetic fixture")
    p.add_argument("--out", required=True)
    return parser


def resolve_config(args) -> PipelineConfig:
    overrides = {CONFIG_FLAGS[k]: getattr(args, k) for k in CONFIG_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    return PipelineConfig.from_mapping(overrides)


def load_records(args, cfg: PipelineConfig) -> list[DatasetRecord]:
    if args.dataset == "synthetic":
        from .synthetic import synthetic_records

        records = synthetic_records(tempfile.mkdtemp(prefix="granalign-synth-"), fps=cfg.fps)
    else:
        if not args.annotations:
            raise GranAlignError(f"--annotations is required for --dataset {args.dataset}")
        if args.dataset == "charades":
            if not args.durations:
                raise GranAlignError("--durations is required for charades")
            records = LOADERS["charades"](args.annotations, args.durations, split=args.split, fps=cfg.fps)
        else:
            records = LOADERS[args.dataset](args.annotations, split=args.split, fps=cfg.fps)
    if args.limit is not None:
        records = records[: args.limit]
    return records


def build_providers(args) -> tuple[ProviderSet, dict]:
    kind = ProviderKind(args.provider)
    fixture = args.mock_fixture
    if kind is ProviderKind.MOCK and fixture is None and getattr(args, "dataset", None) == "synthetic":
        from .synthetic import write_synthetic

        _, fixture = write_synthetic(tempfile.mkdtemp(prefix="granalign-synth-"))
        fixture = str(fixture)

    def spec(model: Optional[str]) -> ProviderSpec:
        return ProviderSpec(kind=kind, endpoint=args.endpoint, model_name=model or args.model,
                            auth_token_env=args.auth_env,
                            cache_dir=args.cache_dir if kind is ProviderKind.FILE else None,
                            seed=args.seed if kind is ProviderKind.MOCK else None,
                            frame_url_template=args.frame_url_template,
                            mock_fixture=fixture if kind is ProviderKind.MOCK else None)

    specs = {
        "rewriter": spec(args.rewrite_model),
        "captioner": spec(args.caption_model),
        "embedder": spec(args.embed_model),
        "frame_scorer": spec(args.clip_model),
    }
    cache = args.cache_dir if kind is not ProviderKind.FILE else None
    if kind is ProviderKind.HTTP or cache:
        built = {name: build_provider(s, cache_dir=cache) for name, s in specs.items()}
    else:
        # mock / file backends are stateless enough to share one instance
        shared = build_provider(specs["rewriter"])
        built = {name: shared for name in specs}
    record = {name: s.to_dict() for name, s in specs.items()}
    if cache:
        record["cache_dir"] = cache
    return ProviderSet(**built), record


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_precaption(args) -> int:
    if not args.cache_dir:
        raise GranAlignError("precaption needs --cache-dir")
    cfg = resolve_config(args)
    records = load_records(args, cfg)
    providers, _ = build_providers(args)
    seen = set()
    for rec in records:
        if rec.video.video_id in seen:
            continue
        seen.add(rec.video.video_id)
        build_agnostic_captions(rec.video, providers.captioner, max_workers=args.jobs)
    providers.close()
    print(f"captioned {len(seen)} videos into {args.cache_dir}")
    return EXIT_OK


def cmd_rewrite(args) -> int:
    cfg = resolve_config(args)
    records = load_records(args, cfg)
    providers, _ = build_providers(args)
    checker = providers.rewriter.has_grammar_error if args.grammar_check else None
    failed = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for rec in records:
            row = {"qid": rec.query.id, "query": rec.query.text,
                   "query_type": classify_query(rec.query, checker).to_dict()}
            try:
                rs = generate_rewrites(rec.query, cfg, providers.rewriter)
                g = extract_guidance(rec.query, providers.rewriter)
                row["pairs"] = rs.to_dict()["pairs"]
                row["guidance"] = {"entities": list(g.entities), "actions": list(g.actions)}
            except GranAlignError as exc:
                failed += 1
                row["error"] = f"{type(exc).__name__}: {exc}"
            fh.write(json.dumps(row) + "\n")
    providers.close()
    return EXIT_ALL_FAILED if records and failed == len(records) else EXIT_OK


def cmd_score(args) -> int:
    cfg = resolve_config(args)
    records = load_records(args, cfg)
    providers, _ = build_providers(args)
    series = []
    for rec in records:
        res = process_query(rec, cfg, providers)
        if res.ok:
            series.append(res.prediction.saliency)
        else:
            log.error("query %s failed: %s", rec.query.id, res.error)
    providers.close()
    write_score_series(series, args.out)
    return EXIT_ALL_FAILED if records and not series else EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = resolve_config(args)
    preds = [propose(s, cfg) for s in read_score_series(args.scores)]
    write_predictions(preds, args.out)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    records = load_records(args, cfg)
    preds = {p.query_id: p for p in read_predictions(args.predictions)}
    gts = {r.query.id: r.ground_truth for r in records if r.ground_truth.windows}
    saliency = {q: p.saliency.scores.tolist() for q, p in preds.items() if p.saliency is not None}
    types = {r.query.id: classify_query(r.query) for r in records}
    report = evaluate(preds, gts, saliency=saliency or None, types=types, strict=args.strict_iou)
    print(_report_table(report))
    if args.out:
        _write_json(Path(args.out), report.to_dict())
    return EXIT_OK


def _report_table(report) -> str:
    rows = [("all", report.table_row())]
    rows += [(cat, sub.table_row()) for cat, sub in report.by_query_type.items()]
    return format_table(rows, key_header="queries")


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    records = load_records(args, cfg)
    providers, specs = build_providers(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        result = run_pipeline(cfg, records, providers, dataset_name=args.dataset, split=args.split,
                              provider_specs=specs, jobs=args.jobs, grammar_check=args.grammar_check,
                              strict_iou=args.strict_iou)
    finally:
        providers.close()
    write_predictions(result.predictions, out / "predictions.jsonl")
    _write_json(out / "manifest.json", result.manifest.to_dict())
    if result.report is not None:
        _write_json(out / "report.json", result.report.to_dict())
        print(_report_table(result.report))
    print(f"{len(result.predictions)}/{len(records)} queries ok; outputs in {out}")
    return EXIT_ALL_FAILED if result.all_failed else EXIT_OK


def _parse_values(raw: str, parameter: str) -> list:
    cast = int if parameter in ("num_rewrites", "merge_gap") else float
    values = [v.strip() for v in raw.split(",") if v.strip()]
    try:
        return [cast(v) for v in values]
    except ValueError as exc:
        raise GranAlignError(f"bad --values for {parameter}: {raw!r}") from exc


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    values = _parse_values(args.values, args.param)
    records = load_records(args, cfg)
    providers, specs = build_providers(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        runs = sweep(cfg, args.param, values, records, providers, dataset_name=args.dataset,
                     split=args.split, provider_specs=specs, jobs=args.jobs)
    finally:
        providers.close()
    rows, dump = [], []
    for value, res in runs:
        write_predictions(res.predictions, out / f"predictions_{args.param}={value:g}.jsonl")
        if res.report is not None:
            rows.append((f"{value:g}", res.report.table_row()))
        dump.append({"value": value, "report": res.report.to_dict() if res.report else None,
                     "num_failed": res.manifest.num_failed})
    _write_json(out / "sweep.json", {"parameter": args.param, "runs": dump})
    print(format_table(rows, key_header=args.param))
    return EXIT_ALL_FAILED if all(res.all_failed for _, res in runs) else EXIT_OK


def cmd_synth(args) -> int:
    from .synthetic import write_synthetic

    ann, frames = write_synthetic(args.out)
    print(f"wrote {ann} and {frames}")
    return EXIT_OK


COMMANDS = {
    "precaption": cmd_precaption,
    "rewrite": cmd_rewrite,
    "score": cmd_score,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (GranAlignError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
