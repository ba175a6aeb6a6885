"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 integrity or parse error, 3 transport error.
Settings resolve as flags > environment > config file > defaults.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import yaml

from . import __version__
from .corpus import (
    FEATURE_LABELS,
    AnnotatedCorpus,
    corpus_stats,
    dump_corpus,
    fetch_feature_requests,
    load_corpus,
    parse_key,
    save_corpus,
)
from .exceptions import ParseError, ReqClarifyError, UsageError
from .metrics import SEGMENT_METRICS, binary_prf, segment_f1
from .parsing import DetectionVerdict
from .runner import (
    ExperimentConfig,
    analyze_issue,
    build_gateway,
    emit_report,
    load_report,
    report_markdown,
    run_detection,
    run_refinement,
)
from .sampling import TRAIN_FRACTION, make_instance_split, make_split
from .taxonomy import DefectKind

log = logging.getLogger("reqclarify")

GH_TOKEN_ENV = "REQCLARIFY_GH_TOKEN"
ENV_SETTINGS = {
    "REQCLARIFY_MODE": "mode",
    "REQCLARIFY_STORE": "store",
    "REQCLARIFY_CORPUS": "corpus",
    "REQCLARIFY_MODEL": "model",
    "REQCLARIFY_BASE_URL": "base_url",
    "REQCLARIFY_EMBEDDER": "embedder",
    "REQCLARIFY_CONCURRENCY": "concurrency",
}
CONFIG_FIELDS = {f.name for f in fields(ExperimentConfig)}


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so usage errors map to status 1."""

    def error(self, message):
        raise UsageError(f"{message} (see '{self.prog} --help')")


def _load_config_file(path):
    if not path:
        return {}
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise UsageError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must be a mapping")
    unknown = set(data) - CONFIG_FIELDS
    if unknown:
        raise UsageError(f"unknown config key(s) in {path}: {sorted(unknown)}")
    return data


def _env_settings():
    out = {}
    for var, key in ENV_SETTINGS.items():
        if os.environ.get(var):
            out[key] = os.environ[var]
    if "concurrency" in out:
        try:
            out["concurrency"] = int(out["concurrency"])
        except ValueError:
            raise UsageError("REQCLARIFY_CONCURRENCY must be an integer") from None
    return out


def resolve_config(args, task) -> ExperimentConfig:
    settings = {}
    settings.update(_load_config_file(getattr(args, "config", None)))
    settings.update(_env_settings())
    flags = {
        "corpus": args.corpus, "store": args.store, "mode": args.mode, "output_dir": args.out,
        "defects": args.defect, "seeds": args.seed, "shot_counts": args.shots,
        "repetitions": args.repetitions, "orderings_per_repetition": args.orderings,
        "concurrency": args.concurrency, "embedder": args.embedder, "model": args.model,
        "base_url": args.base_url, "temperature": args.temperature,
        "max_output_tokens": args.max_tokens, "train_fraction": args.train_fraction,
        "rouge_threshold": getattr(args, "rouge_threshold", None),
    }
    settings.update({k: v for k, v in flags.items() if v is not None})
    for name in ("exhaustive", "reasoned", "persona_as_system"):
        if getattr(args, name, False):
            settings["exhaustive_orderings" if name == "exhaustive" else name] = True
    if getattr(args, "no_reask", False):
        settings["reask"] = False
    settings["task"] = task
    try:
        return ExperimentConfig(**settings)
    except TypeError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# --- commands -------------------------------------------------------------------

def cmd_fetch(args):
    token = args.token or os.environ.get(GH_TOKEN_ENV)
    requests = []
    for repo in args.repo:
        requests += fetch_feature_requests(repo, args.label or list(FEATURE_LABELS), token)
    corpus = AnnotatedCorpus(requests)
    if args.out:
        save_corpus(corpus, args.out)
        log.info("wrote %d requests to %s", len(requests), args.out)
    else:
        sys.stdout.write(dump_corpus(corpus))
    return 0


def cmd_stats(args):
    stats = corpus_stats(load_corpus(args.corpus))
    if args.json:
        print(json.dumps(stats.to_dict(), sort_keys=True, indent=1))
    else:
        print(stats.as_table())
    return 0


def cmd_split(args):
    corpus = load_corpus(args.corpus)
    if args.instances:
        split = make_instance_split(corpus, args.defect, args.seed, args.train_fraction)
        sizes = {"positive_train": len(split.positive_train),
                 "positive_test": len(split.positive_test)}
    else:
        split = make_split(corpus, args.defect, args.seed, args.train_fraction)
        sizes = split.sizes()
    print(" ".join(f"{k}={v}" for k, v in sizes.items()))
    if args.out:
        Path(args.out).write_text(json.dumps(split.to_record(), sort_keys=True, indent=1) + "\n",
                                  encoding="utf-8")
    return 0


def _run(args, task):
    config = resolve_config(args, task)
    report = run_detection(config) if task == "detect" else run_refinement(config)
    if config.output_dir:
        print(Path(config.output_dir) / "report.json")
    else:
        sys.stdout.write(report_markdown(report))
    return 0


def _read_predictions(path):
    out = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read predictions {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            out[parse_key(rec["key"])] = list(rec.get("items", []))
        except (ValueError, KeyError, TypeError, UsageError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}", raw=line, line=lineno) from None
    return out


def cmd_eval(args):
    """Score a predictions file (``{"key": "owner/repo#n", "items": [...]}`` per line)."""
    corpus = load_corpus(args.corpus)
    defect = DefectKind.parse(args.defect)
    preds = _read_predictions(args.predictions)
    gt_all = corpus.gt_items(defect)
    keys = sorted(preds)
    unknown = [k for k in keys if k not in gt_all]
    if unknown:
        raise UsageError(f"{len(unknown)} prediction key(s) are not in the corpus")
    gt = {k: gt_all[k] for k in keys}
    result = {}
    if defect is DefectKind.INCOMPLETENESS:
        prf = binary_prf({k for k in keys if preds[k]}, {k for k in keys if gt[k]}, keys)
        result["binary"] = {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1}
    else:
        verdicts = {k: DetectionVerdict("segments" if v else "no_defect", tuple(v))
                    for k, v in preds.items()}
        for metric in args.metric or SEGMENT_METRICS:
            prf = segment_f1(verdicts, gt, metric)
            result[metric] = {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1}
    print(json.dumps(result, sort_keys=True, indent=1))
    return 0


def cmd_report(args):
    report = load_report(args.source)
    formats = tuple(args.format or ("json", "csv", "md"))
    if args.out:
        for path in emit_report(report, args.out, formats):
            print(path)
    else:
        sys.stdout.write(report_markdown(report))
    return 0


def cmd_analyze(args):
    config = resolve_config(args, "detect")
    if args.file:
        try:
            source = Path(args.file).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read {args.file}: {exc}") from None
    elif args.source == "-":
        source = sys.stdin.read()
    elif args.source:
        source = args.source
    else:
        raise UsageError("analyze needs an issue locator, text, '-' or --file")
    gateway = build_gateway(config)
    n_shots = config.shot_counts[0] if config.shot_counts else 0
    corpus = load_corpus(config.corpus) if n_shots else None
    analysis = analyze_issue(source, gateway, corpus=corpus, n_shots=n_shots,
                             seed=config.seeds[0], decoding=config.decoding,
                             persona_as_system=config.persona_as_system,
                             token=os.environ.get(GH_TOKEN_ENV))
    if args.json:
        print(json.dumps(analysis.to_dict(), sort_keys=True, indent=1, ensure_ascii=False))
    else:
        sys.stdout.write(analysis.format())
    return 0


# --- parser ---------------------------------------------------------------------

def _experiment_flags(p, analyze=False):
    p.add_argument("--config", help="YAML file with run settings")
    p.add_argument("--corpus", help="corpus JSONL path, or @synthetic / @fixture")
    p.add_argument("--store", help="replay store directory, or @fixture")
    p.add_argument("--mode", choices=["live", "replay"])
    p.add_argument("--seed", type=int, action="append", help="repeatable")
    p.add_argument("--shots", type=int, action="append",
                   help="repeatable; total shots for detection, instances for refinement")
    p.add_argument("--concurrency", type=int)
    p.add_argument("--embedder", help="hashing[:dim], openai[:model] or sbert[:model]")
    p.add_argument("--model")
    p.add_argument("--base-url")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-tokens", type=int)
    p.add_argument("--persona-as-system", action="store_true",
                   help="send the persona sentence as a system message")
    p.add_argument("--train-fraction", type=float)
    if analyze:
        p.set_defaults(out=None, defect=None, repetitions=None, orderings=None)
        return
    p.add_argument("--out", help="output directory")
    p.add_argument("--defect", action="append", help="repeatable; default all six")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--orderings", type=int, help="orderings per repetition")
    p.add_argument("--exhaustive", action="store_true", help="every ordering (n <= 4)")
    p.add_argument("--no-reask", action="store_true", help="do not re-ask after a parse failure")


def build_parser():
    parser = ArgumentParser(
        prog="reqclarify",
        description="Detect ambiguity and incompleteness in feature requests and "
                    "generate clarifying questions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=ArgumentParser)

    p = sub.add_parser("fetch", help="mine labelled feature requests from GitHub")
    p.add_argument("--repo", action="append", required=True, help="owner/name; repeatable")
    p.add_argument("--label", action="append", help="repeatable; default \"Feature Request\" and \"Feature\"")
    p.add_argument("--token", help=f"GitHub token (default ${GH_TOKEN_ENV})")
    p.add_argument("--out", help="corpus JSONL to write (default stdout)")
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("stats", help="per-defect request and instance counts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="show the seeded train/test split sizes")
    p.add_argument("--corpus", default="@synthetic")
    p.add_argument("--defect", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--train-fraction", type=float, default=TRAIN_FRACTION)
    p.add_argument("--instances", action="store_true", help="split defect instances instead")
    p.add_argument("--out", help="write the split record as JSON")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("run-detect", help="detection experiments")
    _experiment_flags(p)
    p.add_argument("--reasoned", action="store_true", help="ask for reasons with each segment")
    p.add_argument("--rouge-threshold", type=float,
                   help="count a ROUGE pair as a whole match when its F1 reaches this value")
    p.set_defaults(func=lambda a: _run(a, "detect"))

    p = sub.add_parser("run-refine", help="clarifying-question experiments")
    _experiment_flags(p)
    p.set_defaults(func=lambda a: _run(a, "refine"))

    p = sub.add_parser("eval", help="score a predictions file against the corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--defect", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--metric", action="append", choices=list(SEGMENT_METRICS))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="re-render a stored report")
    p.add_argument("source", help="report.json or a run directory")
    p.add_argument("--out")
    p.add_argument("--format", action="append", choices=["json", "csv", "md"])
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("analyze", help="detect defects in one request and propose CQs")
    p.add_argument("source", nargs="?", help="owner/repo#n, raw text, or - for stdin")
    p.add_argument("--file", help="read the request text from a file")
    p.add_argument("--json", action="store_true")
    _experiment_flags(p, analyze=True)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, format="%(levelname)s: %(message)s",
                        level=logging.WARNING)
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.INFO if args.verbose == 1 else logging.DEBUG)
        if not getattr(args, "func", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except ReqClarifyError as exc:
        print(f"reqclarify: error: {exc}", file=sys.stderr)
        return exc.exit_status
    except SystemExit as exc:
        # --help and --version
        return exc.code if isinstance(exc.code, int) else 0
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
