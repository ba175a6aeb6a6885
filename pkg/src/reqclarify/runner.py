"""Experiment orchestration, reports, and single-issue analysis.

A detection run walks (defect, seed, shot count, repetition, ordering) cells;
a refinement run walks (defect, seed, shot count, repetition, ordering) over
defect instances instead of requests. Every cell's scores, verdicts and the
prompts/responses behind them are written to the output directory so the
aggregate numbers can be recomputed from the raw records.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .corpus import load_corpus
from .corpus.models import DefectInstance, FeatureRequest, format_key
from .estimators import ClarifyingQuestionGenerator, DefectDetector
from .exceptions import IntegrityError, ReqClarifyError, UsageError
from .gateway import (
    LLM_KEY_ENV,
    DEFAULT_BASE_URL,
    DEFAULT_MODEL,
    Gateway,
    HashingEmbedder,
    OpenAIChatBackend,
    OpenAIEmbeddingBackend,
    ReplayStore,
    SentenceTransformerEmbedder,
)
from .metrics import MATCH_MODES, ROUGE_MODES, binary_prf, cosine_scores, segment_counts
from .prompting import DecodingParams, PromptKind
from .sampling import (
    DEFAULT_SEEDS,
    TRAIN_FRACTION,
    dump_records,
    make_instance_split,
    make_shot_set,
    make_split,
    sample_permutations,
)
from .taxonomy import ALL_KINDS, DefectKind

log = logging.getLogger(__name__)

DETECTION_SHOTS = (0, 2, 4, 6)
REFINEMENT_SHOTS = (0, 1, 2, 3, 4)
SEGMENT_METRICS = tuple(MATCH_MODES) + tuple(ROUGE_MODES)
BINARY_METRICS = ("precision", "recall", "f1")
COSINE_METRICS = ("complete_list", "individual_elements")
HEADLINE_METRIC = {"segments": "rougeL", "binary": "f1", "cosine": "individual_elements"}
UNDETERMINED = "undetermined"
RUNTIME_FIELDS = ("concurrency", "output_dir")


@dataclass
class ExperimentConfig:
    """Everything that defines a run.

    ``task`` is ``"detect"`` or ``"refine"``; the prompt kind of each cell
    follows from the defect and ``reasoned``. ``shot_counts=None`` means the
    defaults, trimmed to what each split can supply. Detection shot counts are
    totals (positive/negative pairs), refinement shot counts are instances.
    """

    task: str = "detect"
    defects: tuple = ()
    reasoned: bool = False
    seeds: tuple = DEFAULT_SEEDS
    shot_counts: tuple | None = None
    repetitions: int = 10
    orderings_per_repetition: int = 1
    exhaustive_orderings: bool = False
    train_fraction: float = TRAIN_FRACTION
    mode: str = "replay"
    corpus: str = "@synthetic"
    store: str | None = None
    output_dir: str | None = None
    model: str = DEFAULT_MODEL
    base_url: str = DEFAULT_BASE_URL
    embedder: str = "hashing"
    concurrency: int = 4
    temperature: float = 0.0
    max_output_tokens: int = 1024
    persona_as_system: bool = False
    reask: bool = True
    rouge_threshold: float | None = None

    def __post_init__(self):
        if self.task not in ("detect", "refine"):
            raise UsageError(f"task must be detect or refine, got {self.task!r}")
        self.defects = tuple(DefectKind.parse(d) for d in (self.defects or ALL_KINDS))
        if len(set(self.defects)) != len(self.defects):
            raise UsageError("defects listed twice")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise UsageError("at least one seed is required")
        if self.shot_counts is not None:
            self.shot_counts = tuple(sorted({int(s) for s in self.shot_counts}))
            if any(s < 0 for s in self.shot_counts):
                raise UsageError("shot counts must be non-negative")
        if self.repetitions < 1 or self.orderings_per_repetition < 1:
            raise UsageError("repetitions and orderings_per_repetition must be >= 1")
        if self.mode not in ("live", "replay"):
            raise UsageError(f"mode must be live or replay, got {self.mode!r}")

    @property
    def decoding(self) -> DecodingParams:
        return DecodingParams(self.temperature, self.max_output_tokens)

    def experiment(self, defect) -> PromptKind:
        if self.task == "detect":
            return PromptKind.for_detection(defect, self.reasoned)
        return PromptKind.for_refinement(defect)

    def to_dict(self, runtime=True) -> dict:
        """All fields; ``runtime=False`` drops the ones that cannot change results."""
        d = asdict(self)
        if not runtime:
            for name in RUNTIME_FIELDS:
                d.pop(name)
        d["defects"] = [k.value for k in self.defects]
        d["seeds"] = list(self.seeds)
        d["shot_counts"] = None if self.shot_counts is None else list(self.shot_counts)
        return d


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    defect: str
    seed: int
    shot_count: int
    metric: str
    scores: tuple  # one per repetition

    @property
    def mean(self) -> float:
        return math.fsum(self.scores) / len(self.scores) if self.scores else 0.0

    @property
    def cell(self) -> tuple:
        return (self.experiment, self.defect, self.seed, self.shot_count, self.metric)


@dataclass
class MetricReport:
    """Mean score per (experiment, defect, seed, shot_count, metric) cell.

    ``rows`` keep the per-repetition scores the means come from; ``verdicts``
    hold one record per scored prediction.
    """

    config: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)

    def sorted_rows(self) -> list:
        return sorted(self.rows, key=lambda r: r.cell)

    def get(self, experiment, defect, seed, shot_count, metric) -> ReportRow:
        cell = (str(experiment), DefectKind.parse(defect).value, seed, shot_count, metric)
        for row in self.rows:
            if row.cell == cell:
                return row
        raise KeyError(cell)

    @property
    def errors(self) -> list:
        return [v for v in self.verdicts if v.get("error")]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "rows": [{"experiment": r.experiment, "defect": r.defect, "seed": r.seed,
                      "shot_count": r.shot_count, "metric": r.metric, "mean": r.mean,
                      "scores": list(r.scores)} for r in self.sorted_rows()],
            "verdicts": self.verdicts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        try:
            rows = [ReportRow(r["experiment"], r["defect"], int(r["seed"]), int(r["shot_count"]),
                              r["metric"], tuple(float(s) for s in r["scores"]))
                    for r in data.get("rows", [])]
        except (KeyError, TypeError, ValueError) as exc:
            raise IntegrityError(f"malformed report row: {exc}") from None
        for row, raw in zip(rows, data.get("rows", [])):
            if "mean" in raw and not math.isclose(row.mean, raw["mean"], rel_tol=0, abs_tol=1e-12):
                raise IntegrityError(f"stored mean of {row.cell} disagrees with its scores")
        return cls(dict(data.get("config", {})), rows, list(data.get("verdicts", [])))

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise IntegrityError(f"report is not valid JSON: {exc}") from None
        return cls.from_dict(data)


# --- backends ------------------------------------------------------------------

def make_embedder(spec: str):
    """``hashing[:dim]``, ``openai[:model]`` or ``sbert[:model]``."""
    name, _, arg = (spec or "hashing").partition(":")
    if name == "hashing":
        return HashingEmbedder(int(arg) if arg else 256)
    if name == "openai":
        return OpenAIEmbeddingBackend(arg or "text-embedding-3-small")
    if name == "sbert":
        try:
            return SentenceTransformerEmbedder(arg or "all-MiniLM-L6-v2")
        except ImportError:
            raise UsageError("the sbert embedder needs the optional sentence-transformers "
                             "package (pip install reqclarify[sbert])") from None
    raise UsageError(f"unknown embedder {spec!r}")


def build_gateway(config: ExperimentConfig) -> Gateway:
    store_path = config.store
    if config.mode == "replay" and not store_path:
        raise UsageError("replay mode needs --store")
    store = ReplayStore(store_path, read_only=config.mode == "replay") if store_path else None
    chat = None
    if config.mode == "live":
        if not os.environ.get(LLM_KEY_ENV):
            raise UsageError(f"live mode needs {LLM_KEY_ENV}")
        chat = OpenAIChatBackend(config.model, config.base_url)
    return Gateway(config.mode, store, chat, make_embedder(config.embedder),
                   repetitions=config.repetitions, concurrency=config.concurrency)


# --- preflight ----------------------------------------------------------------

def _ordering_seed(seed, shots, repetition):
    return seed * 1_000_003 + shots * 1_009 + repetition


def _orderings(config, n, seed, shots, repetition):
    if config.exhaustive_orderings:
        return sample_permutations(n, math.factorial(n), 0)
    return sample_permutations(n, config.orderings_per_repetition,
                               _ordering_seed(seed, shots, repetition))


def _plan_shots(config, defect, limit, paired):
    """Shot counts to run for one (defect, seed); ``limit`` is the largest feasible n."""
    unit = 2 if paired else 1
    if config.shot_counts is None:
        defaults = DETECTION_SHOTS if paired else REFINEMENT_SHOTS
        return tuple(s for s in defaults if s // unit <= limit)
    for s in config.shot_counts:
        if paired and s % 2:
            raise UsageError(f"{defect.value}: detection shots come in pairs; {s} is odd")
        if s // unit > limit:
            raise UsageError(f"{defect.value}: {s} shots need {s // unit} training "
                             f"{'pairs' if paired else 'instances'}, the split offers {limit}")
    return config.shot_counts


def _check_exhaustive(config, shot_plan, paired):
    if not config.exhaustive_orderings:
        return
    unit = 2 if paired else 1
    for shots in shot_plan.values():
        for s in shots:
            if s // unit > 4:
                raise UsageError("exhaustive ordering is limited to n <= 4")


def plan_detection(config: ExperimentConfig, corpus) -> dict:
    """Splits and shot counts for every (defect, seed); raises before any model call."""
    plan = {}
    for defect in config.defects:
        for seed in config.seeds:
            split = make_split(corpus, defect, seed, config.train_fraction)
            limit = min(len(split.positive_train), len(split.negative_train))
            plan[defect, seed] = (split, _plan_shots(config, defect, limit, paired=True))
    _check_exhaustive(config, {k: v[1] for k, v in plan.items()}, True)
    return plan


def plan_refinement(config: ExperimentConfig, corpus) -> dict:
    plan = {}
    for defect in config.defects:
        for seed in config.seeds:
            split = make_instance_split(corpus, defect, seed, config.train_fraction)
            plan[defect, seed] = (split, _plan_shots(config, defect, len(split.positive_train),
                                                     paired=False))
    _check_exhaustive(config, {k: v[1] for k, v in plan.items()}, False)
    return plan


# --- run bookkeeping ------------------------------------------------------------

class _Audit:
    """Collects split, prompt, response and score records in deterministic order."""

    def __init__(self):
        self.splits = []
        self.prompts = {}
        self.responses = []
        self.scores = {}

    def log_prediction(self, cell, pred):
        for bundle, text in pred.calls:
            self.prompts.setdefault(bundle.fingerprint, bundle)
            self.responses.append({**cell, "key": _key_text(pred.key),
                                   "fingerprint": bundle.fingerprint, "response": text})

    def write(self, out: Path, report: MetricReport):
        for sub in ("splits", "prompts", "responses", "scores"):
            (out / sub).mkdir(parents=True, exist_ok=True)
        _write(out / "splits" / "splits.jsonl", dump_records(self.splits))
        index = []
        for fp in sorted(self.prompts):
            b = self.prompts[fp]
            _write(out / "prompts" / f"{fp}.txt", b.text)
            index.append({"fingerprint": fp, "kind": b.kind.value, "defect": b.defect.value,
                          "shot_count": b.shot_count, "ordering_id": b.ordering_id,
                          "system": b.system, "temperature": b.decoding.temperature,
                          "max_output_tokens": b.decoding.max_output_tokens})
        _write(out / "prompts" / "index.jsonl", dump_records(index))
        _write(out / "responses" / "responses.jsonl", dump_records(self.responses))
        for name in sorted(self.scores):
            _write(out / "scores" / f"{name}.jsonl", dump_records(self.scores[name]))
        emit_report(report, out)


def _key_text(key):
    """``repo#n`` for a request key, ``repo#n:i`` for an instance ref."""
    if isinstance(key[1], int) and isinstance(key[0], tuple):
        return f"{format_key(key[0])}:{key[1]}"
    return format_key(key)


def _write(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _prepare_output(path):
    if path is None:
        return None
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _resolve_corpus(config, corpus):
    return corpus if corpus is not None else load_corpus(config.corpus)


def _add_rows(rows, experiment, defect, seed, shots, per_rep):
    """``per_rep`` maps metric -> list (over repetitions) of lists (over orderings)."""
    for metric, reps in per_rep.items():
        scores = tuple(math.fsum(o) / len(o) for o in reps)
        rows.append(ReportRow(experiment, defect.value, seed, shots, metric, scores))


# --- detection -----------------------------------------------------------------

def _detection_metrics(defect, verdicts, corpus, test_keys, rouge_threshold, gateway):
    gt_all = corpus.gt_items(defect)
    gt = {k: gt_all[k] for k in test_keys}
    preds = dict(zip(test_keys, verdicts))
    per_request = {}
    if defect is DefectKind.INCOMPLETENESS:
        pred_pos = {k for k, v in preds.items() if v.items}
        gt_pos = {k for k, items in gt.items() if items}
        prf = binary_prf(pred_pos, gt_pos, test_keys)
        scores = {"precision": prf.precision, "recall": prf.recall, "f1": prf.f1}
        sims = []
        for k in sorted(pred_pos & gt_pos):
            try:
                s = cosine_scores(preds[k].items, gt[k], gateway)
            except ReqClarifyError as exc:
                per_request.setdefault(k, {})["cosine_error"] = str(exc)
                continue
            sims.append(s)
            per_request.setdefault(k, {}).update(complete_list=s.complete_list,
                                                 individual_elements=s.individual_elements)
        for name in COSINE_METRICS:
            vals = [getattr(s, name) for s in sims]
            scores[name] = math.fsum(vals) / len(vals) if vals else 0.0
        return scores, per_request
    scores = {}
    for metric in SEGMENT_METRICS:
        total = segment_counts(preds, gt, metric, rouge_threshold=rouge_threshold)
        scores[metric] = total.prf().f1
        for k in test_keys:
            c = segment_counts({k: preds[k]}, {k: gt[k]}, metric, rouge_threshold=rouge_threshold)
            per_request.setdefault(k, {})[metric] = [c.tp, c.fp, c.fn]
    return scores, per_request


def _detector_training(corpus, split, defect, reasoned):
    keys = list(split.positive_train) + list(split.negative_train)
    X = [corpus.request(k) for k in keys]
    gt = corpus.gt_items(defect)
    y = [gt[k] for k in keys]
    reasons = None
    if reasoned and defect.is_ambiguity:
        pairs = corpus.gt_reasoned(defect)
        reasons = [[r for r, _ in pairs[k]] for k in keys]
    return X, y, reasons


def run_detection(config: ExperimentConfig, corpus=None, gateway=None) -> MetricReport:
    """Run detection for every configured defect, seed, shot count and repetition."""
    if config.task != "detect":
        raise UsageError("run_detection needs a detect config")
    corpus = _resolve_corpus(config, corpus)
    plan = plan_detection(config, corpus)
    out = _prepare_output(config.output_dir)
    gateway = gateway or build_gateway(config)
    audit, rows, verdicts = _Audit(), [], []
    for defect in config.defects:
        experiment = config.experiment(defect).value
        reasoned = config.reasoned and defect.is_ambiguity
        for seed in config.seeds:
            split, shot_counts = plan[defect, seed]
            audit.splits.append(split.to_record())
            X, y, reasons = _detector_training(corpus, split, defect, reasoned)
            test_keys = sorted(split.testing_set)
            tests = [corpus.request(k) for k in test_keys]
            for shots in shot_counts:
                n = shots // 2
                audit.splits.append({**make_shot_set(split, n, seed).to_record(),
                                     "defect": defect.value, "seed": seed})
                per_rep = {}
                score_name = f"{experiment}-{defect.value}-seed{seed}-shots{shots}"
                for rep in range(config.repetitions):
                    per_order = {}
                    for rank, _ in _orderings(config, n, seed, shots, rep):
                        det = DefectDetector(defect, shots, reasoned, shot_seed=seed,
                                             ordering=rank, repetition=rep, gateway=gateway,
                                             decoding=config.decoding,
                                             persona_as_system=config.persona_as_system,
                                             reask=config.reask)
                        det.fit(X, y, reasons)
                        preds = det.predict_detailed(tests)
                        cell = {"experiment": experiment, "defect": defect.value, "seed": seed,
                                "shot_count": shots, "repetition": rep, "ordering_id": rank}
                        scores, per_request = _detection_metrics(
                            defect, [p.verdict for p in preds], corpus, test_keys,
                            config.rouge_threshold, gateway)
                        for metric, value in scores.items():
                            per_order.setdefault(metric, []).append(value)
                        for p in preds:
                            audit.log_prediction(cell, p)
                            v = p.verdict
                            verdicts.append({**cell, "key": format_key(p.key), "verdict": v.kind,
                                             "items": list(v.items), "reasons": list(v.reasons),
                                             "reasked": p.reasked, "error": p.error,
                                             "fingerprint": p.bundle.fingerprint})
                            audit.scores.setdefault(score_name, []).append(
                                {**cell, "key": format_key(p.key),
                                 "scores": per_request.get(p.key, {})})
                    for metric, values in per_order.items():
                        per_rep.setdefault(metric, []).append(values)
                _add_rows(rows, experiment, defect, seed, shots, per_rep)
    report = MetricReport(config.to_dict(runtime=False), rows, verdicts)
    if out is not None:
        audit.write(out, report)
    _log_errors(report)
    return report


# --- refinement ----------------------------------------------------------------

def run_refinement(config: ExperimentConfig, corpus=None, gateway=None) -> MetricReport:
    """Generate and score clarifying questions for every held-out defect instance."""
    if config.task != "refine":
        raise UsageError("run_refinement needs a refine config")
    corpus = _resolve_corpus(config, corpus)
    plan = plan_refinement(config, corpus)
    out = _prepare_output(config.output_dir)
    gateway = gateway or build_gateway(config)
    audit, rows, verdicts = _Audit(), [], []
    for defect in config.defects:
        experiment = config.experiment(defect).value
        for seed in config.seeds:
            split, shot_counts = plan[defect, seed]
            audit.splits.append(split.to_record())
            train = [corpus.instance(defect, r) for r in split.positive_train]
            tests = [corpus.instance(defect, r) for r in sorted(split.positive_test)]
            for shots in shot_counts:
                per_rep = {}
                score_name = f"{experiment}-{defect.value}-seed{seed}-shots{shots}"
                for rep in range(config.repetitions):
                    per_order = {}
                    for rank, _ in _orderings(config, shots, seed, shots, rep):
                        gen = ClarifyingQuestionGenerator(
                            shots, shot_seed=seed, ordering=rank, repetition=rep,
                            gateway=gateway, decoding=config.decoding,
                            persona_as_system=config.persona_as_system, reask=config.reask)
                        gen.fit(train)
                        preds = gen.predict_detailed(tests)
                        cell = {"experiment": experiment, "defect": defect.value, "seed": seed,
                                "shot_count": shots, "repetition": rep, "ordering_id": rank}
                        sims = {name: [] for name in COSINE_METRICS}
                        for inst, p in zip(tests, preds):
                            audit.log_prediction(cell, p)
                            error = p.error
                            try:
                                s = cosine_scores(p.verdict.questions, inst.cqs, gateway)
                                values = {n: getattr(s, n) for n in COSINE_METRICS}
                            except ReqClarifyError as exc:
                                error = error or f"embedding: {exc}"
                                values = {n: 0.0 for n in COSINE_METRICS}
                            for n, val in values.items():
                                sims[n].append(val)
                            ref = _key_text(inst.ref)
                            verdicts.append({**cell, "key": ref,
                                             "questions": list(p.verdict.questions),
                                             "reasked": p.reasked, "error": error,
                                             "fingerprint": p.bundle.fingerprint})
                            audit.scores.setdefault(score_name, []).append(
                                {**cell, "key": ref, "scores": values})
                        for n, vals in sims.items():
                            per_order.setdefault(n, []).append(
                                math.fsum(vals) / len(vals) if vals else 0.0)
                    for metric, values in per_order.items():
                        per_rep.setdefault(metric, []).append(values)
                _add_rows(rows, experiment, defect, seed, shots, per_rep)
    report = MetricReport(config.to_dict(runtime=False), rows, verdicts)
    if out is not None:
        audit.write(out, report)
    _log_errors(report)
    return report


def _log_errors(report):
    errors = report.errors
    if errors:
        log.warning("%d prediction(s) failed; see the error field of the verdict records",
                    len(errors))


# --- reports -------------------------------------------------------------------

def _fmt(x):
    return f"{x:.3f}"


def _metric_family(metric):
    if metric in BINARY_METRICS:
        return "binary"
    if metric in COSINE_METRICS:
        return "cosine"
    return "segments"


def report_csv(report: MetricReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["experiment", "defect", "seed", "shot_count", "metric", "mean",
                "n_repetitions", "scores"])
    for r in report.sorted_rows():
        w.writerow([r.experiment, r.defect, r.seed, r.shot_count, r.metric, repr(r.mean),
                    len(r.scores), ";".join(repr(s) for s in r.scores)])
    return buf.getvalue()


def _md_table(header, body):
    lines = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines)


def report_markdown(report: MetricReport) -> str:
    """Metric x (defect, seed) grids per shot count, then shot-trend series."""
    rows = report.sorted_rows()
    out = ["# Results", ""]
    if not rows:
        out += ["No results.", ""]
        return "\n".join(out)
    by_exp = {}
    for r in rows:
        by_exp.setdefault(r.experiment, []).append(r)
    for experiment, exp_rows in by_exp.items():
        out += [f"## {experiment}", ""]
        cells = {(r.defect, r.seed, r.shot_count, r.metric): r.mean for r in exp_rows}
        defects = _ordered({r.defect for r in exp_rows})
        seeds = sorted({r.seed for r in exp_rows})
        shots_all = sorted({r.shot_count for r in exp_rows})
        metrics = [m for m in SEGMENT_METRICS + BINARY_METRICS + COSINE_METRICS
                   if any(r.metric == m for r in exp_rows)]
        for shots in shots_all:
            cols = [(d, s) for d in defects for s in seeds if (d, s, shots, metrics[0]) in cells
                    or any((d, s, shots, m) in cells for m in metrics)]
            header = ["metric"] + [f"{d} seed {s}" for d, s in cols]
            body = [[m] + [_fmt(cells[d, s, shots, m]) if (d, s, shots, m) in cells else "-"
                           for d, s in cols] for m in metrics]
            out += [f"### {shots}-shot", "", _md_table(header, body), ""]
        out += ["### Shot trends (* marks the best seed per shot count)", ""]
        for d in defects:
            fams = {_metric_family(m) for m in metrics}
            for fam in sorted(fams):
                metric = HEADLINE_METRIC[fam]
                if metric not in metrics:
                    continue
                body = []
                best = {}
                for shots in shots_all:
                    vals = [(cells[d, s, shots, metric], s) for s in seeds
                            if (d, s, shots, metric) in cells]
                    if vals:
                        best[shots] = max(vals, key=lambda t: (t[0], -t[1]))[1]
                for s in seeds:
                    line = [f"seed {s}"]
                    for shots in shots_all:
                        if (d, s, shots, metric) not in cells:
                            line.append("-")
                        else:
                            mark = "*" if best.get(shots) == s else ""
                            line.append(_fmt(cells[d, s, shots, metric]) + mark)
                    body.append(line)
                header = [f"{d} {metric}"] + [f"{k}-shot" for k in shots_all]
                out += [_md_table(header, body), ""]
    errors = report.errors
    if errors:
        out += [f"{len(errors)} prediction(s) failed; see report.json.", ""]
    return "\n".join(out)


def _ordered(defects):
    order = [k.value for k in ALL_KINDS]
    return sorted(defects, key=lambda d: order.index(d) if d in order else len(order))


REPORT_FORMATS = {"json": ("report.json", MetricReport.to_json),
                  "csv": ("report.csv", report_csv),
                  "md": ("report.md", report_markdown)}


def emit_report(report: MetricReport, out_dir, formats=("json", "csv", "md")) -> list:
    """Write the report in the requested formats and return the paths written."""
    unknown = set(formats) - set(REPORT_FORMATS)
    if unknown:
        raise UsageError(f"unknown report format(s): {sorted(unknown)}")
    out = _prepare_output(out_dir)
    paths = []
    for fmt in formats:
        name, render = REPORT_FORMATS[fmt]
        path = out / name
        _write(path, render(report))
        paths.append(path)
    return paths


def load_report(path) -> MetricReport:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read report {path}: {exc}") from None
    return MetricReport.from_json(text)


# --- single-issue analysis --------------------------------------------------------

@dataclass(frozen=True)
class DetectedDefect:
    defect: DefectKind
    items: tuple  # one segment, or the missing items
    reason: str = ""


@dataclass
class IssueAnalysis:
    request: FeatureRequest
    detected: list = field(default_factory=list)
    cqs: list = field(default_factory=list)  # (index into detected, questions)
    undetermined: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "request": format_key(self.request.key),
            "title": self.request.title,
            "detected": [{"defect": d.defect.value, "items": list(d.items), "reason": d.reason}
                         for d in self.detected],
            "cqs": [{"defect_ref": i, "questions": list(q)} for i, q in self.cqs],
            "undetermined": [k.value for k in self.undetermined],
        }

    def format(self) -> str:
        lines = [f"Feature request {format_key(self.request.key)}: {self.request.title}", ""]
        if not self.detected:
            lines.append("No defects detected.")
        questions = {}
        for i, qs in self.cqs:
            questions.setdefault(i, []).extend(qs)
        for i, d in enumerate(self.detected, 1):
            what = ("missing: " + ", ".join(d.items)) if d.defect is DefectKind.INCOMPLETENESS \
                else f'segment: "{d.items[0]}"'
            lines.append(f"[{i}] {d.defect.label} - {what}")
            if d.reason:
                lines.append(f"    why: {d.reason}")
            for q in questions.get(i - 1, []):
                lines.append(f"    ? {q}")
        for kind in self.undetermined:
            lines.append(f"{kind.label}: {UNDETERMINED} (no parseable answer)")
        return "\n".join(lines) + "\n"


_LOCATOR = re.compile(r"^(?:https://github\.com/)?([\w.-]+/[\w.-]+)(?:#|/issues/)(\d+)$")


def resolve_issue(source, token=None) -> FeatureRequest:
    """A FeatureRequest from a request object, an ``owner/repo#n`` locator, or raw text."""
    if isinstance(source, FeatureRequest):
        return source
    if not isinstance(source, str) or not source.strip():
        raise UsageError("nothing to analyze")
    m = _LOCATOR.match(source.strip())
    if m:
        from .corpus.github import fetch_issue
        return fetch_issue(m.group(1), int(m.group(2)), token)
    return FeatureRequest.from_text(source.strip())


def _analysis_instance(request, defect, detected):
    if defect is DefectKind.INCOMPLETENESS:
        reason = detected.reason or "The request leaves out: " + ", ".join(detected.items) + "."
        return DefectInstance(request, defect, reason, missing_items=detected.items)
    seg = detected.items[0]
    reason = detected.reason or f'"{seg}" was flagged as {defect.value}.'
    return DefectInstance(request, defect, reason, segment=seg)


def analyze_issue(source, gateway, *, corpus=None, n_shots=0, seed=DEFAULT_SEEDS[0],
                  repetition=0, decoding=None, persona_as_system=False, token=None,
                  defects=ALL_KINDS) -> IssueAnalysis:
    """Detect every defect kind in one request, then ask CQs for each finding.

    Ambiguity uses reasoned detection so each finding carries a reason for the
    CQ prompt. With ``n_shots`` > 0 demonstrations come from ``corpus``.
    """
    request = resolve_issue(source, token)
    decoding = decoding or DecodingParams()
    analysis = IssueAnalysis(request)
    if n_shots and corpus is None:
        raise UsageError("few-shot analysis needs a corpus to draw demonstrations from")
    found = []
    for defect in (DefectKind.parse(d) for d in defects):
        reasoned = defect.is_ambiguity
        det = DefectDetector(defect, n_shots, reasoned, shot_seed=seed, ordering=0,
                             repetition=repetition, gateway=gateway, decoding=decoding,
                             persona_as_system=persona_as_system)
        if n_shots:
            split = make_split(corpus, defect, seed)
            X, y, reasons = _detector_training(corpus, split, defect, reasoned)
            det.fit(X, y, reasons)
        else:
            det.fit([], [])
        pred = det.predict_detailed([request])[0]
        v = pred.verdict
        if v.kind == "unparsed":
            analysis.undetermined.append(defect)
            continue
        if defect is DefectKind.INCOMPLETENESS:
            if v.items:
                found.append(DetectedDefect(defect, tuple(v.items)))
        else:
            for item, reason in zip(v.items, v.reasons or [""] * len(v.items)):
                found.append(DetectedDefect(defect, (item,), reason))
    analysis.detected = found
    for i, d in enumerate(found):
        gen = ClarifyingQuestionGenerator(0, repetition=repetition, gateway=gateway,
                                          decoding=decoding, persona_as_system=persona_as_system)
        gen.fit([])
        inst = _analysis_instance(request, d.defect, d)
        questions = gen.predict([inst])[0].questions
        analysis.cqs.append((i, tuple(questions)))
    return analysis
