"""Line-delimited corpus file: one JSON record per line, tagged by ``kind``."""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..exceptions import IntegrityError, ParseError, ReqClarifyError, UsageError
from .models import (
    AmbiguityAnnotation,
    AnnotatedCorpus,
    Comment,
    FeatureRequest,
    IncompletenessAnnotation,
    format_timestamp,
)

BUNDLED = {
    "@synthetic": "data/corpus/synthetic_corpus.jsonl",
    "@fixture": "data/fixtures/fixture_corpus.jsonl",
}


def request_record(r: FeatureRequest) -> dict:
    return {
        "kind": "request",
        "repo": r.repo,
        "issue_number": r.issue_number,
        "title": r.title,
        "body": r.body,
        "author": r.author,
        "created_at": format_timestamp(r.created_at),
        "closed_at": None if r.closed_at is None else format_timestamp(r.closed_at),
        "state": r.state,
        "labels": list(r.labels),
        "comments": [
            {"author": c.author, "created_at": format_timestamp(c.created_at), "body": c.body}
            for c in r.comments
        ],
    }


def annotation_record(a) -> dict:
    if isinstance(a, AmbiguityAnnotation):
        return {
            "kind": "ambiguity",
            "request_key": list(a.request_key),
            "ambiguity_kind": a.kind.value,
            "segment": a.segment,
            "occurrence_index": a.occurrence_index,
            "interpretations": list(a.interpretations),
            "reasoning": a.reasoning,
            "impact_note": a.impact_note,
            "cqs": list(a.cqs),
        }
    return {
        "kind": "incompleteness",
        "request_key": list(a.request_key),
        "missing_items": list(a.missing_items),
        "reasoning": a.reasoning,
        "cqs": list(a.cqs),
    }


def request_from_record(rec: dict) -> FeatureRequest:
    return FeatureRequest(
        repo=rec["repo"],
        issue_number=rec["issue_number"],
        title=rec["title"],
        body=rec["body"],
        author=rec.get("author", ""),
        created_at=rec["created_at"],
        closed_at=rec.get("closed_at"),
        state=rec.get("state", "open"),
        labels=tuple(rec.get("labels", ())),
        comments=tuple(Comment(**c) for c in rec.get("comments", ())),
    )


def annotation_from_record(rec: dict):
    if rec["kind"] == "ambiguity":
        return AmbiguityAnnotation(
            request_key=tuple(rec["request_key"]),
            kind=rec["ambiguity_kind"],
            segment=rec["segment"],
            occurrence_index=rec.get("occurrence_index", 0),
            interpretations=tuple(rec["interpretations"]),
            reasoning=rec["reasoning"],
            impact_note=rec.get("impact_note"),
            cqs=tuple(rec["cqs"]),
        )
    return IncompletenessAnnotation(
        request_key=tuple(rec["request_key"]),
        missing_items=tuple(rec["missing_items"]),
        reasoning=rec["reasoning"],
        cqs=tuple(rec["cqs"]),
    )


def dump_corpus(corpus: AnnotatedCorpus) -> str:
    records = [request_record(r) for r in corpus.requests]
    records += [annotation_record(a) for a in corpus.ambiguity_annotations]
    records += [annotation_record(a) for a in corpus.incompleteness_annotations]
    return "".join(json.dumps(rec, ensure_ascii=False) + "\n" for rec in records)


def save_corpus(corpus: AnnotatedCorpus, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_corpus(corpus), encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot write corpus to {path}: {exc}") from exc


def parse_corpus(text: str, source="<string>") -> AnnotatedCorpus:
    requests, ambiguity, incompleteness = [], [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            kind = rec["kind"]
            if kind == "request":
                requests.append(request_from_record(rec))
            elif kind == "ambiguity":
                ambiguity.append(annotation_from_record(rec))
            elif kind == "incompleteness":
                incompleteness.append(annotation_from_record(rec))
            else:
                raise ValueError(f"unknown record kind {kind!r}")
        except (ValueError, KeyError, TypeError, ReqClarifyError) as exc:
            if isinstance(exc, KeyError):
                exc = f"missing field {exc}"
            raise ParseError(f"{source}:{lineno}: {exc}", raw=line, line=lineno) from None
    return AnnotatedCorpus(requests, ambiguity, incompleteness)


def load_corpus(path) -> AnnotatedCorpus:
    """Load a corpus file. ``@synthetic`` and ``@fixture`` name the bundled corpora."""
    if str(path) in BUNDLED:
        text = resources.files("reqclarify").joinpath(BUNDLED[str(path)]).read_text("utf-8")
        return parse_corpus(text, source=str(path))
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read corpus {path}: {exc}") from exc
    return parse_corpus(text, source=str(path))


__all__ = ["save_corpus", "load_corpus", "parse_corpus", "dump_corpus", "IntegrityError"]
