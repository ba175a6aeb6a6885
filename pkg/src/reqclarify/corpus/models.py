from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Optional

from ..exceptions import IntegrityError, UsageError
from ..taxonomy import DefectKind, ambiguity_kind

FEATURE_LABELS = ("Feature Request", "Feature")

RequestKey = tuple  # (repo, issue_number)


def parse_timestamp(value) -> datetime:
    if isinstance(value, datetime):
        dt = value
    else:
        text = str(value).strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        try:
            dt = datetime.fromisoformat(text)
        except ValueError:
            raise UsageError(f"not an RFC 3339 timestamp: {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def format_key(key: RequestKey) -> str:
    return f"{key[0]}#{key[1]}"


def parse_key(value) -> RequestKey:
    if isinstance(value, str):
        repo, sep, number = value.rpartition("#")
        if not sep:
            raise UsageError(f"request key must look like owner/name#123, got {value!r}")
        value = (repo, number)
    repo, number = value
    try:
        number = int(number)
    except (TypeError, ValueError):
        raise UsageError(f"issue number must be an integer, got {number!r}") from None
    return (str(repo), number)


@dataclass(frozen=True)
class Comment:
    author: str
    created_at: datetime
    body: str

    def __post_init__(self):
        object.__setattr__(self, "created_at", parse_timestamp(self.created_at))
        if not self.body.strip():
            raise IntegrityError("comment body is empty")


@dataclass(frozen=True)
class FeatureRequest:
    repo: str
    issue_number: int
    title: str
    body: str
    author: str = ""
    created_at: datetime = datetime(1970, 1, 1, tzinfo=timezone.utc)
    closed_at: Optional[datetime] = None
    state: str = "open"
    labels: tuple = ()
    comments: tuple = ()

    def __post_init__(self):
        if self.issue_number <= 0:
            raise IntegrityError(f"issue_number must be positive, got {self.issue_number}")
        object.__setattr__(self, "created_at", parse_timestamp(self.created_at))
        if self.closed_at is not None:
            object.__setattr__(self, "closed_at", parse_timestamp(self.closed_at))
            if self.closed_at < self.created_at:
                raise IntegrityError(f"{format_key(self.key)} closed before it was created")
        if self.state not in ("open", "closed"):
            raise IntegrityError(f"state must be open or closed, got {self.state!r}")
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "comments", tuple(self.comments))

    @property
    def key(self) -> RequestKey:
        return (self.repo, self.issue_number)

    @property
    def text(self) -> str:
        """Title and body joined by one newline; used for prompts and segment search."""
        return f"{self.title}\n{self.body}"

    def has_label(self, wanted: Iterable[str]) -> bool:
        wanted = {w.casefold() for w in wanted}
        return any(label.casefold() in wanted for label in self.labels)

    @classmethod
    def from_text(cls, text: str, key=("local/text", 1)) -> "FeatureRequest":
        """Wrap free text; the first line becomes the title."""
        title, _, body = text.partition("\n")
        return cls(repo=key[0], issue_number=key[1], title=title, body=body)


@dataclass(frozen=True)
class AmbiguityAnnotation:
    request_key: RequestKey
    kind: DefectKind
    segment: str
    interpretations: tuple
    reasoning: str
    cqs: tuple
    occurrence_index: int = 0
    impact_note: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "request_key", parse_key(self.request_key))
        object.__setattr__(self, "kind", ambiguity_kind(self.kind))
        object.__setattr__(self, "interpretations", tuple(self.interpretations))
        object.__setattr__(self, "cqs", tuple(self.cqs))
        if not self.segment:
            raise IntegrityError("ambiguity segment is empty")
        if len(self.interpretations) < 2:
            raise IntegrityError(
                f"ambiguity on {format_key(self.request_key)} needs at least two interpretations"
            )
        if not self.cqs:
            raise IntegrityError(f"ambiguity on {format_key(self.request_key)} has no CQs")
        if self.occurrence_index < 0:
            raise IntegrityError("occurrence_index must be >= 0")

    @property
    def defect(self) -> DefectKind:
        return self.kind


@dataclass(frozen=True)
class IncompletenessAnnotation:
    request_key: RequestKey
    missing_items: tuple
    reasoning: str
    cqs: tuple

    def __post_init__(self):
        object.__setattr__(self, "request_key", parse_key(self.request_key))
        object.__setattr__(self, "missing_items", tuple(self.missing_items))
        object.__setattr__(self, "cqs", tuple(self.cqs))
        if not self.missing_items:
            raise IntegrityError(
                f"incompleteness on {format_key(self.request_key)} lists no missing items"
            )
        if not self.cqs:
            raise IntegrityError(f"incompleteness on {format_key(self.request_key)} has no CQs")

    @property
    def defect(self) -> DefectKind:
        return DefectKind.INCOMPLETENESS


@dataclass(frozen=True)
class DefectInstance:
    """One annotated defect together with its parent request (the unit of CQ generation)."""

    request: FeatureRequest
    defect: DefectKind
    reasoning: str
    cqs: tuple = ()
    segment: Optional[str] = None
    occurrence_index: int = 0
    missing_items: tuple = ()
    index: int = 0  # position in the corpus's annotation list for this defect family

    @property
    def key(self) -> RequestKey:
        return self.request.key

    @property
    def ref(self) -> tuple:
        return (self.request.key, self.index)


def _occurrences(text: str, segment: str) -> int:
    count, start = 0, 0
    while True:
        pos = text.find(segment, start)
        if pos < 0:
            return count
        count += 1
        start = pos + 1


@dataclass(frozen=True)
class AnnotatedCorpus:
    requests: tuple = ()
    ambiguity_annotations: tuple = ()
    incompleteness_annotations: tuple = ()
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        object.__setattr__(self, "ambiguity_annotations", tuple(self.ambiguity_annotations))
        object.__setattr__(
            self, "incompleteness_annotations", tuple(self.incompleteness_annotations)
        )
        index = {}
        for request in self.requests:
            if request.key in index:
                raise IntegrityError(f"duplicate request {format_key(request.key)}")
            index[request.key] = request
        object.__setattr__(self, "_index", index)
        for ann in self.ambiguity_annotations + self.incompleteness_annotations:
            if ann.request_key not in index:
                raise IntegrityError(
                    f"annotation references unknown request {format_key(ann.request_key)}"
                )
        for ann in self.ambiguity_annotations:
            text = index[ann.request_key].text
            if _occurrences(text, ann.segment) <= ann.occurrence_index:
                raise IntegrityError(
                    f"segment {ann.segment!r} does not occur {ann.occurrence_index + 1} time(s) "
                    f"in {format_key(ann.request_key)}"
                )

    def __len__(self):
        return len(self.requests)

    @property
    def keys(self) -> list:
        return [r.key for r in self.requests]

    def request(self, key) -> FeatureRequest:
        try:
            return self._index[parse_key(key)]
        except KeyError:
            raise IntegrityError(f"unknown request {format_key(parse_key(key))}") from None

    def annotations_for(self, defect) -> tuple:
        defect = DefectKind.parse(defect)
        if defect is DefectKind.INCOMPLETENESS:
            return self.incompleteness_annotations
        return tuple(a for a in self.ambiguity_annotations if a.kind is defect)

    def positive_keys(self, defect) -> set:
        return {a.request_key for a in self.annotations_for(defect)}

    def gt_items(self, defect) -> dict:
        """Ground-truth segments (or missing items) per request key, empty for negatives."""
        items = {key: [] for key in self.keys}
        for ann in self.annotations_for(defect):
            if isinstance(ann, AmbiguityAnnotation):
                items[ann.request_key].append(ann.segment)
            else:
                items[ann.request_key].extend(ann.missing_items)
        return items

    def gt_reasoned(self, defect) -> dict:
        """(reasoning, segment) pairs per request key; ambiguity kinds only."""
        defect = ambiguity_kind(defect)
        items = {key: [] for key in self.keys}
        for ann in self.annotations_for(defect):
            items[ann.request_key].append((ann.reasoning, ann.segment))
        return items

    def instances(self, defect) -> list:
        """All annotated instances of ``defect`` in corpus order."""
        defect = DefectKind.parse(defect)
        out = []
        if defect is DefectKind.INCOMPLETENESS:
            for i, ann in enumerate(self.incompleteness_annotations):
                out.append(DefectInstance(
                    request=self._index[ann.request_key], defect=defect, reasoning=ann.reasoning,
                    cqs=ann.cqs, missing_items=ann.missing_items, index=i,
                ))
        else:
            for i, ann in enumerate(self.ambiguity_annotations):
                if ann.kind is defect:
                    out.append(DefectInstance(
                        request=self._index[ann.request_key], defect=defect, reasoning=ann.reasoning,
                        cqs=ann.cqs, segment=ann.segment, occurrence_index=ann.occurrence_index,
                        index=i,
                    ))
        return out

    def instance(self, defect, ref) -> DefectInstance:
        key, index = parse_key(ref[0]), ref[1]
        for inst in self.instances(defect):
            if inst.ref == (key, index):
                return inst
        raise IntegrityError(f"no {DefectKind.parse(defect).value} annotation {index} on {format_key(key)}")

    def check_labels(self, feature_labels=FEATURE_LABELS):
        for request in self.requests:
            if not request.has_label(feature_labels):
                raise IntegrityError(
                    f"{format_key(request.key)} carries none of the feature labels {list(feature_labels)}"
                )
