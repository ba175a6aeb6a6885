"""Render detection and clarifying-question prompts from text templates."""
from __future__ import annotations

import enum
import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus.models import DefectInstance, FeatureRequest
from .exceptions import ConfigurationError, UsageError
from .parsing import format_cq_list, format_missing, format_reasoned, format_segment_list
from .taxonomy import DefectKind, ambiguity_kind, default_catalog


class PromptKind(str, enum.Enum):
    AMBIGUITY_DETECT = "ambiguity_detect"
    AMBIGUITY_DETECT_REASONED = "ambiguity_detect_reasoned"
    INCOMPLETENESS_DETECT = "incompleteness_detect"
    AMBIGUITY_REFINE = "ambiguity_refine"
    INCOMPLETENESS_REFINE = "incompleteness_refine"

    def __str__(self):
        return self.value

    @classmethod
    def for_detection(cls, defect, reasoned=False) -> "PromptKind":
        if DefectKind.parse(defect) is DefectKind.INCOMPLETENESS:
            return cls.INCOMPLETENESS_DETECT
        return cls.AMBIGUITY_DETECT_REASONED if reasoned else cls.AMBIGUITY_DETECT

    @classmethod
    def for_refinement(cls, defect) -> "PromptKind":
        if DefectKind.parse(defect) is DefectKind.INCOMPLETENESS:
            return cls.INCOMPLETENESS_REFINE
        return cls.AMBIGUITY_REFINE


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024

    def __post_init__(self):
        if self.temperature < 0:
            raise UsageError("temperature must be >= 0")
        if self.max_output_tokens <= 0:
            raise UsageError("max_output_tokens must be positive")


def fingerprint(text: str, decoding: DecodingParams, system: str | None = None) -> str:
    payload = {"text": text, "temperature": decoding.temperature,
               "max_output_tokens": decoding.max_output_tokens}
    if system is not None:
        payload["system"] = system
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


@dataclass(frozen=True)
class PromptBundle:
    kind: PromptKind
    defect: DefectKind
    text: str
    shot_count: int = 0
    ordering_id: int = 0
    decoding: DecodingParams = DecodingParams()
    system: str | None = None
    fingerprint: str = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "fingerprint", fingerprint(self.text, self.decoding, self.system))


@dataclass(frozen=True)
class Demonstration:
    """A worked detection example: a positive lists its items, a negative lists none."""

    statement: str
    positive: bool
    items: tuple = ()
    reasons: tuple = ()


_PLACEHOLDER = re.compile(r"\{(\w+)\}")


def substitute(template: str, **values) -> str:
    """Single-pass ``{name}`` substitution; inserted text is never re-expanded."""
    return _PLACEHOLDER.sub(
        lambda m: str(values[m.group(1)]) if m.group(1) in values else m.group(0), template
    )


class TemplateSet:
    """Loads ``<kind>.txt``, ``<kind>.demo.txt`` and ``<kind>.example.txt``.

    Files missing from ``directory`` fall back to the bundled defaults.
    """

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory else None
        self._cache = {}

    def get(self, kind: PromptKind, part: str = "") -> str:
        name = f"{kind.value}{'.' + part if part else ''}.txt"
        if name not in self._cache:
            text = None
            if self.directory is not None and (self.directory / name).is_file():
                text = (self.directory / name).read_text(encoding="utf-8")
            if text is None:
                bundled = resources.files("reqclarify").joinpath(f"data/templates/{name}")
                if not bundled.is_file():
                    raise ConfigurationError(f"no template {name}")
                text = bundled.read_text(encoding="utf-8")
            self._cache[name] = text
        return self._cache[name]


_default_templates = TemplateSet()


def _statement(test) -> str:
    if isinstance(test, FeatureRequest):
        return test.text
    if isinstance(test, DefectInstance):
        return test.request.text
    return str(test)


def _persona(catalog, role, persona_as_system):
    persona = catalog.persona_for(role)
    return ("", persona) if persona_as_system else (persona, None)


def _assemble(kind, templates, values, examples, system, defect, decoding, ordering_id,
              shot_count) -> PromptBundle:
    demos = ""
    if examples:
        demos = substitute(templates.get(kind, "demo"), examples="".join(examples))
    text = substitute(templates.get(kind), demonstrations=demos, **values)
    if system is not None:
        # persona moved to a system message: drop its now-empty line
        text = text.replace("\n \n", "\n", 1)
    return PromptBundle(kind=kind, defect=defect, text=text, shot_count=shot_count,
                        ordering_id=ordering_id, decoding=decoding or DecodingParams(),
                        system=system)


def detection_answer(demo: Demonstration, kind: PromptKind, sentinel: str) -> str:
    if not demo.positive:
        if demo.items or demo.reasons:
            raise UsageError("a negative demonstration must not carry items")
        return sentinel
    if not demo.items:
        raise UsageError("a positive demonstration needs at least one item")
    if kind is PromptKind.AMBIGUITY_DETECT_REASONED:
        if len(demo.reasons) != len(demo.items) or not all(r.strip() for r in demo.reasons):
            raise UsageError("a reasoned demonstration needs one reason per segment")
        return format_reasoned(zip(demo.reasons, demo.items))
    if kind is PromptKind.INCOMPLETENESS_DETECT:
        return format_missing(demo.items)
    return format_segment_list(demo.items)


def render_ambiguity_detection(kind, shots, test, reasoned=False, catalog=None, *,
                               templates=None, decoding=None, ordering_id=0,
                               persona_as_system=False) -> PromptBundle:
    defect = ambiguity_kind(kind)
    catalog = catalog or default_catalog()
    templates = templates or _default_templates
    pkind = PromptKind.for_detection(defect, reasoned)
    persona, system = _persona(catalog, "ambiguity", persona_as_system)
    examples = [
        substitute(templates.get(pkind, "example"), statement=d.statement, subclass=defect.label,
                   answer=detection_answer(d, pkind, catalog.sentinel))
        for d in shots
    ]
    values = dict(subclass=defect.label, definition=catalog.definition_of(defect),
                  persona=persona, statement=_statement(test))
    return _assemble(pkind, templates, values, examples, system, defect, decoding, ordering_id,
                     len(shots))


def render_incompleteness_detection(shots, test, catalog=None, *, templates=None, decoding=None,
                                    ordering_id=0, persona_as_system=False) -> PromptBundle:
    defect = DefectKind.INCOMPLETENESS
    catalog = catalog or default_catalog()
    templates = templates or _default_templates
    pkind = PromptKind.INCOMPLETENESS_DETECT
    persona, system = _persona(catalog, "incompleteness", persona_as_system)
    examples = [
        substitute(templates.get(pkind, "example"), statement=d.statement,
                   answer=detection_answer(d, pkind, catalog.sentinel))
        for d in shots
    ]
    values = dict(defect=defect.label, definition=catalog.definition_of(defect),
                  persona=persona, statement=_statement(test))
    return _assemble(pkind, templates, values, examples, system, defect, decoding, ordering_id,
                     len(shots))


def render_detection(defect, shots, test, reasoned=False, **kw) -> PromptBundle:
    if DefectKind.parse(defect) is DefectKind.INCOMPLETENESS:
        return render_incompleteness_detection(shots, test, **kw)
    return render_ambiguity_detection(defect, shots, test, reasoned, **kw)


def _segment_label(instance: DefectInstance) -> str:
    text = instance.request.text
    count = text.count(instance.segment)
    if count > 1:
        return f"{instance.segment} (occurrence {instance.occurrence_index + 1} of {count})"
    return instance.segment


def _instance_values(instance: DefectInstance) -> dict:
    if not (instance.reasoning or "").strip():
        raise UsageError("a defect instance needs its reasoning to generate CQs")
    values = dict(statement=instance.request.text, reasoning=instance.reasoning)
    if instance.defect.is_ambiguity:
        if not instance.segment:
            raise UsageError("an ambiguity instance needs its segment")
        values["segment"] = _segment_label(instance)
    else:
        if not instance.missing_items:
            raise UsageError("an incompleteness instance needs its missing items")
        values["missing"] = format_missing(instance.missing_items)
    return values


def render_cq_prompt(instance: DefectInstance, shots=(), catalog=None, *, templates=None,
                     decoding=None, ordering_id=0, persona_as_system=False) -> PromptBundle:
    defect = instance.defect
    catalog = catalog or default_catalog()
    templates = templates or _default_templates
    pkind = PromptKind.for_refinement(defect)
    persona, system = _persona(catalog, "refinement", persona_as_system)
    examples = []
    for shot in shots:
        if shot.defect is not defect:
            raise UsageError("CQ demonstrations must share the instance's defect kind")
        if not shot.cqs:
            raise UsageError("a CQ demonstration needs at least one question")
        examples.append(substitute(templates.get(pkind, "example"), subclass=defect.label,
                                   answer=format_cq_list(shot.cqs), **_instance_values(shot)))
    values = dict(subclass=defect.label, defect=defect.label,
                  definition=catalog.definition_of(defect), persona=persona,
                  **_instance_values(instance))
    return _assemble(pkind, templates, values, examples, system, defect, decoding, ordering_id,
                     len(shots))
