"""Defect taxonomy and the definition catalog used to fill prompt templates."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import yaml

from .exceptions import ConfigurationError, UsageError

END_TRIGGER = "# END"
SEPARATOR_TRIGGER = "####"
NO_DEFECT = "No Defect Found"


class DefectKind(str, enum.Enum):
    """The five ambiguity sub-classes plus incompleteness.

    ``AMBIGUITY_KINDS`` is the ambiguity branch; ``INCOMPLETENESS`` the other.
    """

    LEXICAL = "lexical"
    SYNTACTIC = "syntactic"
    SEMANTIC = "semantic"
    PRAGMATIC = "pragmatic"
    VAGUENESS = "vagueness"
    INCOMPLETENESS = "incompleteness"

    @property
    def is_ambiguity(self) -> bool:
        return self is not DefectKind.INCOMPLETENESS

    @property
    def label(self) -> str:
        return self.value.capitalize()

    @classmethod
    def parse(cls, value) -> "DefectKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise UsageError(f"unknown defect kind {value!r}; expected one of {names}") from None

    def __str__(self) -> str:
        return self.value


AMBIGUITY_KINDS = tuple(k for k in DefectKind if k.is_ambiguity)
ALL_KINDS = tuple(DefectKind)


def ambiguity_kind(value) -> DefectKind:
    kind = DefectKind.parse(value)
    if not kind.is_ambiguity:
        raise UsageError(f"{kind.value} is not an ambiguity sub-class")
    return kind


@dataclass(frozen=True)
class DefinitionCatalog:
    definitions: Mapping[str, str]
    personas: Mapping[str, str]
    end_trigger: str = END_TRIGGER
    separator_trigger: str = SEPARATOR_TRIGGER
    sentinel: str = NO_DEFECT
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        for key, text in {**self.definitions, **self.personas}.items():
            if not isinstance(text, str) or not text.strip():
                raise ConfigurationError(f"catalog entry {key!r} is empty")

    def definition_of(self, kind) -> str:
        key = kind.value if isinstance(kind, DefectKind) else str(kind).lower()
        try:
            return self.definitions[key]
        except KeyError:
            raise ConfigurationError(f"no definition configured for {key!r}") from None

    def persona_for(self, role: str) -> str:
        try:
            return self.personas[role]
        except KeyError:
            raise ConfigurationError(f"no persona configured for {role!r}") from None

    @classmethod
    def from_mapping(cls, data: Mapping, source=None) -> "DefinitionCatalog":
        if not isinstance(data, Mapping):
            raise ConfigurationError("definition catalog must be a key/value document")
        data = dict(data)
        personas = data.pop("persona", {}) or {}
        # dotted keys are accepted as well as nested tables
        for key in [k for k in data if str(k).startswith("persona.")]:
            personas[key.split(".", 1)[1]] = data.pop(key)
        return cls({str(k): v for k, v in data.items()}, dict(personas), source=source)


def load_catalog(path: str | Path | None = None) -> DefinitionCatalog:
    """Load a catalog file, or the bundled defaults when ``path`` is None."""
    if path is None:
        text = resources.files("reqclarify").joinpath("data/definitions.yaml").read_text("utf-8")
        source = "bundled"
    else:
        try:
            text = Path(path).read_text("utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read catalog {path}: {exc}") from exc
        source = str(path)
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed catalog {source}: {exc}") from exc
    return DefinitionCatalog.from_mapping(data or {}, source=source)


_default = None


def default_catalog() -> DefinitionCatalog:
    global _default
    if _default is None:
        _default = load_catalog()
    return _default
