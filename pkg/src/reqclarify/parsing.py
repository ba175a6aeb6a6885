"""Strict parsers for model answers, with one lenient retry.

The grammars: a comma-separated list of quoted items (optionally bracketed),
a bracketed list of quoted 2-tuples, or the "No Defect Found" sentinel.
Items are returned verbatim as slices of the raw text.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

from .exceptions import ParseError, UsageError
from .taxonomy import NO_DEFECT

QUOTES = ('"', "'")
_ITEM_TERMINATORS = ",])"

NO_DEFECT_KIND = "no_defect"
SEGMENTS = "segments"
REASONED = "reasoned"
MISSING = "missing"
UNPARSED = "unparsed"


@dataclass(frozen=True)
class DetectionVerdict:
    kind: str
    items: tuple = ()
    reasons: tuple = ()
    raw: str = ""
    error: str | None = None

    @property
    def no_defect(self) -> bool:
        return self.kind == NO_DEFECT_KIND

    @property
    def pairs(self) -> tuple:
        return tuple(zip(self.reasons, self.items))

    @classmethod
    def unparsed(cls, raw, error="") -> "DetectionVerdict":
        """Scored as an empty prediction that earns no credit for a correct negative."""
        return cls(UNPARSED, raw=raw, error=str(error))


@dataclass(frozen=True)
class CQList:
    questions: tuple
    raw: str = ""


class _Fail(Exception):
    pass


def _at(s, i):
    return s[i] if i < len(s) else ""


def _skip_ws(s, i):
    while i < len(s) and s[i].isspace():
        i += 1
    return i


def _scan_quoted(s, i, terminators):
    """Read a quoted item starting at s[i]; the closing quote is the first one
    followed (after whitespace) by a terminator or the end of input."""
    if i >= len(s) or s[i] not in QUOTES:
        raise _Fail(f"expected a quoted item at offset {i}")
    q = s[i]
    j = i + 1
    while True:
        p = s.find(q, j)
        if p < 0:
            raise _Fail("unterminated quoted item")
        k = _skip_ws(s, p + 1)
        if k == len(s) or s[k] in terminators:
            return s[i + 1:p], k
        j = p + 1


def _is_sentinel(s, prefix=None) -> bool:
    s = s.strip()
    if prefix and s.casefold().startswith(prefix.casefold()):
        s = s[len(prefix):].strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in QUOTES:
        s = s[1:-1].strip()
    s = s.rstrip(".").strip()
    return s.casefold() == NO_DEFECT.casefold()


def _strict_list(s):
    s = s.strip()
    if not s:
        raise _Fail("empty response")
    i = 0
    bracketed = s[0] == "["
    if bracketed:
        i = _skip_ws(s, 1)
        if i < len(s) and s[i] == "]" and _skip_ws(s, i + 1) == len(s):
            return []
    terminators = ",]" if bracketed else ","
    items = []
    while True:
        i = _skip_ws(s, i)
        item, i = _scan_quoted(s, i, terminators)
        items.append(item)
        if i == len(s):
            if bracketed:
                raise _Fail("missing closing bracket")
            return items
        if s[i] == ",":
            i += 1
            continue
        if bracketed and s[i] == "]":
            if _skip_ws(s, i + 1) != len(s):
                raise _Fail("text after closing bracket")
            return items
        raise _Fail(f"unexpected {s[i]!r} at offset {i}")


def _strict_tuples(s):
    s = s.strip()
    if not s.startswith("[") or not s.endswith("]"):
        raise _Fail("expected a bracketed list of tuples")
    i = _skip_ws(s, 1)
    if _at(s, i) == "]":
        return []
    pairs = []
    while True:
        i = _skip_ws(s, i)
        if i >= len(s) or s[i] != "(":
            raise _Fail(f"expected '(' at offset {i}")
        reason, i = _scan_quoted(s, _skip_ws(s, i + 1), ",)")
        if _at(s, i) == ")":
            raise ParseError("tuple has 1 element, expected 2", raw=s)
        if _at(s, i) != ",":
            raise _Fail("unterminated tuple")
        segment, i = _scan_quoted(s, _skip_ws(s, i + 1), ",)")
        if _at(s, i) == ",":
            raise ParseError("tuple has more than 2 elements, expected 2", raw=s)
        if _at(s, i) != ")":
            raise _Fail("unterminated tuple")
        pairs.append((reason, segment))
        i = _skip_ws(s, i + 1)
        if i < len(s) and s[i] == ",":
            i += 1
            continue
        if i < len(s) and s[i] == "]" and _skip_ws(s, i + 1) == len(s):
            return pairs
        raise _Fail(f"unexpected text at offset {i}")


_FENCE = re.compile(r"```[\w-]*[ \t]*\n?(.*?)```", re.DOTALL)
_TRAILING_END = re.compile(r"\s*#\s*END\s*$")
ECHO_SEGMENTS = re.compile(r"^\s*Extracted\b[^\n:]{0,60}?segment\(s\)\s*:", re.IGNORECASE)
ECHO_MISSING = re.compile(r"^\s*Missing Information\s*:", re.IGNORECASE)
ECHO_CQ = re.compile(r"^\s*(Clarifying\s+)?Questions\s*:", re.IGNORECASE)


def _lenient_text(raw, echo):
    s = raw
    fenced = _FENCE.search(s)
    if fenced:
        s = fenced.group(1)
    m = echo.match(s)
    if m:
        s = s[m.end():]
    m = _TRAILING_END.search(s)
    if m:
        s = s[:m.start()]
    return s


def _two_pass(raw, strict, echo):
    try:
        return strict(raw)
    except _Fail as first:
        s = _lenient_text(raw, echo)
        try:
            return strict(s)
        except _Fail:
            raise ParseError(f"unparseable response: {first}", raw=raw) from None


def parse_segment_list(raw: str, lenient: bool = True) -> DetectionVerdict:
    def strict(s):
        if _is_sentinel(s):
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        items = _strict_list(s)
        if not items:
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        return DetectionVerdict(SEGMENTS, tuple(items), raw=raw)

    if not lenient:
        return _strict_only(strict, raw)
    return _two_pass(raw, strict, ECHO_SEGMENTS)


def parse_reasoned_tuples(raw: str, lenient: bool = True) -> DetectionVerdict:
    def strict(s):
        if _is_sentinel(s):
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        pairs = _strict_tuples(s)
        if not pairs:
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        return DetectionVerdict(REASONED, tuple(p[1] for p in pairs),
                                tuple(p[0] for p in pairs), raw=raw)

    if not lenient:
        return _strict_only(strict, raw)
    return _two_pass(raw, strict, ECHO_SEGMENTS)


def parse_missing_info(raw: str, lenient: bool = True) -> DetectionVerdict:
    def strict(s):
        if _is_sentinel(s, prefix="Missing Information:"):
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        items = _strict_list(s)
        if not items:
            return DetectionVerdict(NO_DEFECT_KIND, raw=raw)
        return DetectionVerdict(MISSING, tuple(items), raw=raw)

    def with_bare_words(s):
        try:
            return strict(s)
        except _Fail:
            # bare words only when the comma structure cannot be misread
            if any(c in s for c in "\"'[]()\n") or not s.strip():
                raise
            parts = [p.strip() for p in s.split(",")]
            if not all(parts):
                raise
            return DetectionVerdict(MISSING, tuple(parts), raw=raw)

    if not lenient:
        return _strict_only(strict, raw)
    try:
        return strict(raw)
    except _Fail as first:
        try:
            return with_bare_words(_lenient_text(raw, ECHO_MISSING))
        except _Fail:
            raise ParseError(f"unparseable response: {first}", raw=raw) from None


def parse_cq_list(raw: str, lenient: bool = True) -> CQList:
    def strict(s):
        items = _strict_list(s)
        if not items:
            raise _Fail("empty question list")
        if not all(q.strip() for q in items):
            raise _Fail("blank question")
        return CQList(tuple(items), raw=raw)

    if not lenient:
        return _strict_only(strict, raw)
    return _two_pass(raw, strict, ECHO_CQ)


def _strict_only(strict, raw):
    try:
        return strict(raw)
    except _Fail as exc:
        raise ParseError(f"unparseable response: {exc}", raw=raw) from None


# --- rendering side of the same grammar -----------------------------------

def quote_item(item: str) -> str:
    """Quote ``item`` so that the parsers above read it back unchanged."""
    if not item:
        raise UsageError("cannot render an empty item")
    if _is_sentinel(item) or _is_sentinel(f'"{item}"'):
        raise UsageError(f"item {item!r} collides with the no-defect sentinel")
    for q in QUOTES:
        if _closes_early(item, q):
            continue
        return f"{q}{item}{q}"
    raise UsageError(f"item {item!r} cannot be quoted unambiguously")


def _closes_early(item, q):
    start = 0
    while True:
        p = item.find(q, start)
        if p < 0:
            return False
        rest = item[p + 1:].lstrip()
        if rest and rest[0] in _ITEM_TERMINATORS:
            return True
        start = p + 1


def format_segment_list(items) -> str:
    return ", ".join(quote_item(x) for x in items)


def format_reasoned(pairs) -> str:
    return "[" + ", ".join(f"({quote_item(r)}, {quote_item(s)})" for r, s in pairs) + "]"


def format_missing(items) -> str:
    return "[" + ", ".join(quote_item(x) for x in items) + "]"


format_cq_list = format_segment_list
