"""Pull the concluding floodwater depth out of a model's free-text answer.

A *depth statement* is a number followed by a length unit, inside a sentence
that mentions depth, floodwater or the water level. Model answers reason
through several landmark heights before committing to a number, so the last
statement in the text is taken as the answer.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from decimal import Decimal

from .errors import NoDepthFound, UnknownUnit
from .estimate import LOW_PLAUSIBILITY_ABOVE_M, DepthEstimate, Flag

_METER_UNITS = {"m", "meter", "meters", "metre", "metres"}
_CENTIMETER_UNITS = {"cm", "centimeter", "centimeters", "centimetre", "centimetres"}

_NUM = r"(?<![\w.,])(\d+(?:\.\d+)?)(?!,\d)"
_UNIT = r"(centimet(?:er|re)s?|cm|met(?:er|re)s?|m)(?![\w])"
_SINGLE_RE = re.compile(_NUM + r"\s*" + _UNIT, re.IGNORECASE)
_INTERVAL_RE = re.compile(
    r"(?:between\s+" + _NUM + r"(?:\s*" + _UNIT + r")?\s+and\s+" + _NUM + r"\s*" + _UNIT
    + r"|from\s+" + _NUM + r"(?:\s*" + _UNIT + r")?\s+to\s+" + _NUM + r"\s*" + _UNIT
    + r"|" + _NUM + r"(?:\s*" + _UNIT + r")?(?:\s*–\s*|-|\s+to\s+)" + _NUM + r"\s*" + _UNIT + r")",
    re.IGNORECASE,
)
_KEYWORD_RE = re.compile(r"\b(?:depth|floodwaters?|flood\s+water|water\s+level)\b", re.IGNORECASE)
# "0.15 meters (15 centimeters)" restates one quantity; the bracketed part is not a new statement.
_RESTATEMENT_GAP = re.compile(r"^\s*\(\s*(?:i\.e\.,?\s*|or\s+|about\s+|approximately\s+|~\s*)?$", re.IGNORECASE)


def normalize_unit(value: float, unit: str) -> float:
    """Convert ``value`` in ``unit`` to meters; centimeters scale by exactly 0.01."""
    u = unit.strip().lower()
    if u in _METER_UNITS:
        return float(value)
    if u in _CENTIMETER_UNITS:
        return float(Decimal(repr(float(value))) * Decimal("0.01"))
    raise UnknownUnit(f"unknown length unit {unit!r}")


def _to_meters(number: str, unit: str) -> tuple[float, bool]:
    u = unit.lower()
    if u in _CENTIMETER_UNITS:
        return float(Decimal(number) * Decimal("0.01")), True
    return normalize_unit(float(number), u), False


@dataclass(frozen=True)
class DepthStatement:
    value_m: float
    start: int
    end: int
    sentence: str
    converted: bool = False
    interval: tuple[float, float] | None = None


def split_sentences(text: str) -> list[str]:
    # A paragraph break followed by a lowercase word is a wrapped line, not a new sentence.
    text = re.sub(r"\n\s*\n(?=[ \t]*[a-z])", " ", text)
    pieces = re.split(r"(?<=[.!?])\s+|\n+", text)
    return [p.strip() for p in pieces if p and p.strip()]


def _sentence_statements(sentence: str) -> list[DepthStatement]:
    found: list[DepthStatement] = []
    taken: list[tuple[int, int]] = []
    for m in _INTERVAL_RE.finditer(sentence):
        g = [x for x in m.groups()]
        # three alternatives, four groups each: (a, unit_a, b, unit_b)
        for i in range(0, 12, 4):
            if g[i] is not None:
                a, ua, b, ub = g[i : i + 4]
                break
        va, ca = _to_meters(a, ua or ub)
        vb, cb = _to_meters(b, ub)
        lo, hi = min(va, vb), max(va, vb)
        found.append(
            DepthStatement((lo + hi) / 2, m.start(), m.end(), sentence, ca or cb, (lo, hi))
        )
        taken.append(m.span())
    for m in _SINGLE_RE.finditer(sentence):
        if any(s <= m.start() < e for s, e in taken):
            continue
        value, converted = _to_meters(m.group(1), m.group(2))
        found.append(DepthStatement(value, m.start(), m.end(), sentence, converted))
    found.sort(key=lambda s: s.start)

    kept: list[DepthStatement] = []
    for st in found:
        if kept and _RESTATEMENT_GAP.match(sentence[kept[-1].end : st.start]):
            continue
        kept.append(st)
    return kept


def depth_statements(text: str) -> list[DepthStatement]:
    """All depth statements in ``text``, in reading order."""
    out: list[DepthStatement] = []
    for sentence in split_sentences(text):
        if _KEYWORD_RE.search(sentence):
            out.extend(_sentence_statements(sentence))
    return out


def parse_depth(text: str, source: str = "unknown") -> DepthEstimate:
    if not text or not text.strip():
        raise NoDepthFound("empty response text")
    statements = depth_statements(text)
    if not statements:
        raise NoDepthFound("no depth statement with a length unit found in response")
    last = statements[-1]
    flags = set()
    if last.interval is not None:
        flags.add(Flag.RANGE_COLLAPSED)
    if last.converted:
        flags.add(Flag.UNIT_CONVERTED)
    if len(statements) > 1:
        flags.add(Flag.MULTIPLE_CANDIDATES)
    if last.value_m > LOW_PLAUSIBILITY_ABOVE_M:
        flags.add(Flag.LOW_PLAUSIBILITY)
    # DepthEstimate rejects values outside the plausible band with ImplausibleDepth.
    return DepthEstimate(value_m=last.value_m, rationale=text.strip(), source=source, flags=frozenset(flags))
