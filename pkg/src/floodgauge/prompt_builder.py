"""Render the estimation prompt from a landmark profile.

The wording of each object section is fixed; only the heights come from the
profile, so the prompt and the rule engine can never disagree on a number.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from decimal import Decimal

from .reference_model import (
    DEFAULT_PROFILE,
    DOOR_BOTTOM,
    GROUND,
    GROUND_CLEARANCE,
    HEAD,
    HOOD_TOP,
    KNEE,
    ROOF,
    SHOULDER,
    SIGN_BOTTOM,
    SIGN_TOP,
    WAIST,
    WINDOW_BOTTOM,
    LandmarkTable,
    ObjectKind,
    ProfileLike,
    get_profile,
)

INTRO = (
    "- Flood related photos will be an input. Estimate the floodwater depth based on "
    "visible reference points in this image. In estimating the flood water depth, "
    "consider the following height metrics for common features:"
)
CLOSING = (
    "- Based on the water height against the different parts of each features, and the "
    "average height metrics, estimate the depth of the water.",
    "- Provide the estimated floodwater depth in meters.",
    "- Give estimation as a discrete number and not interval.",
)
REFLECTION_CAVEAT = "Avoid the reflection of the stop sign in the water."


def format_height(h: float, min_places: int = 1) -> str:
    """Shortest exact decimal rendering of ``h`` with at least ``min_places`` decimals."""
    d = Decimal(repr(float(h)))
    places = max(min_places, -d.as_tuple().exponent)
    return f"{d:.{places}f}"


def _humanize(name: str) -> str:
    return re.sub(r"(?<!^)(?=[A-Z])", " ", name).lower()


# (landmark, label, min decimal places)
_HUMAN_MALE = [(HEAD, "Total height", 2), (KNEE, "Knee height", 1), (WAIST, "Waist height", 1), (SHOULDER, "Shoulder height", 1)]
_HUMAN_FEMALE = [(HEAD, "Total height", 2), (KNEE, "Knee height", 1), (WAIST, "waist height", 1), (SHOULDER, "Shoulder height", 1)]


def _human_metrics(table: LandmarkTable, labels) -> str:
    known = {lm for lm, _, _ in labels}
    parts = [
        f"{label} = {format_height(table.height(lm), places)}m"
        for lm, label, places in labels
        if lm in table.names
    ]
    parts += [
        f"{_humanize(name).capitalize()} height = {format_height(h)}m"
        for name, h in table.landmarks
        if name != GROUND and name not in known
    ]
    return ", ".join(parts)


def _human_section(profile) -> str | None:
    groups = []
    if ObjectKind.HUMAN_MALE in profile.tables:
        groups.append("Men " + _human_metrics(profile.tables[ObjectKind.HUMAN_MALE], _HUMAN_MALE))
    if ObjectKind.HUMAN_FEMALE in profile.tables:
        groups.append("Women: " + _human_metrics(profile.tables[ObjectKind.HUMAN_FEMALE], _HUMAN_FEMALE))
    if not groups:
        return None
    return " - For human, consider these height metrics: " + "; ".join(groups) + "."


_ROOF = (ROOF, "the overall height from the ground to the roof is")
_DOOR = (DOOR_BOTTOM, "the height from the ground to the bottom of the door is")
_HOOD = (HOOD_TOP, "the height from the ground to the top of the hood is")
_WINDOW = (WINDOW_BOTTOM, "the height from the ground to the bottom of the window is")

# kind -> (heading, phrases in render order, unit style, join last with "and")
_VEHICLES = {
    ObjectKind.SEDAN: (
        "For sedan cars",
        [
            _ROOF,
            (GROUND_CLEARANCE, "the ground clearance is approximately"),
            (DOOR_BOTTOM, "height from ground to the bottom of the door is"),
            (HOOD_TOP, "height from the ground to the top of the hood is"),
            _WINDOW,
        ],
        "short",
        True,
    ),
    ObjectKind.TRUCK: (
        "For a truck car",
        [_ROOF, (GROUND_CLEARANCE, "the ground clearance is approximately"), _DOOR, _HOOD, _WINDOW],
        "long",
        False,
    ),
    ObjectKind.SUV: (
        "For a SUV car",
        [_ROOF, (GROUND_CLEARANCE, "the ground clearance is about"), _DOOR, _HOOD],
        "long",
        False,
    ),
    ObjectKind.BUS: (
        "For a bus",
        [_ROOF, (GROUND_CLEARANCE, "the ground clearance is approximately"), _DOOR, _WINDOW],
        "long",
        False,
    ),
}


def _with_unit(h: float, style: str) -> str:
    text = format_height(h)
    if style == "short":
        return text + "m"
    return text + (" meter" if Decimal(text) == 1 else " meters")


def _vehicle_section(kind: ObjectKind, table: LandmarkTable) -> str:
    heading, phrases, style, oxford = _VEHICLES[kind]
    known = {lm for lm, _ in phrases}
    clauses = [f"{text} {_with_unit(table.height(lm), style)}" for lm, text in phrases if lm in table.names]
    clauses += [
        f"the height from the ground to the {_humanize(name)} is {_with_unit(h, style)}"
        for name, h in table.landmarks
        if name != GROUND and name not in known
    ]
    if oxford and len(clauses) > 1:
        clauses[-1] = "and " + clauses[-1]
    return f" - {heading}, consider these height metrics: " + ", ".join(clauses) + "."


def _signage_section(table: LandmarkTable) -> str:
    top = table.total_height
    if SIGN_TOP in table.names and SIGN_BOTTOM in table.names:
        plaque = format_height(float(Decimal(repr(table.height(SIGN_TOP))) - Decimal(repr(table.height(SIGN_BOTTOM)))))
        dims = f"the dimension of a stop sign (the sign is a red octagon) is {plaque}m by {plaque}m, while "
    else:
        dims = ""
    extra = "".join(
        f" The height from the ground to the {_humanize(name)} is {format_height(h)}m."
        for name, h in table.landmarks
        if name not in (GROUND, SIGN_BOTTOM, SIGN_TOP)
    )
    return (
        " - For street signage (including stop signs), "
        + dims
        + "the vertical measurement from ground to the top of the stop sign, indicating the total "
        f"height of the stop sign plaque including the pole is {format_height(top)}m.{extra} "
        + REFLECTION_CAVEAT
        + " Also, use any other features as a secondary reference."
    )


@dataclass(frozen=True)
class PromptTemplate:
    sections: tuple[str, ...]
    profile_id: str
    checksum: str

    @property
    def text(self) -> str:
        return render_sections(self.sections)


def render_sections(sections) -> str:
    return "\n".join(sections) + "\n"


def prompt_checksum(t: PromptTemplate) -> str:
    """sha256 hex digest of the rendered prompt bytes."""
    return hashlib.sha256(render_sections(t.sections).encode("utf-8")).hexdigest()


def build_prompt(profile: ProfileLike = DEFAULT_PROFILE) -> PromptTemplate:
    prof = get_profile(profile)
    sections = [INTRO]
    human = _human_section(prof)
    if human:
        sections.append(human)
    for kind in _VEHICLES:
        if kind in prof.tables:
            sections.append(_vehicle_section(kind, prof.tables[kind]))
    if ObjectKind.STOP_SIGN in prof.tables:
        sections.append(_signage_section(prof.tables[ObjectKind.STOP_SIGN]))
    sections.extend(CLOSING)
    sections = tuple(sections)
    digest = hashlib.sha256(render_sections(sections).encode("utf-8")).hexdigest()
    return PromptTemplate(sections=sections, profile_id=prof.profile_id, checksum=digest)
