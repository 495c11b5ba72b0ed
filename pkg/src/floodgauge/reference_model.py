"""Reference-object heights and the depth-from-waterline calculus.

Every height is measured from the ground in meters. Arithmetic is done in
``decimal`` on the shortest repr of each float, so ``2.9 - 0.45`` comes out as
``2.45`` rather than ``2.4499999999999997``.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Mapping, Union

from .errors import (
    InvalidFraction,
    InvalidObservation,
    InvalidProfile,
    LandmarkOrder,
    UnknownKind,
    UnknownLandmark,
    UnknownProfile,
)
from .estimate import RULE_ENGINE, DepthEstimate

DEFAULT_PROFILE = "appendix1"


class ObjectKind(str, enum.Enum):
    HUMAN_MALE = "HumanMale"
    HUMAN_FEMALE = "HumanFemale"
    SEDAN = "Sedan"
    TRUCK = "Truck"
    SUV = "Suv"
    BUS = "Bus"
    STOP_SIGN = "StopSign"


# Landmark identifiers
GROUND = "Ground"
KNEE = "Knee"
WAIST = "Waist"
SHOULDER = "Shoulder"
HEAD = "Head"
GROUND_CLEARANCE = "GroundClearance"
DOOR_BOTTOM = "DoorBottom"
WINDOW_BOTTOM = "WindowBottom"
HOOD_TOP = "HoodTop"
ROOF = "Roof"
SIGN_BOTTOM = "SignBottom"
SIGN_TOP = "SignTop"


def _dec(x: float) -> Decimal:
    return Decimal(repr(float(x)))


@dataclass(frozen=True)
class LandmarkTable:
    kind: ObjectKind
    landmarks: tuple[tuple[str, float], ...]
    profile_id: str

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectKind(self.kind))
        marks = tuple((str(name), float(h)) for name, h in self.landmarks)
        object.__setattr__(self, "landmarks", marks)
        where = f"{self.profile_id}/{self.kind.value}"
        if not marks or marks[0] != (GROUND, 0.0):
            raise InvalidProfile(f"{where}: first landmark must be ({GROUND}, 0.0)")
        if len(marks) < 2:
            raise InvalidProfile(f"{where}: needs at least one landmark above ground")
        names = [name for name, _ in marks]
        if len(set(names)) != len(names):
            raise InvalidProfile(f"{where}: duplicate landmark names")
        for (lo_name, lo), (hi_name, hi) in zip(marks, marks[1:]):
            if not hi > lo:
                raise InvalidProfile(
                    f"{where}: heights must strictly increase ({lo_name}={lo}, {hi_name}={hi})"
                )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.landmarks)

    @property
    def total_height(self) -> float:
        return self.landmarks[-1][1]

    def height(self, landmark: str) -> float:
        for name, h in self.landmarks:
            if name == landmark:
                return h
        raise UnknownLandmark(
            f"{self.kind.value} has no landmark {landmark!r} "
            f"(profile {self.profile_id}; known: {', '.join(self.names)})"
        )

    def to_list(self) -> list[list]:
        return [[name, h] for name, h in self.landmarks]


@dataclass(frozen=True)
class Profile:
    profile_id: str
    tables: Mapping[ObjectKind, LandmarkTable]

    def table(self, kind: ObjectKind | str) -> LandmarkTable:
        try:
            kind = ObjectKind(kind)
        except ValueError:
            raise UnknownKind(f"unknown object kind {kind!r}") from None
        try:
            return self.tables[kind]
        except KeyError:
            raise UnknownKind(
                f"profile {self.profile_id!r} has no table for {kind.value}"
            ) from None

    def to_dict(self) -> dict:
        return {
            "profile_id": self.profile_id,
            "tables": {k.value: t.to_list() for k, t in self.tables.items()},
        }


def profile_from_dict(data: Mapping) -> Profile:
    """Build a profile from ``{"profile_id": ..., "tables": {kind: [[name, h], ...]}}``.

    A leading ``Ground`` landmark at 0.0 is inserted when a table omits it.
    """
    try:
        profile_id = str(data["profile_id"])
        raw_tables = data["tables"]
    except (KeyError, TypeError) as exc:
        raise InvalidProfile(f"profile data missing field: {exc}") from None
    tables = {}
    for kind_name, marks in raw_tables.items():
        try:
            kind = ObjectKind(kind_name)
        except ValueError:
            raise UnknownKind(f"unknown object kind {kind_name!r}") from None
        marks = [tuple(m) for m in marks]
        if not marks or marks[0][0] != GROUND:
            marks.insert(0, (GROUND, 0.0))
        tables[kind] = LandmarkTable(kind, tuple(marks), profile_id)
    return Profile(profile_id, tables)


def load_profile_file(path: str | Path) -> Profile:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidProfile(f"{path}: {exc}") from None
    return profile_from_dict(data)


def _builtin(profile_id: str, tables: dict[ObjectKind, list[tuple[str, float]]]) -> Profile:
    return Profile(
        profile_id,
        {kind: LandmarkTable(kind, ((GROUND, 0.0), *marks), profile_id) for kind, marks in tables.items()},
    )


# Heights as written in the deployed estimation prompt.
APPENDIX1 = _builtin(
    "appendix1",
    {
        ObjectKind.HUMAN_MALE: [(KNEE, 0.4), (WAIST, 0.9), (SHOULDER, 1.4), (HEAD, 1.75)],
        ObjectKind.HUMAN_FEMALE: [(KNEE, 0.4), (WAIST, 0.8), (SHOULDER, 1.4), (HEAD, 1.60)],
        ObjectKind.SEDAN: [
            (GROUND_CLEARANCE, 0.2),
            (DOOR_BOTTOM, 0.6),
            (WINDOW_BOTTOM, 0.8),
            (HOOD_TOP, 1.0),
            (ROOF, 1.4),
        ],
        ObjectKind.TRUCK: [
            (GROUND_CLEARANCE, 0.5),
            (DOOR_BOTTOM, 0.8),
            (HOOD_TOP, 1.3),
            (WINDOW_BOTTOM, 1.4),
            (ROOF, 1.8),
        ],
        ObjectKind.SUV: [(GROUND_CLEARANCE, 0.3), (DOOR_BOTTOM, 0.7), (HOOD_TOP, 1.0), (ROOF, 1.7)],
        ObjectKind.BUS: [(GROUND_CLEARANCE, 0.7), (DOOR_BOTTOM, 1.0), (WINDOW_BOTTOM, 2.0), (ROOF, 3.2)],
        ObjectKind.STOP_SIGN: [(SIGN_BOTTOM, 2.0), (SIGN_TOP, 2.9)],
    },
)

# Heights from the published reference tables. No SUV row exists there.
# Ride height maps to DoorBottom; windshield height maps to HoodTop for cars
# and trucks and to WindowBottom for the bus, matching the prompt's values.
TABLES = _builtin(
    "tables",
    {
        ObjectKind.HUMAN_MALE: [(KNEE, 0.4), (WAIST, 0.9), (SHOULDER, 1.4), (HEAD, 1.75)],
        ObjectKind.HUMAN_FEMALE: [(KNEE, 0.4), (WAIST, 0.8), (SHOULDER, 1.3), (HEAD, 1.60)],
        ObjectKind.SEDAN: [(GROUND_CLEARANCE, 0.2), (DOOR_BOTTOM, 0.6), (HOOD_TOP, 1.0), (ROOF, 1.4)],
        ObjectKind.TRUCK: [(GROUND_CLEARANCE, 0.5), (DOOR_BOTTOM, 0.8), (HOOD_TOP, 1.3), (ROOF, 1.8)],
        ObjectKind.BUS: [(GROUND_CLEARANCE, 0.7), (DOOR_BOTTOM, 1.0), (WINDOW_BOTTOM, 2.0), (ROOF, 3.2)],
        ObjectKind.STOP_SIGN: [(SIGN_BOTTOM, 2.0), (SIGN_TOP, 2.9)],
    },
)

BUILTIN_PROFILES: dict[str, Profile] = {p.profile_id: p for p in (APPENDIX1, TABLES)}

ProfileLike = Union[str, Profile]


def get_profile(profile: ProfileLike = DEFAULT_PROFILE) -> Profile:
    if isinstance(profile, Profile):
        return profile
    try:
        return BUILTIN_PROFILES[profile]
    except KeyError:
        raise UnknownProfile(
            f"unknown profile {profile!r} (built in: {', '.join(BUILTIN_PROFILES)})"
        ) from None


def landmark_table(kind: ObjectKind | str, profile: ProfileLike = DEFAULT_PROFILE) -> LandmarkTable:
    return get_profile(profile).table(kind)


def depth_at_landmark(
    kind: ObjectKind | str, landmark: str, profile: ProfileLike = DEFAULT_PROFILE
) -> float:
    return landmark_table(kind, profile).height(landmark)


def depth_between(
    kind: ObjectKind | str,
    lower: str,
    upper: str,
    fraction: float,
    profile: ProfileLike = DEFAULT_PROFILE,
) -> float:
    """Height a given fraction of the way from ``lower`` up to ``upper``."""
    table = landmark_table(kind, profile)
    h_lo, h_hi = table.height(lower), table.height(upper)
    if not 0.0 <= fraction <= 1.0:
        raise InvalidFraction(f"fraction must lie in [0, 1], got {fraction}")
    if not h_lo < h_hi:
        raise LandmarkOrder(f"{lower} ({h_lo} m) is not below {upper} ({h_hi} m)")
    lo, hi = _dec(h_lo), _dec(h_hi)
    return float(lo + _dec(fraction) * (hi - lo))


@dataclass(frozen=True)
class AtLandmark:
    landmark: str


@dataclass(frozen=True)
class Between:
    lower: str
    upper: str
    fraction: float

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise InvalidFraction(f"fraction must lie in [0, 1], got {self.fraction}")


@dataclass(frozen=True)
class SubmergedFromTop:
    exposed_m: float

    def __post_init__(self):
        if not self.exposed_m >= 0.0:
            raise InvalidObservation(f"exposed height must be >= 0, got {self.exposed_m}")


WaterlineSpec = Union[AtLandmark, Between, SubmergedFromTop]


@dataclass(frozen=True)
class WaterlineObservation:
    """Where the water surface sits on one reference object."""

    kind: ObjectKind
    spec: WaterlineSpec

    def __post_init__(self):
        object.__setattr__(self, "kind", ObjectKind(self.kind))


def depth_from_observation(
    obs: WaterlineObservation, profile: ProfileLike = DEFAULT_PROFILE
) -> DepthEstimate:
    table = landmark_table(obs.kind, profile)
    kind = obs.kind.value
    spec = obs.spec
    if isinstance(spec, AtLandmark):
        value = depth_at_landmark(obs.kind, spec.landmark, profile)
        rationale = f"Waterline at {kind} {spec.landmark} ({value:.2f} m above ground)."
    elif isinstance(spec, Between):
        value = depth_between(obs.kind, spec.lower, spec.upper, spec.fraction, profile)
        rationale = (
            f"Waterline {spec.fraction:g} of the way from {kind} {spec.lower} "
            f"({table.height(spec.lower):.2f} m) to {spec.upper} "
            f"({table.height(spec.upper):.2f} m): {value:.2f} m."
        )
    elif isinstance(spec, SubmergedFromTop):
        total = table.total_height
        if spec.exposed_m > total:
            raise InvalidObservation(
                f"exposed height {spec.exposed_m} m exceeds {kind} total height {total} m"
            )
        value = float(_dec(total) - _dec(spec.exposed_m))
        top = table.landmarks[-1][0]
        rationale = (
            f"{kind} {top} at {total:.2f} m with {spec.exposed_m:.2f} m exposed above water: "
            f"{total:.2f} - {spec.exposed_m:.2f} = {value:.2f} m."
        )
    else:
        raise InvalidObservation(f"unsupported waterline spec {spec!r}")
    return DepthEstimate(value_m=value, rationale=rationale, source=RULE_ENGINE)
