import json
from decimal import Decimal

import pytest
from hypothesis import given
from hypothesis import strategies as st

from floodgauge.errors import (
    InvalidFraction,
    InvalidObservation,
    InvalidProfile,
    LandmarkOrder,
    UnknownKind,
    UnknownLandmark,
    UnknownProfile,
)
from floodgauge.estimate import RULE_ENGINE
from floodgauge.reference_model import (
    BUILTIN_PROFILES,
    AtLandmark,
    Between,
    LandmarkTable,
    ObjectKind,
    SubmergedFromTop,
    WaterlineObservation,
    depth_at_landmark,
    depth_between,
    depth_from_observation,
    landmark_table,
    load_profile_file,
    profile_from_dict,
)

ALL_TABLES = [t for p in BUILTIN_PROFILES.values() for t in p.tables.values()]


def test_male_table_appendix1():
    table = landmark_table(ObjectKind.HUMAN_MALE, "appendix1")
    assert table.landmarks == (
        ("Ground", 0.0),
        ("Knee", 0.4),
        ("Waist", 0.9),
        ("Shoulder", 1.4),
        ("Head", 1.75),
    )


def test_bus_table_landmarks():
    table = landmark_table("Bus")
    for name, h in [("GroundClearance", 0.7), ("DoorBottom", 1.0), ("WindowBottom", 2.0), ("Roof", 3.2)]:
        assert table.height(name) == h
    assert table.total_height == 3.2


def test_stop_sign_table():
    assert landmark_table(ObjectKind.STOP_SIGN).landmarks == (("Ground", 0.0), ("SignBottom", 2.0), ("SignTop", 2.9))


def test_every_kind_in_default_profile():
    assert set(BUILTIN_PROFILES["appendix1"].tables) == set(ObjectKind)


def test_profiles_disagree_on_female_shoulder():
    assert depth_at_landmark("HumanFemale", "Shoulder", "appendix1") == 1.4
    assert depth_at_landmark("HumanFemale", "Shoulder", "tables") == 1.3


def test_tables_profile_has_no_suv():
    with pytest.raises(UnknownKind):
        landmark_table(ObjectKind.SUV, "tables")


def test_unknown_profile():
    with pytest.raises(UnknownProfile):
        landmark_table(ObjectKind.BUS, "nope")


@pytest.mark.parametrize(
    "kind, landmark, expected",
    [("HumanFemale", "Knee", 0.4), ("Sedan", "Ground", 0.0), ("Truck", "HoodTop", 1.3)],
)
def test_depth_at_landmark(kind, landmark, expected):
    assert depth_at_landmark(kind, landmark) == expected


def test_unknown_landmark():
    with pytest.raises(UnknownLandmark):
        depth_at_landmark("StopSign", "Knee")


@pytest.mark.parametrize(
    "kind, lower, upper, fraction, expected",
    [
        ("HumanFemale", "Knee", "Waist", 0.5, 0.6),
        ("Sedan", "Ground", "DoorBottom", 0.5, 0.3),
        ("Bus", "GroundClearance", "DoorBottom", 0.0, 0.7),
    ],
)
def test_depth_between(kind, lower, upper, fraction, expected):
    assert depth_between(kind, lower, upper, fraction) == expected


def test_depth_between_errors():
    with pytest.raises(InvalidFraction):
        depth_between("Bus", "Ground", "Roof", 1.5)
    with pytest.raises(LandmarkOrder):
        depth_between("Bus", "Roof", "Ground", 0.5)
    with pytest.raises(LandmarkOrder):
        depth_between("Bus", "Roof", "Roof", 0.5)
    with pytest.raises(UnknownLandmark):
        depth_between("Bus", "Ground", "Knee", 0.5)


def test_submerged_from_top_stop_sign():
    est = depth_from_observation(WaterlineObservation(ObjectKind.STOP_SIGN, SubmergedFromTop(0.45)))
    assert est.value_m == 2.45
    assert est.source == RULE_ENGINE
    assert "2.90 - 0.45 = 2.45" in est.rationale


def test_submerged_fully_exposed_is_dry():
    est = depth_from_observation(WaterlineObservation("StopSign", SubmergedFromTop(2.9)))
    assert est.value_m == 0.0


def test_at_landmark_truck_ground_clearance():
    est = depth_from_observation(WaterlineObservation("Truck", AtLandmark("GroundClearance")))
    assert est.value_m == 0.5
    assert "GroundClearance" in est.rationale


def test_between_rationale_names_landmarks():
    est = depth_from_observation(WaterlineObservation("HumanFemale", Between("Knee", "Waist", 0.5)))
    assert est.value_m == 0.6
    assert "Knee" in est.rationale and "Waist" in est.rationale


def test_observation_errors():
    with pytest.raises(InvalidObservation):
        depth_from_observation(WaterlineObservation("StopSign", SubmergedFromTop(3.0)))
    with pytest.raises(InvalidObservation):
        SubmergedFromTop(-0.1)
    with pytest.raises(InvalidFraction):
        Between("Knee", "Waist", -0.1)
    with pytest.raises(UnknownLandmark):
        depth_from_observation(WaterlineObservation("Sedan", AtLandmark("Knee")))


def test_table_invariants_enforced():
    with pytest.raises(InvalidProfile):
        LandmarkTable(ObjectKind.BUS, (("Ground", 0.0), ("A", 1.0), ("B", 1.0)), "x")
    with pytest.raises(InvalidProfile):
        LandmarkTable(ObjectKind.BUS, (("A", 1.0), ("B", 2.0)), "x")


def test_profile_file_round_trip(tmp_path):
    data = {"profile_id": "regional", "tables": {"Sedan": [["GroundClearance", 0.15], ["Roof", 1.45]]}}
    path = tmp_path / "regional.json"
    path.write_text(json.dumps(data))
    profile = load_profile_file(path)
    assert profile.profile_id == "regional"
    assert profile.table("Sedan").landmarks[0] == ("Ground", 0.0)
    assert depth_at_landmark("Sedan", "Roof", profile) == 1.45
    assert profile_from_dict(profile.to_dict()) == profile


def test_profile_file_rejects_bad_kind(tmp_path):
    with pytest.raises(UnknownKind):
        profile_from_dict({"profile_id": "x", "tables": {"Boat": [["Deck", 1.0]]}})


# ---- invariants over every built-in table ----


@pytest.mark.parametrize("table", ALL_TABLES, ids=lambda t: f"{t.profile_id}-{t.kind.value}")
def test_tables_start_at_ground_and_strictly_increase(table):
    heights = [h for _, h in table.landmarks]
    assert table.landmarks[0] == ("Ground", 0.0)
    assert all(b > a for a, b in zip(heights, heights[1:]))
    assert table.total_height == heights[-1]


def _table_and_pair():
    return st.sampled_from(ALL_TABLES).flatmap(
        lambda t: st.tuples(
            st.just(t),
            st.lists(st.sampled_from(t.names), min_size=2, max_size=2, unique=True).map(
                lambda ab: sorted(ab, key=t.height)
            ),
        )
    )


@given(_table_and_pair())
def test_interpolation_endpoints_exact(tp):
    table, (a, b) = tp
    assert depth_between(table.kind, a, b, 0.0, table.profile_id) == table.height(a)
    assert depth_between(table.kind, a, b, 1.0, table.profile_id) == table.height(b)


@given(_table_and_pair(), st.floats(0, 1), st.floats(0, 1))
def test_interpolation_monotone_and_bounded(tp, f1, f2):
    table, (a, b) = tp
    lo, hi = sorted((f1, f2))
    d_lo = depth_between(table.kind, a, b, lo, table.profile_id)
    d_hi = depth_between(table.kind, a, b, hi, table.profile_id)
    assert d_lo <= d_hi
    assert table.height(a) <= d_lo <= d_hi <= table.height(b)


@given(st.sampled_from(ALL_TABLES), st.data())
def test_submerged_complement_exact_on_centimetre_grid(table, data):
    total_cm = int(Decimal(repr(table.total_height)) * 100)
    exposed = data.draw(st.integers(0, total_cm)) / 100
    est = depth_from_observation(WaterlineObservation(table.kind, SubmergedFromTop(exposed)), table.profile_id)
    assert Decimal(repr(est.value_m)) + Decimal(repr(exposed)) == Decimal(repr(table.total_height))
    assert 0.0 <= est.value_m <= table.total_height


@given(st.sampled_from(ALL_TABLES), st.floats(0, 1))
def test_submerged_complement_any_float(table, frac):
    exposed = frac * table.total_height
    est = depth_from_observation(WaterlineObservation(table.kind, SubmergedFromTop(exposed)), table.profile_id)
    assert est.value_m + exposed == pytest.approx(table.total_height, abs=1e-12)
    assert 0.0 <= est.value_m <= table.total_height


@given(st.sampled_from(ALL_TABLES), st.data())
def test_observation_depths_within_object(table, data):
    name = data.draw(st.sampled_from(table.names))
    est = depth_from_observation(WaterlineObservation(table.kind, AtLandmark(name)), table.profile_id)
    assert 0.0 <= est.value_m <= table.total_height
