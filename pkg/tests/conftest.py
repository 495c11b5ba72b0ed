from __future__ import annotations

import shutil
import threading
import time
from pathlib import Path

import pytest

from floodgauge.lmm_client import LmmRequest, ModelConfig

FIXTURES = Path(__file__).parent / "fixtures"
RESPONSES = FIXTURES / "responses"
IMAGES = FIXTURES / "images"
REPLAY = FIXTURES / "replay"
MANIFEST = FIXTURES / "replay_manifest.csv"
MODEL_ID = "gpt-4-vision"

# Concluding depth stated in each recorded response, in file order.
RESPONSE_DEPTHS = {
    "01_sedan_half_wheel": 0.3,
    "02_stop_sign_submerged": 2.45,
    "03_truck_below_door": 0.4,
    "04_rescuers_above_waist": 1.0,
    "05_men_below_knee": 0.15,
    "06_person_below_knee": 0.35,
    "07_person_at_knee": 0.4,
    "08_bus_above_clearance": 0.75,
    "09_pickup_half_wheel": 0.6,
    "10_rescue_truck_hood": 1.3,
    "11_person_mid_thigh": 0.6,
    "12_speed_sign_pole": 2.0,
}


class InstrumentedProvider:
    """Counts calls and tracks the peak number of concurrent calls."""

    def __init__(self, reply="The estimated floodwater depth is 0.5 meters.", delay=0.0):
        self.reply = reply
        self.delay = delay
        self.calls: list[LmmRequest] = []
        self.in_flight = 0
        self.peak = 0
        self._lock = threading.Lock()

    def complete(self, request: LmmRequest, cfg: ModelConfig) -> str:
        with self._lock:
            self.calls.append(request)
            self.in_flight += 1
            self.peak = max(self.peak, self.in_flight)
        try:
            if self.delay:
                time.sleep(self.delay)
            return self.reply(request) if callable(self.reply) else self.reply
        finally:
            with self._lock:
                self.in_flight -= 1


@pytest.fixture
def instrumented():
    return InstrumentedProvider()


@pytest.fixture
def workspace(tmp_path):
    """A writable copy of the fixture tree (images, manifest, replay dir)."""
    dest = tmp_path / "fixtures"
    shutil.copytree(FIXTURES, dest, ignore=shutil.ignore_patterns("__pycache__"))
    return dest


def png_bytes(size=(8, 6), color=(10, 20, 30)) -> bytes:
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, format="PNG")
    return buf.getvalue()


# ---- acceptance summary: one PASS/FAIL line per criterion ----

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    if call.when == "setup" and call.excinfo is not None:
        _criteria[item.nodeid] = (name, "FAIL")
    elif call.when == "call":
        _criteria[item.nodeid] = (name, "FAIL" if call.excinfo is not None else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _criteria.values():
        terminalreporter.write_line(f"{status}  {name}")
