"""Regenerate the replay fixtures from the recorded response texts.

Run from the repository root after a deliberate prompt change:

    python tests/fixtures/build_fixtures.py
"""
from __future__ import annotations

import sys
from pathlib import Path

from PIL import Image

from floodgauge.lmm_client import content_hash, record_fixture
from floodgauge.prompt_builder import build_prompt

HERE = Path(__file__).resolve().parent
TEXTS = HERE / "responses"
IMAGES = HERE / "images"
REPLAY = HERE / "replay"
MODEL_ID = "gpt-4-vision"


def ensure_images() -> list[Path]:
    IMAGES.mkdir(exist_ok=True)
    out = []
    for i, text in enumerate(sorted(TEXTS.glob("*.txt"))):
        path = IMAGES / f"{text.stem}.png"
        if not path.exists():
            # distinct solid colours so every image hashes differently
            Image.new("RGB", (16, 12), (20 * i, 255 - 20 * i, 90)).save(path, format="PNG")
        out.append(path)
    return out


def build(replay_dir: Path = REPLAY) -> None:
    prompt = build_prompt("appendix1")
    for image in ensure_images():
        text = (TEXTS / f"{image.stem}.txt").read_text(encoding="utf-8")
        record_fixture(replay_dir, content_hash(image.read_bytes()), prompt.checksum, MODEL_ID, text, label=image.stem)


if __name__ == "__main__":
    build(Path(sys.argv[1]) if len(sys.argv) > 1 else REPLAY)
