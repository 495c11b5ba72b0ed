"""Photo manifests, the append-only run log, and GeoJSON export.

File formats are documented in docs/formats.md.
"""
from __future__ import annotations

import csv
import json
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

from filelock import FileLock

from .errors import (
    DuplicatePhotoId,
    DuplicateRunId,
    InvalidCoordinate,
    ManifestParseError,
    MissingRun,
    StorageFailure,
)
from .estimate import DepthEstimate
from .evaluation import AnnotationSet

log = logging.getLogger(__name__)

BASE_COLUMNS = ("photo_id", "path", "lat", "lon", "source_url", "notes")
ANNOTATOR_COLUMN = re.compile(r"^m\d+$")
RUN_SCHEMA = "floodgauge.run/1"


@dataclass(frozen=True)
class PhotoRecord:
    photo_id: str
    path: str
    annotations: AnnotationSet
    lat: float | None = None
    lon: float | None = None
    source_url: str | None = None
    image_hash: str | None = None

    @property
    def has_coordinates(self) -> bool:
        return self.lat is not None and self.lon is not None


def _parse_coord(raw: Any, name: str, limit: float, where: str) -> float | None:
    if raw is None or (isinstance(raw, str) and not raw.strip()):
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InvalidCoordinate(f"{where}: {name} {raw!r} is not a number") from None
    if not -limit <= value <= limit:
        raise InvalidCoordinate(f"{where}: {name} {value} outside [-{limit:g}, {limit:g}]")
    return value


def _parse_depth_cell(raw: Any, column: str, where: str) -> float | None:
    if raw is None or (isinstance(raw, str) and not raw.strip()):
        return None
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ManifestParseError(f"{where}: annotator {column} value {raw!r} is not a number") from None
    if not value >= 0:
        raise ManifestParseError(f"{where}: annotator {column} depth {value} is negative")
    return value


def _make_record(row: dict, annotators: dict, where: str) -> PhotoRecord:
    photo_id = (row.get("photo_id") or "").strip()
    if not photo_id:
        raise ManifestParseError(f"{where}: empty photo_id")
    path = (row.get("path") or "").strip()
    if not path:
        raise ManifestParseError(f"{where}: photo {photo_id} has no path")
    lat = _parse_coord(row.get("lat"), "lat", 90.0, where)
    lon = _parse_coord(row.get("lon"), "lon", 180.0, where)
    if (lat is None) != (lon is None):
        raise InvalidCoordinate(f"{where}: lat and lon must be given together")
    depths = []
    for column, raw in annotators.items():
        value = _parse_depth_cell(raw, column, where)
        if value is not None:
            depths.append((column, value))
    notes = (row.get("notes") or "").strip() or None
    return PhotoRecord(
        photo_id=photo_id,
        path=path,
        annotations=AnnotationSet(photo_id, tuple(depths), notes),
        lat=lat,
        lon=lon,
        source_url=(row.get("source_url") or "").strip() or None,
    )


def _check_unique(records_with_where: Iterable[tuple[PhotoRecord, str]]) -> list[PhotoRecord]:
    seen: dict[str, str] = {}
    out = []
    for rec, where in records_with_where:
        if rec.photo_id in seen:
            raise DuplicatePhotoId(f"duplicate photo_id {rec.photo_id!r} at {seen[rec.photo_id]} and {where}")
        seen[rec.photo_id] = where
        out.append(rec)
    return out


def _load_csv(path: Path) -> list[PhotoRecord]:
    delimiter = "\t" if path.suffix.lower() in (".tsv", ".tab") else ","
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        header = reader.fieldnames
        if not header:
            return []
        header = [h.strip() for h in header]
        reader.fieldnames = header
        for col in ("photo_id", "path"):
            if col not in header:
                raise ManifestParseError(f"{path}:1: missing required column {col!r}")
        unknown = [h for h in header if h not in BASE_COLUMNS and not ANNOTATOR_COLUMN.match(h)]
        if unknown:
            raise ManifestParseError(f"{path}:1: unknown columns {unknown}")
        annotator_cols = [h for h in header if ANNOTATOR_COLUMN.match(h)]

        def rows():
            for row in reader:
                where = f"{path}:{reader.line_num}"
                if None in row:
                    raise ManifestParseError(f"{where}: more cells than header columns")
                if all(not (v or "").strip() for v in row.values()):
                    continue
                yield _make_record(row, {c: row.get(c) for c in annotator_cols}, where), where

        return _check_unique(rows())


def _load_json(path: Path) -> list[PhotoRecord]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestParseError(f"{path}:{exc.lineno}: {exc.msg}") from None
    entries = data.get("photos") if isinstance(data, dict) else data
    if not isinstance(entries, list):
        raise ManifestParseError(f"{path}: expected a list of photos or {{'photos': [...]}}")

    def rows():
        for i, entry in enumerate(entries):
            where = f"{path}: photos[{i}]"
            if not isinstance(entry, dict):
                raise ManifestParseError(f"{where}: expected an object")
            annotations = entry.get("annotations") or {}
            if not isinstance(annotations, dict) or any(not ANNOTATOR_COLUMN.match(k) for k in annotations):
                raise ManifestParseError(f"{where}: annotations must map m1..mK to depths")
            unknown = [k for k in entry if k not in BASE_COLUMNS and k != "annotations"]
            if unknown:
                raise ManifestParseError(f"{where}: unknown fields {unknown}")
            row = {k: (None if v is None else str(v)) for k, v in entry.items() if k != "annotations"}
            yield _make_record(row, annotations, where), where

    return _check_unique(rows())


def load_manifest(path: str | Path) -> list[PhotoRecord]:
    """Load and validate a CSV/TSV or JSON manifest, preserving file order."""
    path = Path(path)
    if not path.is_file():
        raise ManifestParseError(f"{path}: manifest not found")
    if path.suffix.lower() == ".json":
        return _load_json(path)
    return _load_csv(path)


@dataclass(frozen=True)
class PhotoResult:
    photo_id: str
    image_hash: str | None = None
    estimate: DepthEstimate | None = None
    error: str | None = None
    from_cache: bool = False

    def __post_init__(self):
        if (self.estimate is None) == (self.error is None):
            raise ValueError(f"{self.photo_id}: exactly one of estimate or error must be set")

    @property
    def ok(self) -> bool:
        return self.estimate is not None

    def to_dict(self) -> dict:
        return {
            "photo_id": self.photo_id,
            "image_hash": self.image_hash,
            "estimate": None if self.estimate is None else self.estimate.to_dict(),
            "error": self.error,
            "from_cache": self.from_cache,
        }

    @classmethod
    def from_dict(cls, data: dict) -> PhotoResult:
        est = data.get("estimate")
        return cls(
            photo_id=data["photo_id"],
            image_hash=data.get("image_hash"),
            estimate=None if est is None else DepthEstimate.from_dict(est),
            error=data.get("error"),
            from_cache=bool(data.get("from_cache", False)),
        )


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    model_id: str
    prompt_checksum: str
    results: tuple[PhotoResult, ...]
    started_at: str
    finished_at: str
    profile_id: str | None = None
    provider: str | None = None

    def __post_init__(self):
        ids = [r.photo_id for r in self.results]
        if len(set(ids)) != len(ids):
            raise ValueError(f"run {self.run_id}: a photo appears more than once")

    def estimates(self) -> dict[str, float]:
        return {r.photo_id: r.estimate.value_m for r in self.results if r.estimate is not None}

    def to_dict(self) -> dict:
        return {
            "schema": RUN_SCHEMA,
            "run_id": self.run_id,
            "model_id": self.model_id,
            "prompt_checksum": self.prompt_checksum,
            "profile_id": self.profile_id,
            "provider": self.provider,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "results": [r.to_dict() for r in self.results],
        }

    @classmethod
    def from_dict(cls, data: dict) -> RunRecord:
        return cls(
            run_id=data["run_id"],
            model_id=data["model_id"],
            prompt_checksum=data["prompt_checksum"],
            results=tuple(PhotoResult.from_dict(r) for r in data["results"]),
            started_at=data["started_at"],
            finished_at=data["finished_at"],
            profile_id=data.get("profile_id"),
            provider=data.get("provider"),
        )


def serialize_run(record: RunRecord) -> bytes:
    return json.dumps(record.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8") + b"\n"


class RunLog:
    """Line-delimited JSON, one run per line.

    A trailing line without a newline is an interrupted write: readers ignore
    it and the next append truncates it away.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")

    def _complete_lines(self) -> list[bytes]:
        try:
            raw = self.path.read_bytes()
        except FileNotFoundError:
            return []
        end = raw.rfind(b"\n")
        return raw[: end + 1].splitlines() if end >= 0 else []

    def read_all(self) -> list[RunRecord]:
        runs = []
        for n, line in enumerate(self._complete_lines(), 1):
            if not line.strip():
                continue
            try:
                runs.append(RunRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                log.warning("%s:%d: skipping unreadable run record: %s", self.path, n, exc)
        return runs

    def run_ids(self) -> list[str]:
        return [r.run_id for r in self.read_all()]

    def get(self, run_id: str) -> RunRecord:
        for run in self.read_all():
            if run.run_id == run_id:
                return run
        raise MissingRun(f"no run {run_id!r} in {self.path}")

    def append(self, record: RunRecord) -> None:
        line = serialize_run(record)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self._lock:
                if record.run_id in self.run_ids():
                    raise DuplicateRunId(f"run {record.run_id!r} already in {self.path}")
                with open(self.path, "ab+") as fh:
                    size = fh.seek(0, os.SEEK_END)
                    if size:
                        fh.seek(0)
                        data = fh.read()
                        keep = data.rfind(b"\n") + 1
                        if keep != size:
                            log.warning("%s: dropping %d bytes of interrupted write", self.path, size - keep)
                            fh.truncate(keep)
                    fh.write(line)
                    fh.flush()
                    os.fsync(fh.fileno())
        except OSError as exc:
            raise StorageFailure(f"cannot append to run log {self.path}: {exc}") from exc


def append_run(record: RunRecord, log_path: str | Path) -> None:
    RunLog(log_path).append(record)


def export_geojson(run: RunRecord, manifest: Sequence[PhotoRecord]) -> tuple[dict, int]:
    """Point features for every estimated photo with coordinates.

    Returns the FeatureCollection and the number of run entries skipped
    (no coordinates, no estimate, or not in the manifest).
    """
    by_id = {rec.photo_id: rec for rec in manifest}
    features = []
    skipped = 0
    for result in run.results:
        rec = by_id.get(result.photo_id)
        if result.estimate is None or rec is None or not rec.has_coordinates:
            skipped += 1
            continue
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [rec.lon, rec.lat]},
                "properties": {
                    "photo_id": result.photo_id,
                    "depth_m": result.estimate.value_m,
                    "source": result.estimate.source,
                    "flags": sorted(f.value for f in result.estimate.flags),
                    "run_id": run.run_id,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}, skipped
