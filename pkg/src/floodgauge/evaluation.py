"""Agreement statistics between model depths and manual (annotator) depths."""
from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import EmptyAnnotations, EmptyInput, LengthMismatch, MissingEstimate, ZeroVariance

REPORT_SCHEMA = "floodgauge.evaluation/1"
SCATTER_COLUMNS = ("photo_id", "manual_mean_m", "model_m")
DEFAULT_OUTLIER_FACTOR = 2.0


@dataclass(frozen=True)
class AnnotationSet:
    photo_id: str
    annotator_depths: tuple[tuple[str, float], ...]
    notes: str | None = None

    def __post_init__(self):
        depths = tuple((str(a), float(d)) for a, d in self.annotator_depths)
        object.__setattr__(self, "annotator_depths", depths)
        ids = [a for a, _ in depths]
        if len(set(ids)) != len(ids):
            raise ValueError(f"{self.photo_id}: duplicate annotator ids {ids}")
        for a, d in depths:
            if not d >= 0:
                raise ValueError(f"{self.photo_id}: annotator {a} depth {d} is negative")

    def depth_of(self, annotator_id: str) -> float | None:
        for a, d in self.annotator_depths:
            if a == annotator_id:
                return d
        return None


def _check_pair(x: Sequence[float], y: Sequence[float]) -> None:
    if len(x) != len(y):
        raise LengthMismatch(f"length mismatch: {len(x)} vs {len(y)}")
    if not x:
        raise EmptyInput("no values to compare")


def mae(manual: Sequence[float], model: Sequence[float]) -> float:
    """Mean absolute difference between paired depths."""
    _check_pair(manual, model)
    return math.fsum(abs(m - g) for m, g in zip(manual, model)) / len(manual)


def mean_signed_error(manual: Sequence[float], model: Sequence[float]) -> float:
    """Mean of ``manual - model``; positive when the model underestimates."""
    _check_pair(manual, model)
    return math.fsum(m - g for m, g in zip(manual, model)) / len(manual)


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    _check_pair(x, y)
    n = len(x)
    if n < 2:
        raise ZeroVariance("correlation needs at least two points")
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ZeroVariance("correlation undefined: a vector has zero variance")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / (math.sqrt(sxx) * math.sqrt(syy))
    return max(-1.0, min(1.0, r))


def annotator_mean(annotations: Sequence[AnnotationSet]) -> list[tuple[str, float]]:
    out = []
    for ann in annotations:
        if not ann.annotator_depths:
            raise EmptyAnnotations(f"photo {ann.photo_id} has no annotator depths")
        # exact rational mean, so constant depths come back unchanged
        out.append((ann.photo_id, float(statistics.mean(d for _, d in ann.annotator_depths))))
    return out


@dataclass(frozen=True)
class ScatterPoint:
    photo_id: str
    manual_mean_m: float
    model_m: float


@dataclass(frozen=True)
class EvaluationReport:
    n: int
    mae_m: float
    mean_signed_error_m: float
    pearson_vs_mean: float
    pearson_per_annotator: tuple[tuple[str, float | None], ...]
    scatter: tuple[ScatterPoint, ...]
    outliers: tuple[tuple[str, float], ...]
    outlier_factor: float = DEFAULT_OUTLIER_FACTOR
    run_id: str | None = None
    model_id: str | None = None

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "run_id": self.run_id,
            "model_id": self.model_id,
            "n": self.n,
            "mae_m": self.mae_m,
            "mae_cm": self.mae_m * 100,
            "mean_signed_error_m": self.mean_signed_error_m,
            "pearson_vs_mean": self.pearson_vs_mean,
            "pearson_per_annotator": [
                {"annotator_id": a, "r": r} for a, r in self.pearson_per_annotator
            ],
            "outlier_factor": self.outlier_factor,
            "outliers": [{"photo_id": p, "abs_error_m": e} for p, e in self.outliers],
            "scatter": [
                {"photo_id": s.photo_id, "manual_mean_m": s.manual_mean_m, "model_m": s.model_m}
                for s in self.scatter
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: Mapping) -> EvaluationReport:
        return cls(
            n=data["n"],
            mae_m=data["mae_m"],
            mean_signed_error_m=data["mean_signed_error_m"],
            pearson_vs_mean=data["pearson_vs_mean"],
            pearson_per_annotator=tuple((p["annotator_id"], p["r"]) for p in data["pearson_per_annotator"]),
            scatter=tuple(ScatterPoint(s["photo_id"], s["manual_mean_m"], s["model_m"]) for s in data["scatter"]),
            outliers=tuple((o["photo_id"], o["abs_error_m"]) for o in data["outliers"]),
            outlier_factor=data["outlier_factor"],
            run_id=data.get("run_id"),
            model_id=data.get("model_id"),
        )


def evaluate(
    estimates: Mapping[str, float],
    annotations: Sequence[AnnotationSet],
    outlier_factor: float = DEFAULT_OUTLIER_FACTOR,
    *,
    run_id: str | None = None,
    model_id: str | None = None,
) -> EvaluationReport:
    """Compare model depths with per-photo annotator means.

    Every photo in ``annotations`` is evaluated, in that order, and must have
    an entry in ``estimates``. Outliers are photos whose absolute error exceeds
    ``outlier_factor`` times the MAE.
    """
    if outlier_factor < 0:
        raise ValueError("outlier_factor must be >= 0")
    missing = [a.photo_id for a in annotations if a.photo_id not in estimates]
    if missing:
        raise MissingEstimate(missing)
    means = annotator_mean(annotations)
    manual = [m for _, m in means]
    model = [float(estimates[pid]) for pid, _ in means]

    err = mae(manual, model)
    signed = mean_signed_error(manual, model)
    r_mean = pearson(manual, model)

    annotator_ids: list[str] = []
    for ann in annotations:
        for a, _ in ann.annotator_depths:
            if a not in annotator_ids:
                annotator_ids.append(a)
    per_annotator = []
    for a in annotator_ids:
        pairs = [(ann.depth_of(a), estimates[ann.photo_id]) for ann in annotations if ann.depth_of(a) is not None]
        try:
            r = pearson([p[0] for p in pairs], [p[1] for p in pairs])
        except (ZeroVariance, EmptyInput):
            r = None
        per_annotator.append((a, r))

    scatter = tuple(ScatterPoint(pid, m, g) for (pid, m), g in zip(means, model))
    outliers = tuple(
        (s.photo_id, abs(s.model_m - s.manual_mean_m))
        for s in scatter
        if abs(s.model_m - s.manual_mean_m) > outlier_factor * err
    )
    return EvaluationReport(
        n=len(scatter),
        mae_m=err,
        mean_signed_error_m=signed,
        pearson_vs_mean=r_mean,
        pearson_per_annotator=tuple(per_annotator),
        scatter=scatter,
        outliers=outliers,
        outlier_factor=outlier_factor,
        run_id=run_id,
        model_id=model_id,
    )


def write_scatter_csv(report: EvaluationReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCATTER_COLUMNS)
        for s in report.scatter:
            writer.writerow([s.photo_id, repr(s.manual_mean_m), repr(s.model_m)])


def read_scatter_csv(path: str | Path) -> list[ScatterPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            ScatterPoint(row["photo_id"], float(row["manual_mean_m"]), float(row["model_m"]))
            for row in reader
        ]


def format_summary(report: EvaluationReport) -> str:
    lines = [
        f"photos evaluated: {report.n}",
        f"MAE: {report.mae_m:.3f} m ({report.mae_m * 100:.1f} cm)",
        f"mean signed error (manual - model): {report.mean_signed_error_m:+.3f} m",
        f"Pearson r vs annotator mean: {report.pearson_vs_mean:.4f}",
    ]
    for a, r in report.pearson_per_annotator:
        lines.append(f"Pearson r vs {a}: " + ("n/a" if r is None else f"{r:.4f}"))
    lines.append(f"outliers (> {report.outlier_factor:g} x MAE): {len(report.outliers)}")
    for pid, e in report.outliers:
        lines.append(f"  {pid}: |error| = {e:.3f} m")
    return "\n".join(lines)
