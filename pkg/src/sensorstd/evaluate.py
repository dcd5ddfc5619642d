"""Trajectory error against a ground-truth polyline.

The error of each estimate is its shortest Euclidean distance to the path (no
time alignment). Summaries use the population standard deviation, so that
``rmse**2 == mean**2 + std**2``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exceptions import EmptySeries


@dataclass(frozen=True)
class GroundTruthPath:
    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] not in (2, 3) or len(v) < 2:
            raise ValueError("path needs at least 2 vertices of dimension 2 or 3")
        if v.shape[1] == 2:
            v = np.hstack([v, np.zeros((len(v), 1))])
        if np.any(np.all(np.diff(v, axis=0) == 0, axis=1)):
            raise ValueError("consecutive path vertices must be distinct")
        object.__setattr__(self, "vertices", v)

    @property
    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1)))

    @classmethod
    def load(cls, path) -> "GroundTruthPath":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["vertices"])

    def planar(self) -> "GroundTruthPath":
        v = self.vertices.copy()
        v[:, 2] = 0.0
        return GroundTruthPath(v)


def point_to_path_distance(p, path: GroundTruthPath) -> float:
    p = np.asarray(p, dtype=float)
    a = path.vertices[:-1]
    ab = path.vertices[1:] - a
    t = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
    foot = a + np.clip(t, 0.0, 1.0)[:, None] * ab
    return float(np.min(np.linalg.norm(p - foot, axis=1)))


def path_distances(points, path: GroundTruthPath) -> np.ndarray:
    """Vectorized :func:`point_to_path_distance` over an ``(n, 3)`` array."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    a = path.vertices[:-1]
    ab = path.vertices[1:] - a
    rel = p[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("nsk,sk->ns", rel, ab) / np.einsum("sk,sk->s", ab, ab), 0.0, 1.0)
    d = rel - t[:, :, None] * ab[None, :, :]
    return np.min(np.sqrt(np.einsum("nsk,nsk->ns", d, d)), axis=1)


@dataclass(frozen=True)
class ErrorSummary:
    mean: float
    std: float
    rmse: float
    median: float
    max: float
    n: int

    def to_document(self) -> dict:
        return asdict(self)


def summarize(errors: Sequence[float]) -> ErrorSummary:
    e = np.asarray(errors, dtype=float).reshape(-1)
    n = e.size
    if n == 0:
        raise EmptySeries("no errors to summarize")
    mean = float(np.mean(e))
    std = float(np.std(e))  # population
    rmse = math.sqrt(float(np.mean(e * e)))
    median = float(np.sort(e)[(n - 1) // 2])  # lower middle for even n
    return ErrorSummary(mean, std, rmse, median, float(np.max(e)), n)


@dataclass(frozen=True)
class RunEvaluation:
    label: str
    summary: ErrorSummary
    times: tuple
    errors: tuple

    def to_document(self, series_csv_path: str | None = None) -> dict:
        return {"label": self.label, "summary": self.summary.to_document(), "series_csv_path": series_csv_path}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "error"])
            for t, err in zip(self.times, self.errors):
                w.writerow([t, repr(err)])


def _position(point) -> np.ndarray:
    if isinstance(point, dict):
        return np.array([point["north"], point["east"], point["down"]], dtype=float)
    return np.asarray(point, dtype=float)


def evaluate_run(trajectory: Sequence, path: GroundTruthPath, label: str, planar: bool = False) -> RunEvaluation:
    """Distance series and summary for a trajectory of ``{t, north, east, down}`` points."""
    if not len(trajectory):
        raise EmptySeries("trajectory is empty")
    if planar:
        path = path.planar()
    pts = np.array([_position(point) for point in trajectory], dtype=float).reshape(-1, 3)
    if planar:
        pts[:, 2] = 0.0
    times = [point["t"] if isinstance(point, dict) else i for i, point in enumerate(trajectory)]
    errors = [float(e) for e in path_distances(pts, path)]
    return RunEvaluation(label, summarize(errors), tuple(times), tuple(errors))


def write_report(evaluation: RunEvaluation, report_path, csv_path=None) -> dict:
    """Write the report document (and the CSV series when ``csv_path`` is given)."""
    if csv_path is not None:
        evaluation.write_csv(csv_path)
    doc = evaluation.to_document(str(csv_path) if csv_path is not None else None)
    Path(report_path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return doc
