"""Uniform grid over the study area, per-cell binary occurrence series, and AP."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import Location, Task

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    bbox: tuple[float, float, float, float]
    rows: int
    cols: int

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def cell_w(self) -> float:
        return (self.bbox[2] - self.bbox[0]) / self.cols

    @property
    def cell_h(self) -> float:
        return (self.bbox[3] - self.bbox[1]) / self.rows

    def cell_of(self, loc: Location) -> int:
        """1-based cell index, row-major from the lower-left corner.

        Points on an interior boundary go to the cell whose lower/left edge
        they lie on; the outer top and right edges fold into the last row
        and column. Points outside the box are clamped.
        """
        min_x, min_y, _, _ = self.bbox
        col = math.floor((loc.x - min_x) / self.cell_w)
        row = math.floor((loc.y - min_y) / self.cell_h)
        col = min(max(col, 0), self.cols - 1)
        row = min(max(row, 0), self.rows - 1)
        return row * self.cols + col + 1

    def centroid(self, cell: int) -> Location:
        row, col = divmod(cell - 1, self.cols)
        return Location(self.bbox[0] + (col + 0.5) * self.cell_w,
                        self.bbox[1] + (row + 0.5) * self.cell_h)


def build_grid(bbox: Sequence[float], rows: int, cols: int) -> GridSpec:
    min_x, min_y, max_x, max_y = (float(v) for v in bbox)
    if rows < 1 or cols < 1:
        raise ConfigError("rows and cols must be >= 1")
    if not (max_x > min_x and max_y > min_y):
        raise ConfigError(f"degenerate bbox {tuple(bbox)}")
    return GridSpec((min_x, min_y, max_x, max_y), int(rows), int(cols))


@dataclass
class TaskSeries:
    """Binary occurrence tensor ``data[cell-1, p, j]``.

    Vector ``p`` of a cell covers ``[t0 + p*k*dt, t0 + (p+1)*k*dt)`` and
    its ``j``-th entry is one iff a task was published in that cell during
    the ``j``-th ``dt`` slot of the vector.
    """

    data: np.ndarray
    t0: float
    dt: float
    k: int
    ignored: int = 0

    @property
    def n_cells(self) -> int:
        return self.data.shape[0]

    @property
    def P(self) -> int:
        return self.data.shape[1]

    def t_start(self, p: int) -> float:
        return self.t0 + p * self.k * self.dt

    def flat(self) -> np.ndarray:
        """Chronological slot sequence per cell, shape ``(M, P*k)``."""
        return self.data.reshape(self.n_cells, -1)

    def window(self, start: int, length: int) -> "TaskSeries":
        return TaskSeries(self.data[:, start:start + length].copy(),
                          self.t_start(start), self.dt, self.k)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["cell", "vector_index", "t_start"]
                       + [f"c{j + 1}" for j in range(self.k)])
            for i in range(self.n_cells):
                for p in range(self.P):
                    w.writerow([i + 1, p, repr(self.t_start(p))]
                               + [int(v) for v in self.data[i, p]])


def build_series(tasks: Iterable[Task], grid: GridSpec, t0: float, k: int,
                 dt: float, P: int) -> TaskSeries:
    if k < 1 or P < 1 or dt <= 0:
        raise ConfigError("k, P must be >= 1 and dt > 0")
    data = np.zeros((grid.n_cells, P, k), dtype=np.float64)
    span = P * k
    ignored = 0
    for task in tasks:
        slot = math.floor((task.pub_time - t0) / dt)
        if slot < 0 or slot >= span:
            ignored += 1
            continue
        p, j = divmod(slot, k)
        data[grid.cell_of(task.loc) - 1, p, j] = 1.0
    if ignored:
        log.warning("build_series: %d task(s) outside the series time range", ignored)
    return TaskSeries(data, float(t0), float(dt), int(k), ignored)


THRESHOLDS = np.arange(101) / 100.0


def pr_curve(scores: Sequence[float], labels: Sequence[int]) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at thresholds 0, 0.01, ..., 1 (score >= threshold)."""
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    if s.shape != y.shape:
        raise ValueError("scores and labels must have equal length")
    n_pos = int(y.sum())
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive label")
    pred = s[None, :] >= THRESHOLDS[:, None]
    tp = (pred & y).sum(axis=1)
    fp = (pred & ~y).sum(axis=1)
    denom = tp + fp
    precision = np.where(denom > 0, tp / np.maximum(denom, 1), 1.0)
    recall = tp / n_pos
    return precision, recall


def average_precision(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the PR curve sampled on the fixed 101-threshold sweep.

    Walking the thresholds from high to low, each recall increment is
    weighted by the precision at the threshold where it is reached.
    """
    precision, recall = pr_curve(scores, labels)
    prev_recall = np.append(recall[1:], 0.0)
    ap = float(np.sum((recall - prev_recall) * precision))
    return min(max(ap, 0.0), 1.0)
