"""Trajectories with per-step diagnostics, and their CSV dump format."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np


class Status(str, Enum):
    CONVERGED = "ConvergedToMode"
    NEAR_CRITICAL = "NearCritical"
    MAX_ITERATIONS = "MaxIterations"
    STALLED = "Stalled"


@dataclass(frozen=True)
class Terminal:
    status: Status
    mode_index: Optional[int] = None

    def __str__(self):
        if self.status is Status.CONVERGED and self.mode_index is not None:
            return f"{self.status.value}({self.mode_index})"
        return self.status.value

    @classmethod
    def parse(cls, text: str) -> "Terminal":
        m = re.fullmatch(r"(\w+)(?:\((\d+)\))?", text.strip())
        if not m:
            raise ValueError(f"bad terminal status {text!r}")
        idx = int(m.group(2)) if m.group(2) is not None else None
        return cls(Status(m.group(1)), idx)


def alignment_cosines(points: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Cosine between each step x_{k+1} - x_k and the gradient at x_k (nan if either vanishes)."""
    return step_cosines(np.diff(points, axis=0), grads)


def step_cosines(steps: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Cosine between each update vector and the gradient where it was taken."""
    steps = np.asarray(steps, dtype=float)
    g = grads[: len(steps)]
    num = np.einsum("ij,ij->i", steps, g)
    den = np.linalg.norm(steps, axis=1) * np.linalg.norm(g, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.nan)
    return cos


@dataclass
class Trajectory:
    """Ordered iterates with densities, step lengths and gradient alignment.

    ``align_cosines[k]`` is measured between step k (from point k to k+1)
    and the gradient at point k. ``extras`` holds algorithm-specific arrays
    (e.g. accepted line-search steps, base-KDE values for Mean Shift).
    """

    points: np.ndarray
    f_values: np.ndarray
    terminal: Terminal
    align_cosines: Optional[np.ndarray] = None
    step_lengths: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points.reshape(1, -1)
        self.f_values = np.asarray(self.f_values, dtype=float)
        m = len(self.points)
        if m == 0:
            raise ValueError("empty trajectory")
        if self.step_lengths is None:
            self.step_lengths = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        if self.align_cosines is None:
            self.align_cosines = np.full(m - 1, np.nan)
        if len(self.f_values) != m or len(self.step_lengths) != m - 1 or len(self.align_cosines) != m - 1:
            raise ValueError("inconsistent trajectory lengths")
        if not np.all(np.isfinite(self.f_values)):
            raise ValueError("non-finite density value in trajectory")

    @property
    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    @property
    def arc_length(self) -> float:
        return float(self.step_lengths.sum())

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        write_trajectory(self, buf)
        return buf.getvalue()


TRAJECTORY_HEADER_TAIL = ["f", "step_length", "align_cosine", "terminal"]


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else format(float(v), ".17g")


def write_trajectory(traj: Trajectory, fh) -> None:
    """Rows: iteration, coordinates, f, length of the arriving step, its alignment cosine, terminal."""
    d = traj.dim
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["iteration"] + [f"x{i}" for i in range(d)] + TRAJECTORY_HEADER_TAIL)
    term = str(traj.terminal)
    for k, p in enumerate(traj.points):
        step = traj.step_lengths[k - 1] if k else 0.0
        cos = traj.align_cosines[k - 1] if k else np.nan
        w.writerow([k] + [_fmt(v) for v in p] + [_fmt(traj.f_values[k]), _fmt(step), _fmt(cos), term])


def read_trajectory(fh) -> Trajectory:
    rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1 - len(TRAJECTORY_HEADER_TAIL)
    nan = float("nan")
    pts = np.array([[float(v) for v in r[1:1 + d]] for r in body])
    f = np.array([float(r[1 + d]) for r in body])
    steps = np.array([float(r[2 + d]) for r in body[1:]])
    cos = np.array([float(r[3 + d]) if r[3 + d] else nan for r in body[1:]])
    return Trajectory(pts, f, Terminal.parse(body[-1][4 + d]), cos, steps)
