"""Hill-climbing restricted to a finite point set (medoids).

The algorithms see the set only through :class:`MetricView`: radius queries,
distances and density values. A query location is either a medoid index or
an external point (the start). Ties are broken by smallest index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .density import DensityModel, as_point, as_points, make_grid
from .errors import LevelTooHighError
from .kde import DEFAULT_PROFILE, KernelProfile, load_points
from .spatial import GridIndex
from .trajectory import Status, Terminal, Trajectory

Location = Union[int, np.integer, np.ndarray]


class MedoidSet:
    """Points Y with density values and exact radius queries.

    ``f_values`` default to ``density.values(points)``; keeping ``density``
    lets runs evaluate f at start points outside Y.
    """

    def __init__(self, points, f_values=None, density: Optional[DensityModel] = None):
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        if P.ndim != 2 or len(P) == 0:
            raise ValueError("a medoid set needs a nonempty (n, d) point array")
        self.points = np.ascontiguousarray(P)
        self.points.setflags(write=False)
        self.n, self.dim = P.shape
        self.density = density
        if f_values is None:
            if density is None:
                raise ValueError("give f_values or a density")
            f_values = density.values(self.points)
        F = np.array(f_values, dtype=float).reshape(-1)
        if F.shape[0] != self.n or not np.all(np.isfinite(F)):
            raise ValueError("f_values must be finite, one per point")
        self.f_values = F
        self.f_values.setflags(write=False)
        self._indices = {}

    @classmethod
    def from_csv(cls, path, density: DensityModel) -> "MedoidSet":
        return cls(load_points(path), density=density)

    def __len__(self):
        return self.n

    def verify(self, density: Optional[DensityModel] = None) -> bool:
        """True when the stored values equal a fresh evaluation exactly."""
        density = density or self.density
        return bool(np.array_equal(density.values(self.points), self.f_values))

    def _index(self, r: float) -> GridIndex:
        key = float(r)
        idx = self._indices.get(key)
        if idx is None:
            idx = self._indices[key] = GridIndex(self.points, r)
        return idx

    def _coords(self, q: Location) -> np.ndarray:
        if isinstance(q, (int, np.integer)):
            return self.points[int(q)]
        return as_point(q, self.dim)

    def radius_query(self, q: Location, r: float) -> np.ndarray:
        """Indices i with |points[i] - q| <= r, ascending."""
        if r < 0:
            raise ValueError("radius must be nonnegative")
        x = self._coords(q)
        if r == 0:
            return np.flatnonzero(np.all(self.points == x, axis=1)).astype(np.int64)
        return self._index(r).query(x, r)

    def distances(self, q: Location, idx) -> np.ndarray:
        """Distances from q to the medoids ``idx``."""
        diff = self.points[np.asarray(idx, dtype=np.int64)] - self._coords(q)
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    def pairwise(self, idx_a, idx_b) -> np.ndarray:
        A = self.points[np.asarray(idx_a, dtype=np.int64)]
        B = self.points[np.asarray(idx_b, dtype=np.int64)]
        diff = A[:, None, :] - B[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def f(self, idx) -> np.ndarray:
        return self.f_values[np.asarray(idx, dtype=np.int64)]

    def f_at(self, x) -> float:
        """Density at an external point (needs ``density``)."""
        if self.density is None:
            raise ValueError("this medoid set has no density to evaluate external points")
        return float(self.density.value(x))

    def view(self) -> "MetricView":
        return MetricView(self)


class MetricView:
    """The only interface the medoid algorithms use: distances and density values."""

    __slots__ = ("_set",)

    def __init__(self, medoids: MedoidSet):
        self._set = medoids

    def __len__(self):
        return len(self._set)

    def radius_query(self, q: Location, r: float) -> np.ndarray:
        return self._set.radius_query(q, r)

    def distances(self, q: Location, idx) -> np.ndarray:
        return self._set.distances(q, idx)

    def pairwise(self, idx_a, idx_b) -> np.ndarray:
        return self._set.pairwise(idx_a, idx_b)

    def f(self, idx) -> np.ndarray:
        return self._set.f(idx)


def radius_query(Y: MedoidSet, x, r: float) -> np.ndarray:
    return Y.radius_query(x, r)


# ---------------------------------------------------------------------------
# Index-path cores (metric-only)
# ---------------------------------------------------------------------------


def max_shift_path(view, q0: Location, eps: float, max_iters: Optional[int] = None):
    """Medoid Max Shift as a list of medoid indices and a status."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    limit = len(view) + 1 if max_iters is None else max_iters
    path = []
    q = q0
    for _ in range(limit):
        ball = view.radius_query(q, eps)
        if len(ball) == 0:
            return path, Status.STALLED
        fb = view.f(ball)
        j = ball[int(np.argmax(fb))]  # ball is ascending: ties go to the smallest index
        if path and view.f([j])[0] <= view.f([path[-1]])[0]:
            return path, Status.CONVERGED
        path.append(int(j))
        q = int(j)
    return path, Status.MAX_ITERATIONS


def max_slope_shift_path(view, q0: Location, f0: float, eps: float, max_iters: Optional[int] = None):
    """Medoid Max Slope Shift: maximize (f(y) - f(x)) / |y - x| over in-ball medoids y != x."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    limit = len(view) + 1 if max_iters is None else max_iters
    path = []
    q, fq = q0, f0
    for _ in range(limit):
        ball = view.radius_query(q, eps)
        if len(ball) == 0:
            return path, Status.STALLED
        dist = view.distances(q, ball)
        keep = dist > 0
        ball, dist = ball[keep], dist[keep]
        fb = view.f(ball)
        up = fb > fq
        if not np.any(up):
            return path, Status.CONVERGED
        ball, dist, fb = ball[up], dist[up], fb[up]
        j = int(np.argmax((fb - fq) / dist))
        q, fq = int(ball[j]), float(fb[j])
        path.append(q)
    return path, Status.MAX_ITERATIONS


def quick_shift_path(view, q0: Location, f0: float, eps: float, max_iters: Optional[int] = None):
    """Quick Shift: move to the nearest in-ball medoid with strictly larger f."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    limit = len(view) + 1 if max_iters is None else max_iters
    path = []
    q, fq = q0, f0
    for _ in range(limit):
        ball = view.radius_query(q, eps)
        if len(ball) == 0:
            return path, Status.STALLED
        fb = view.f(ball)
        up = fb > fq
        if not np.any(up):
            return path, Status.CONVERGED
        ball, fb = ball[up], fb[up]
        dist = view.distances(q, ball)
        j = int(np.argmin(dist))  # ties: first occurrence, i.e. smallest index
        q, fq = int(ball[j]), float(fb[j])
        path.append(q)
    return path, Status.MAX_ITERATIONS


def medoid_shift_path(view, q0: Location, h: float, profile: KernelProfile = DEFAULT_PROFILE,
                      form: str = "anchored", max_iters: int = 10_000):
    """Medoid Shift: x <- argmin_y sum_j w_j |y_j - y|^2 over medoids y.

    ``form="anchored"`` weights w_j = k(|y_j - x|^2 / h^2) by the current
    point, so the minimizer is the medoid nearest the weighted centroid and
    lies within 2h of x; only those candidates are scored.
    ``form="printed"`` uses w_j = k(|y_j - y|^2 / h^2), which does not depend
    on x; every medoid is a candidate.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if form not in ("anchored", "printed"):
        raise ValueError(f"unknown medoid shift form {form!r}")
    path = []
    seen = set()
    q = q0
    for _ in range(max_iters):
        window = view.radius_query(q, h)
        if form == "anchored":
            w = profile.k(view.distances(q, window) ** 2 / h**2) if len(window) else np.empty(0)
            if len(window) == 0 or not np.any(w > 0):
                return path, Status.STALLED
            window, w = window[w > 0], w[w > 0]
            cand = view.radius_query(q, 2.0 * h)
            D = view.pairwise(cand, window)
            cost = (D**2) @ w
        else:
            if len(window) == 0:
                return path, Status.STALLED
            cand = np.arange(len(view), dtype=np.int64)
            cost = np.empty(len(cand))
            for t, y in enumerate(cand):
                near = view.radius_query(int(y), h)
                dy = view.distances(int(y), near)
                cost[t] = float(np.sum(dy**2 * profile.k(dy**2 / h**2)))
        j = int(cand[int(np.argmin(cost))])
        if path and j == path[-1]:
            return path, Status.CONVERGED
        if j in seen:
            path.append(j)
            return path, Status.STALLED  # cycle between medoids
        seen.add(j)
        path.append(j)
        q = j
    return path, Status.MAX_ITERATIONS


# ---------------------------------------------------------------------------
# Public trajectory-producing wrappers
# ---------------------------------------------------------------------------


def _start(Y: MedoidSet, x0, f0):
    if isinstance(x0, (int, np.integer)):
        i = int(x0)
        return i, Y.points[i], float(Y.f_values[i])
    x = as_point(x0, Y.dim)
    return x, x, (Y.f_at(x) if f0 is None else float(f0))


def _trajectory(Y: MedoidSet, x, fx, path, status, **extras) -> Trajectory:
    idx = np.array(path, dtype=np.int64)
    P = np.vstack([x[None, :], Y.points[idx]])
    F = np.concatenate([[fx], Y.f_values[idx]])
    term = Terminal(status)
    extras["indices"] = idx
    return Trajectory(P, F, term, extras=extras)


def medoid_max_shift(Y: MedoidSet, x0, eps: float, f0: Optional[float] = None) -> Trajectory:
    """x <- the medoid of largest f within eps; stops at a medoid maximal in its own ball.

    ``extras['certificate']`` is True when the endpoint's f is at least that
    of every medoid within eps of it.
    """
    q, x, fx = _start(Y, x0, f0)
    path, status = max_shift_path(Y.view(), q, eps)
    cert = None
    if path:
        ball = Y.radius_query(path[-1], eps)
        cert = bool(np.all(Y.f(ball) <= Y.f_values[path[-1]]))
    return _trajectory(Y, x, fx, path, status, algorithm="medoid_max_shift", eps=eps, certificate=cert)


def medoid_max_slope_shift(Y: MedoidSet, x0, eps: float, f0: Optional[float] = None) -> Trajectory:
    """x <- the in-ball medoid maximizing (f(y) - f(x)) / |y - x|, while that slope is positive."""
    q, x, fx = _start(Y, x0, f0)
    path, status = max_slope_shift_path(Y.view(), q, fx, eps)
    return _trajectory(Y, x, fx, path, status, algorithm="medoid_max_slope_shift", eps=eps)


def quick_shift(Y: MedoidSet, x0, eps: float, f0: Optional[float] = None) -> Trajectory:
    """x <- the nearest medoid within eps with strictly larger f; a heuristic without a consistency guarantee."""
    q, x, fx = _start(Y, x0, f0)
    path, status = quick_shift_path(Y.view(), q, fx, eps)
    return _trajectory(Y, x, fx, path, status, algorithm="quick_shift", eps=eps)


def medoid_shift(Y: MedoidSet, x0, h: float, profile: KernelProfile = DEFAULT_PROFILE,
                 form: str = "anchored", f0: Optional[float] = None) -> Trajectory:
    """Medoid Shift (see :func:`medoid_shift_path` for the two weight forms)."""
    q, x, fx = _start(Y, x0, f0)
    path, status = medoid_shift_path(Y.view(), q, h, profile, form)
    return _trajectory(Y, x, fx, path, status, algorithm="medoid_shift", h=h, form=form)


# ---------------------------------------------------------------------------
# Covering radius
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoveringRadius:
    level: float
    alpha: float
    grid_resolution: float
    n_grid: int


def covering_radius(Y: MedoidSet, model: DensityModel, level: float, grid=None,
                    resolution: Optional[float] = None) -> CoveringRadius:
    """Largest distance from a grid point with f >= level to its nearest medoid.

    Without ``grid`` a regular grid of spacing ``resolution`` over the model's
    5-sigma box is used (default spacing: box diameter / 400).
    """
    if not level > 0:
        raise ValueError("level must be positive")
    if grid is None:
        box = model.box(5.0)
        if resolution is None:
            resolution = float(np.linalg.norm(box[:, 1] - box[:, 0])) / 400.0
        grid, resolution = make_grid(box, spacing=resolution)
    G = as_points(grid, Y.dim)
    keep = G[model.values(G) >= level]
    if len(keep) == 0:
        raise LevelTooHighError(f"no grid point reaches density level {level}")
    dist, _ = cKDTree(Y.points).query(keep)
    res = float("nan") if resolution is None else float(np.max(resolution))
    return CoveringRadius(float(level), float(dist.max()), res, len(keep))
