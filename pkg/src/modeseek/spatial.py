"""Exact fixed-radius queries over a static point set."""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.spatial import cKDTree

_CACHE_LIMIT = 200_000
_KEY_LIMIT = 2.0**52  # cell coordinates beyond this lose integer precision


class GridIndex:
    """Uniform-grid hashing for d <= 3, k-d tree above.

    ``candidates`` returns a superset of the points within ``r`` (whole
    cells), ``query`` the exact in-radius subset. Both are sorted ascending.
    """

    def __init__(self, points, cell: float):
        self.points = np.ascontiguousarray(points, dtype=float)
        if self.points.ndim != 2:
            raise ValueError("points must be a 2-D array")
        if not cell > 0:
            raise ValueError("cell size must be positive")
        self.cell = float(cell)
        self.n, self.dim = self.points.shape
        self._tree = None
        self._cells = None
        self._cache = {}
        with np.errstate(over="ignore"):
            scaled = self.points / self.cell
        if self.dim > 3 or not np.all(np.abs(scaled) < _KEY_LIMIT):
            self._tree = cKDTree(self.points)
            return
        keys = np.floor(scaled).astype(np.int64)
        self._cells = {}
        if self.n:
            uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
            order = np.argsort(inverse.reshape(-1), kind="stable")
            bounds = np.searchsorted(inverse.reshape(-1)[order], np.arange(len(uniq) + 1))
            for j, key in enumerate(map(tuple, uniq)):
                self._cells[key] = order[bounds[j]:bounds[j + 1]].astype(np.int64)

    def candidates(self, x, r: float) -> np.ndarray:
        if self._tree is not None:
            return np.array(sorted(self._tree.query_ball_point(x, r)), dtype=np.int64)
        with np.errstate(over="ignore"):
            scaled = np.asarray(x, dtype=float) / self.cell
            reach_f = r / self.cell
        if not (np.all(np.abs(scaled) < _KEY_LIMIT) and reach_f < _KEY_LIMIT):
            # the query lies beyond every occupied cell or spans them all
            return np.arange(self.n, dtype=np.int64)
        reach = max(1, math.ceil(reach_f - 1e-12))
        if (2 * reach + 1) ** self.dim > 4 * max(self.n, 1):
            return np.arange(self.n, dtype=np.int64)
        key = tuple(int(v) for v in np.floor(scaled))
        ck = (key, reach)
        hit = self._cache.get(ck)
        if hit is not None:
            return hit
        parts = []
        for off in itertools.product(range(-reach, reach + 1), repeat=self.dim):
            arr = self._cells.get(tuple(k + o for k, o in zip(key, off)))
            if arr is not None:
                parts.append(arr)
        out = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        if len(self._cache) < _CACHE_LIMIT:
            self._cache[ck] = out
        return out

    def query(self, x, r: float) -> np.ndarray:
        if r < 0:
            raise ValueError("radius must be nonnegative")
        x = np.asarray(x, dtype=float)
        cand = self.candidates(x, r)
        if len(cand) == 0:
            return cand
        d = self.points[cand] - x
        return cand[np.einsum("ij,ij->i", d, d) <= r * r]


def brute_force_query(points, x, r: float) -> np.ndarray:
    d = np.asarray(points, dtype=float) - np.asarray(x, dtype=float)
    return np.nonzero(np.einsum("ij,ij->i", d, d) <= r * r)[0].astype(np.int64)
