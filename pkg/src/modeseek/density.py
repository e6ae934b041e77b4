"""Analytic test densities: Gaussian mixtures, their exact derivatives,
mode enumeration, sampling and grid estimates of global smoothness bounds.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from ._backend import kernels
from .errors import ConfigError, DimensionError, NearCriticalError

logger = logging.getLogger(__name__)

MODE_TOL = 1e-10
DEDUPE_RADIUS = 1e-6


def as_point(x, dim: int) -> np.ndarray:
    """Return ``x`` as a contiguous float vector of length ``dim``."""
    p = np.ascontiguousarray(x, dtype=float).reshape(-1)
    if p.shape[0] != dim:
        raise DimensionError(f"expected a point of dimension {dim}, got {p.shape[0]}")
    return p


def as_points(X, dim: int) -> np.ndarray:
    P = np.ascontiguousarray(X, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1) if dim == 1 else P.reshape(1, -1)
    if P.ndim != 2 or P.shape[1] != dim:
        raise DimensionError(f"expected points of dimension {dim}, got shape {P.shape}")
    return P


class DensityModel:
    """Interface shared by every evaluatable density.

    Subclasses implement :meth:`value`, :meth:`grad` and :meth:`hess`; the
    combined and batched variants below are generic loops that subclasses
    override when they can do better.
    """

    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError

    def value_grad(self, x):
        return self.value(x), self.grad(x)

    def derivs(self, x):
        return self.value(x), self.grad(x), self.hess(x)

    def values(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.array([self.value(x) for x in X])

    def derivs_batch(self, X):
        X = as_points(X, self.dim)
        out = [self.derivs(x) for x in X]
        F = np.array([o[0] for o in out])
        G = np.array([o[1] for o in out]).reshape(len(X), self.dim)
        H = np.array([o[2] for o in out]).reshape(len(X), self.dim, self.dim)
        return F, G, H

    def default_seeds(self) -> np.ndarray:
        raise NotImplementedError

    def default_grid(self) -> np.ndarray:
        raise NotImplementedError

    @cached_property
    def modes(self) -> "ModeList":
        return find_modes(self, self.default_seeds())

    @cached_property
    def bounds(self) -> "SmoothnessBounds":
        return estimate_bounds(self, self.default_grid())


class GaussianMixture(DensityModel):
    """Finite mixture of multivariate Gaussians with exact derivatives.

    Parameters
    ----------
    weights : array_like, shape (K,)
        Strictly positive mixture weights. Renormalized to sum to one; a
        warning is issued if they were off by more than 1e-9.
    means : array_like, shape (K, d)
    covs : array_like, shape (K, d, d)
        Symmetric positive-definite covariance matrices.
    """

    def __init__(self, weights, means, covs):
        w = np.asarray(weights, dtype=float).reshape(-1)
        mu = np.asarray(means, dtype=float)
        if mu.ndim == 1:
            mu = mu.reshape(-1, 1)
        S = np.asarray(covs, dtype=float)
        if S.ndim == 1:
            S = S.reshape(-1, 1, 1)
        K, d = mu.shape
        if w.shape[0] != K or S.shape != (K, d, d):
            raise ConfigError(
                f"inconsistent shapes: weights {w.shape}, means {mu.shape}, covs {S.shape}"
            )
        if np.any(w <= 0) or not np.all(np.isfinite(w)):
            raise ConfigError("mixture weights must be finite and strictly positive")
        total = w.sum()
        if abs(total - 1.0) > 1e-9:
            warnings.warn(f"mixture weights sum to {total!r}; renormalizing", stacklevel=2)
        w = w / total
        if not np.allclose(S, S.transpose(0, 2, 1), atol=1e-12, rtol=0):
            raise ConfigError("covariance matrices must be symmetric")
        S = 0.5 * (S + S.transpose(0, 2, 1))
        eig = np.linalg.eigvalsh(S)
        if np.any(eig[:, 0] <= 0):
            raise ConfigError("covariance matrices must be positive definite")

        self.dim = d
        self.weights = w
        self.means = np.ascontiguousarray(mu)
        self.covs = S
        self.precs = np.ascontiguousarray(np.linalg.inv(S))
        self.chols = np.linalg.cholesky(S)
        self.coefs = np.ascontiguousarray(w / np.sqrt(np.linalg.det(2.0 * np.pi * S)))
        self.sigma_max = float(np.sqrt(eig.max()))
        for arr in (self.weights, self.means, self.covs, self.precs, self.chols, self.coefs):
            arr.setflags(write=False)

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def params(self):
        """Arguments expected by the kernel functions."""
        return self.coefs, self.means, self.precs

    def value(self, x) -> float:
        return kernels.mix_value(as_point(x, self.dim), *self.params)

    def grad(self, x) -> np.ndarray:
        return kernels.mix_value_grad(as_point(x, self.dim), *self.params)[1]

    def hess(self, x) -> np.ndarray:
        return kernels.mix_derivs(as_point(x, self.dim), *self.params)[2]

    def value_grad(self, x):
        return kernels.mix_value_grad(as_point(x, self.dim), *self.params)

    def derivs(self, x):
        return kernels.mix_derivs(as_point(x, self.dim), *self.params)

    def values(self, X) -> np.ndarray:
        return kernels.mix_values(as_points(X, self.dim), *self.params)

    def derivs_batch(self, X):
        return kernels.mix_derivs_batch(as_points(X, self.dim), *self.params)

    def component_peaks(self) -> np.ndarray:
        """Per-component density at its own mean, a lower bound on sup f."""
        return self.coefs.copy()

    def box(self, n_sigma: float = 3.0) -> np.ndarray:
        """Bounding box of the means padded by ``n_sigma`` largest std devs, shape (d, 2)."""
        pad = n_sigma * self.sigma_max
        return np.stack([self.means.min(axis=0) - pad, self.means.max(axis=0) + pad], axis=1)

    def default_seeds(self) -> np.ndarray:
        per_dim = 7 if self.dim <= 3 else 3
        grid, _ = make_grid(self.box(3.0), num=per_dim)
        return np.vstack([self.means, grid])

    def default_grid(self) -> np.ndarray:
        if self.dim > 3:
            return np.vstack([self.means, sample(self, 20000, seed=0)])
        num = {1: 4001, 2: 241, 3: 61}[self.dim]
        # the means keep kappa0 above every component peak
        return np.vstack([self.means, make_grid(self.box(5.0), num=num)[0]])

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "components": [
                {"weight": float(w), "mean": m.tolist(), "cov": S.tolist()}
                for w, m, S in zip(self.weights, self.means, self.covs)
            ],
        }

    @classmethod
    def from_dict(cls, spec: dict) -> "GaussianMixture":
        try:
            dim = int(spec["dim"])
            comps = spec["components"]
            weights = [c["weight"] for c in comps]
            means = [c["mean"] for c in comps]
            covs = [c["cov"] for c in comps]
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed mixture specification: missing {exc}") from exc
        if not comps:
            raise ConfigError("mixture needs at least one component")
        means = np.asarray(means, dtype=float).reshape(len(comps), -1)
        if means.shape[1] != dim:
            raise ConfigError(f"means have dimension {means.shape[1]}, declared dim is {dim}")
        covs = np.asarray(covs, dtype=float).reshape(len(comps), dim, dim)
        return cls(weights, means, covs)

    def __repr__(self):
        return f"GaussianMixture(dim={self.dim}, n_components={self.n_components})"


def load_mixture(path) -> GaussianMixture:
    """Read a mixture from the JSON format ``{"dim": d, "components": [...]}``."""
    with open(path, encoding="utf-8") as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return GaussianMixture.from_dict(spec)


def save_mixture(model: GaussianMixture, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


def reference_mixture() -> GaussianMixture:
    """The 2-D three-mode mixture used by the shipped experiments."""
    return GaussianMixture(
        weights=[0.35, 0.35, 0.30],
        means=[[-1.0, 0.0], [1.0, 0.0], [0.0, 1.6]],
        covs=[
            [[0.16, 0.0], [0.0, 0.16]],
            [[0.20, 0.05], [0.05, 0.12]],
            [[0.14, -0.03], [-0.03, 0.18]],
        ],
    )


def bimodal_1d(separation: float = 2.0) -> GaussianMixture:
    """0.5 N(-separation, 1) + 0.5 N(separation, 1)."""
    return GaussianMixture([0.5, 0.5], [[-separation], [separation]], [[[1.0]], [[1.0]]])


def standard_normal(dim: int = 1) -> GaussianMixture:
    return GaussianMixture([1.0], [np.zeros(dim)], [np.eye(dim)])


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def eval_f(model: DensityModel, x) -> float:
    return model.value(x)


def eval_grad(model: DensityModel, x) -> np.ndarray:
    return model.grad(x)


def eval_hess(model: DensityModel, x) -> np.ndarray:
    return model.hess(x)


def eval_normalized_grad(model: DensityModel, x, grad_tol: float = 1e-12) -> np.ndarray:
    """Unit vector along the gradient.

    Raises
    ------
    NearCriticalError
        If the gradient norm is at most ``grad_tol``; callers treat this as a
        signal to stop.
    """
    g = model.grad(x)
    n = float(np.linalg.norm(g))
    if n <= grad_tol:
        raise NearCriticalError(f"gradient norm {n:.3e} <= {grad_tol:.3e}")
    return g / n


@dataclass(frozen=True)
class ModeList:
    modes: np.ndarray  # (m, d)
    gradient_norms: np.ndarray
    min_separation: float

    def __len__(self):
        return self.modes.shape[0]

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, i):
        return self.modes[i]

    def nearest(self, x):
        """Index of and distance to the closest listed mode."""
        dist = np.linalg.norm(self.modes - np.asarray(x, dtype=float), axis=1)
        i = int(np.argmin(dist))
        return i, float(dist[i])


def _refine_mode(model: DensityModel, x, mode_tol: float, max_iter: int):
    """Hill-climb then Newton-polish one seed; None if it does not converge."""
    x = np.array(x, dtype=float)
    f, g, H = model.derivs(x)
    gn = float(np.linalg.norm(g))
    newton_iters = 0
    for _ in range(4 * max_iter):
        if gn <= mode_tol:
            break
        eig = np.linalg.eigvalsh(H)
        if eig[-1] < 0:
            newton_iters += 1
            if newton_iters > max_iter:
                return None
            step = -np.linalg.solve(H, g)
            t = 1.0
            while True:
                xn = x + t * step
                fn, gnew, Hn = model.derivs(xn)
                gnn = float(np.linalg.norm(gnew))
                if gnn < gn or t < 1e-8:
                    break
                t *= 0.5
        else:
            # not yet in a concave region: gradient ascent with backtracking
            t = 1.0 / max(float(np.abs(eig).max()), 1e-300)
            while True:
                xn = x + t * g
                fn, gnew, Hn = model.derivs(xn)
                if fn > f or t < 1e-12:
                    break
                t *= 0.5
            gnn = float(np.linalg.norm(gnew))
        if not np.all(np.isfinite(xn)):
            return None
        x, f, g, H, gn = xn, fn, gnew, Hn, gnn
    if gn > mode_tol:
        return None
    if np.linalg.eigvalsh(H)[-1] >= 0:
        return None
    return x, gn


def find_modes(
    model: DensityModel,
    seeds=None,
    mode_tol: float = MODE_TOL,
    dedupe_radius: float = DEDUPE_RADIUS,
    max_iter: int = 100,
) -> ModeList:
    """Newton-refined, deduplicated local maxima reachable from ``seeds``.

    Seeds whose refinement diverges or ends at a non-maximum are discarded.
    """
    seeds = model.default_seeds() if seeds is None else as_points(seeds, model.dim)
    if len(seeds) == 0:
        raise ValueError("find_modes needs at least one seed")
    found, norms = [], []
    for s in seeds:
        res = _refine_mode(model, s, mode_tol, max_iter)
        if res is None:
            logger.debug("seed %s discarded: no mode reached", s)
            continue
        x, gn = res
        if any(np.linalg.norm(x - m) < dedupe_radius for m in found):
            continue
        found.append(x)
        norms.append(gn)
    if not found:
        raise ValueError("no mode found from the given seeds")
    # canonical order: lexicographic in coordinates
    order = sorted(range(len(found)), key=lambda i: tuple(found[i]))
    modes = np.array([found[i] for i in order])
    norms = np.array([norms[i] for i in order])
    if len(modes) > 1:
        diff = modes[:, None, :] - modes[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        sep = float(dist[np.triu_indices(len(modes), 1)].min())
    else:
        sep = math.inf
    return ModeList(modes, norms, sep)


@dataclass(frozen=True)
class SmoothnessBounds:
    """Grid estimates of sup f, sup |grad f| and sup |hess f|.

    These are maxima over a finite grid and hence lower estimates of the
    true suprema.
    """

    kappa0: float
    kappa1: float
    kappa2: float
    grid_resolution: float


def make_grid(box, num=None, spacing=None):
    """Regular grid over ``box`` (shape (d, 2)); returns (points, spacing)."""
    box = np.asarray(box, dtype=float).reshape(-1, 2)
    if (num is None) == (spacing is None):
        raise ValueError("give exactly one of num or spacing")
    axes = []
    steps = []
    for lo, hi in box:
        if spacing is not None:
            n = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
            ax = lo + spacing * np.arange(n)
            steps.append(spacing)
        else:
            ax = np.linspace(lo, hi, num)
            steps.append((hi - lo) / (num - 1) if num > 1 else 0.0)
        axes.append(ax)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    return np.ascontiguousarray(pts), max(steps)


def estimate_bounds(model: DensityModel, grid, resolution: float = math.nan) -> SmoothnessBounds:
    grid = as_points(grid, model.dim)
    if len(grid) == 0:
        raise ValueError("estimate_bounds needs a nonempty grid")
    F, G, H = model.derivs_batch(grid)
    k2 = np.linalg.norm(H, ord=2, axis=(1, 2)) if model.dim > 1 else np.abs(H[:, 0, 0])
    return SmoothnessBounds(
        kappa0=float(F.max()),
        kappa1=float(np.linalg.norm(G, axis=1).max()),
        kappa2=float(k2.max()),
        grid_resolution=float(resolution),
    )


def sample(model: GaussianMixture, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. draws: component by weight, then a Gaussian draw. Deterministic in ``seed``."""
    if n < 1:
        raise ValueError("sample size must be at least 1")
    rng = np.random.default_rng(seed)
    comp = rng.choice(model.n_components, size=n, p=model.weights)
    z = rng.standard_normal((n, model.dim))
    return model.means[comp] + np.einsum("nij,nj->ni", model.chols[comp], z)
