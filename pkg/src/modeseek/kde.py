"""Compactly supported radial kernels, their shadows, and kernel density
estimates with exact windowed derivatives and the mean-shift vector.

A kernel is given through its profile k on [0, 1]: K(x) = N_d k(|x|^2),
with N_d the normalizer making K integrate to one in dimension d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import integrate
from scipy.special import gammaln

from ._backend import kernels
from .density import DensityModel, as_point, as_points
from .errors import IsolatedQueryError
from .spatial import GridIndex


def _unit_power_integral(m: int, d: int) -> float:
    """Integral over R^d of (1 - |x|^2)_+^m, i.e. pi^(d/2) m! / Gamma(d/2 + m + 1)."""
    return math.exp(0.5 * d * math.log(math.pi) + math.lgamma(m + 1) - gammaln(0.5 * d + m + 1))


def _radial_integral(k: Callable[[float], float], d: int) -> float:
    """Integral over R^d of k(|x|^2), with k supported on [0, 1]."""
    surface_half = math.pi ** (d / 2) / math.gamma(d / 2)
    val, _ = integrate.quad(lambda u: k(u) * u ** (d / 2 - 1), 0.0, 1.0, limit=200)
    return surface_half * val


@dataclass(frozen=True)
class KernelProfile:
    """Nonincreasing profile supported on [0, 1].

    Power profiles k(u) = scale * (1 - u)^power take the compiled fast path.
    Other profiles pass ``func`` (and ``dfunc``/``d2func`` for derivatives).
    """

    name: str
    power: Optional[int] = None
    scale: float = 1.0
    func: Optional[Callable[[float], float]] = None
    dfunc: Optional[Callable[[float], float]] = None
    d2func: Optional[Callable[[float], float]] = None
    smoothness_class: int = 0

    def k(self, u):
        u = np.asarray(u, dtype=float)
        if self.power is None:
            out = np.vectorize(self.func, otypes=[float])(np.clip(u, 0.0, 1.0))
        else:
            out = self.scale * np.clip(1.0 - u, 0.0, None) ** self.power
        return np.where(u >= 1.0, 0.0, out)

    def normalizer(self, d: int) -> float:
        if self.power is not None:
            return 1.0 / (self.scale * _unit_power_integral(self.power, d))
        total = _radial_integral(self.func, d)
        if not math.isfinite(total) or total <= 0:
            raise ValueError(f"profile {self.name!r} is not integrable")
        return 1.0 / total

    def std_factor(self, d: int) -> float:
        """Per-coordinate standard deviation of the unit-bandwidth kernel in dimension d."""
        if self.power is not None:
            return 1.0 / math.sqrt(d + 2 * self.power + 2)
        # |x|^2 has density proportional to k(u) u^(d/2 - 1) on [0, 1]
        num = integrate.quad(lambda u: self.func(u) * u ** (d / 2), 0.0, 1.0, limit=200)[0]
        den = integrate.quad(lambda u: self.func(u) * u ** (d / 2 - 1), 0.0, 1.0, limit=200)[0]
        return math.sqrt(num / den / d)


def power_profile(name: str, power: int, scale: float = 1.0) -> KernelProfile:
    return KernelProfile(name, power=power, scale=scale, smoothness_class=max(power - 1, 0))


FLAT = power_profile("flat", 0)
EPANECHNIKOV = power_profile("epanechnikov", 1)
TRIWEIGHT = power_profile("triweight", 3)
DEFAULT_PROFILE = TRIWEIGHT


@dataclass(frozen=True)
class ShadowProfile:
    """Shadow l(u) = c * int_u^inf N_d k(v) dv of a base profile in dimension ``dim``.

    ``c`` is taken against the normalized base profile N_d k so that L
    integrates to one and the mean-shift identity holds with h^2 / (2c).
    """

    base: KernelProfile
    dim: int
    c: float
    profile: KernelProfile

    def l(self, u):
        return self.profile.k(u)


def shadow(profile: KernelProfile, dim: int = 1) -> ShadowProfile:
    nk = profile.normalizer(dim)
    if profile.power is not None:
        m = profile.power
        c = dim / 2 + m + 1
        lp = KernelProfile(
            f"shadow({profile.name})",
            power=m + 1,
            scale=c * nk * profile.scale / (m + 1),
            smoothness_class=m,
        )
        return ShadowProfile(profile, dim, c, lp)

    def tail(u):
        if u >= 1.0:
            return 0.0
        return integrate.quad(profile.func, max(u, 0.0), 1.0, limit=200)[0]

    mass = _radial_integral(tail, dim) * nk
    if not math.isfinite(mass) or mass <= 0:
        raise ValueError(f"profile {profile.name!r} has no integrable shadow")
    c = 1.0 / mass
    lp = KernelProfile(
        f"shadow({profile.name})",
        func=lambda u: c * nk * tail(u),
        dfunc=lambda u: -c * nk * profile.func(u),
        d2func=None if profile.dfunc is None else (lambda u: -c * nk * profile.dfunc(u)),
        smoothness_class=profile.smoothness_class + 1,
    )
    return ShadowProfile(profile, dim, c, lp)


def scott_bandwidth(sample, profile: Optional[KernelProfile] = None) -> float:
    """Scott's rule: kernel standard deviation n^(-1/(d+4)) times the average
    per-dimension sample standard deviation.

    Without ``profile`` the rule value is returned as is (the bandwidth of a
    unit-variance kernel); with it, the value is divided by the profile's
    :meth:`~KernelProfile.std_factor` so the compact kernel has that spread.
    """
    X = np.asarray(sample, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    n, d = X.shape
    if n < 2:
        raise ValueError("Scott's rule needs at least two sample points")
    h = float(n ** (-1.0 / (d + 4)) * np.std(X, axis=0, ddof=1).mean())
    return h if profile is None else h / profile.std_factor(d)


def resolve_bandwidth(sample, h, profile: Optional[KernelProfile] = None) -> float:
    """Numeric bandwidth, or a rule: ``"scott"`` (matched to ``profile``) or ``"scott-raw"``."""
    if isinstance(h, str):
        rule = h.lower()
        if rule == "scott":
            return scott_bandwidth(sample, profile or DEFAULT_PROFILE)
        if rule == "scott-raw":
            return scott_bandwidth(sample)
        raise ValueError(f"unknown bandwidth rule {h!r}")
    return float(h)


class Kde(DensityModel):
    """Kernel density estimate (1 / n h^d) sum_i K((x - x_i) / h).

    Only sample points within distance ``h`` of the query contribute; a
    uniform grid of cell size ``h`` finds them.
    """

    def __init__(self, sample, h, profile: KernelProfile = DEFAULT_PROFILE):
        X = np.asarray(sample, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.shape[0] == 0:
            raise ValueError("KDE needs a nonempty sample")
        h = resolve_bandwidth(X, h, profile)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
        self.sample = np.ascontiguousarray(X)
        self.sample.setflags(write=False)
        self.n, self.dim = X.shape
        self.h = h
        self.profile = profile
        self._scale = profile.normalizer(self.dim) / (self.n * h**self.dim)
        self.index = GridIndex(self.sample, h)
        self._shadow = None

    def _sums(self, x, order):
        idx = self.index.candidates(x, self.h)
        p = self.profile
        if p.power is not None:
            s0, s1, s2, s3 = kernels.kde_sums(x, self.sample, idx, self.h, p.power, order)
            return p.scale * s0, p.scale * s1, p.scale * s2, p.scale * s3
        return self._generic_sums(x, idx, order)

    def _generic_sums(self, x, idx, order):
        p = self.profile
        diff = x - self.sample[idx]
        u = np.einsum("ij,ij->i", diff, diff) / self.h**2
        keep = u < 1.0
        diff, u = diff[keep], u[keep]
        k = p.k(u)
        s0 = float(k.sum())
        s1 = -(k @ diff)
        d = self.dim
        s2 = np.zeros(d)
        s3 = np.zeros((d, d))
        if order >= 1:
            dk = np.array([p.dfunc(v) for v in u])
            s2 = dk @ diff if len(u) else s2
            if order >= 2:
                d2k = np.array([p.d2func(v) for v in u])
                if len(u):
                    s3 = np.einsum("i,ij,ik->jk", d2k, diff, diff)
                s3 = s3 + np.eye(d) * dk.sum() * self.h**2 / 2.0
        return s0, s1, s2, s3

    def value(self, x) -> float:
        x = as_point(x, self.dim)
        return self._scale * self._sums(x, 0)[0]

    def grad(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        return self._scale * (2.0 / self.h**2) * self._sums(x, 1)[2]

    def value_grad(self, x):
        x = as_point(x, self.dim)
        s0, _, s2, _ = self._sums(x, 1)
        return self._scale * s0, self._scale * (2.0 / self.h**2) * s2

    def hess(self, x) -> np.ndarray:
        return self.derivs(x)[2]

    def derivs(self, x):
        x = as_point(x, self.dim)
        s0, _, s2, s3 = self._sums(x, 2)
        h2 = self.h**2
        return self._scale * s0, self._scale * (2.0 / h2) * s2, self._scale * (4.0 / h2**2) * s3

    def values(self, X) -> np.ndarray:
        X = as_points(X, self.dim)
        return np.array([self._scale * self._sums(x, 0)[0] for x in X])

    def mean_shift(self, x) -> np.ndarray:
        """Kernel-weighted mean of the in-window sample minus ``x``."""
        x = as_point(x, self.dim)
        s0, s1, _, _ = self._sums(x, 0)
        if s0 <= 0.0:
            raise IsolatedQueryError(f"no sample point within h={self.h} of the query")
        return s1 / s0

    def shadow_kde(self) -> "Kde":
        """KDE of the same sample and bandwidth with the shadow kernel (built once)."""
        if self._shadow is None:
            self._shadow = Kde(self.sample, self.h, shadow(self.profile, self.dim).profile)
        return self._shadow

    def default_seeds(self) -> np.ndarray:
        step = max(1, self.n // 500)
        return self.sample[::step]

    def default_grid(self) -> np.ndarray:
        step = max(1, self.n // 2000)
        return self.sample[::step]

    def __repr__(self):
        return f"Kde(n={self.n}, dim={self.dim}, h={self.h:.6g}, profile={self.profile.name!r})"


def kde_eval(kde: Kde, x) -> float:
    return kde.value(x)


def kde_grad(kde: Kde, x) -> np.ndarray:
    return kde.grad(x)


def kde_hess(kde: Kde, x) -> np.ndarray:
    if kde.profile.smoothness_class < 2 and kde.profile.power is not None and kde.profile.power < 2:
        raise ValueError(f"profile {kde.profile.name!r} is not twice differentiable")
    return kde.hess(x)


def mean_shift_vector(kde: Kde, x) -> np.ndarray:
    return kde.mean_shift(x)


def sup_deviation(fA: DensityModel, fB: DensityModel, grid):
    """Grid maxima of |fA - fB|, |grad fA - grad fB| and the spectral norm of the Hessian gap."""
    grid = as_points(grid, fA.dim)
    if len(grid) == 0:
        raise ValueError("sup_deviation needs a nonempty grid")
    FA, GA, HA = fA.derivs_batch(grid)
    FB, GB, HB = fB.derivs_batch(grid)
    dH = HA - HB
    eta2 = np.linalg.norm(dH, ord=2, axis=(1, 2)) if fA.dim > 1 else np.abs(dH[:, 0, 0])
    return (
        float(np.abs(FA - FB).max()),
        float(np.linalg.norm(GA - GB, axis=1).max()),
        float(eta2.max()),
    )


def load_points(path) -> np.ndarray:
    """CSV point file: one point per row, no header."""
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)


def save_points(points, path) -> None:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P.reshape(-1, 1)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in P:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
