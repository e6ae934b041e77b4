"""Continuous-space hill-climbing algorithms.

Every algorithm returns a :class:`~modeseek.trajectory.Trajectory` whose
``extras`` carry what :func:`step_diagnostics` needs: the algorithm name,
its parameters and the gradients at the iterates.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from .density import DensityModel, as_point
from .errors import SolverError, StepUndefinedError
from .kde import Kde, shadow
from .trajectory import Status, Terminal, Trajectory, alignment_cosines, step_cosines

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# Unregularized Max Slope Shift: shifts shorter than this fraction of eps
# mean the best slope is only approached as the shift length goes to zero
# (below it the difference quotient is dominated by rounding).
STALL_FRACTION = 1e-3

PHI_FUNCTIONS = {
    "one": lambda a: 1.0,
    "inverse": lambda a: 1.0 / a if a > 0 else math.inf,
}


@dataclass(frozen=True)
class ShiftConfig:
    """Parameters shared by the shift algorithms.

    ``eps`` is the neighborhood radius for Max Shift / Max Slope Shift and the
    step size rho for the Euler family and Line Search Shift. Tolerances left
    as ``None`` are derived from the model's smoothness bounds.
    """

    eps: float = 0.05
    slope_fraction: float = 0.5
    phi: Union[None, str, Callable[[float], float]] = None
    f_improve_tol: Optional[float] = None  # default 1e-14 * kappa0
    disp_tol: float = 1e-10  # relative to eps (or h for Mean Shift)
    max_iters: int = 100_000
    grad_guard: float = 0.0  # Level Shift stops once |grad f| <= grad_guard
    grad_tol: Optional[float] = None  # default 1e-8 * kappa1
    refine_steps: int = 20
    line_grid: int = 9
    line_tol: float = 1e-10  # relative to rho
    unregularized: bool = False  # allow slope_fraction = 0 (Max Slope Shift, testing only)

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps / rho must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not (0.0 < self.slope_fraction < 1.0):
            if not (self.unregularized and self.slope_fraction == 0.0):
                raise ValueError("slope_fraction must lie in (0, 1)")

    @property
    def rho(self) -> float:
        return self.eps

    def phi_function(self) -> Callable[[float], float]:
        if self.phi is None:
            return PHI_FUNCTIONS["one"]
        if isinstance(self.phi, str):
            try:
                return PHI_FUNCTIONS[self.phi]
            except KeyError:
                raise ValueError(f"unknown phi {self.phi!r}") from None
        return self.phi

    def tolerances(self, model: DensityModel):
        """(f_improve_tol, grad_tol) resolved against the model."""
        f_tol = self.f_improve_tol
        g_tol = self.grad_tol
        if f_tol is None or g_tol is None:
            b = model.bounds
            f_tol = 1e-14 * b.kappa0 if f_tol is None else f_tol
            g_tol = 1e-8 * b.kappa1 if g_tol is None else g_tol
        return f_tol, g_tol


def _cfg(cfg, **kw) -> ShiftConfig:
    if cfg is None:
        return ShiftConfig(**kw)
    return replace(cfg, **kw) if kw else cfg


class _Recorder:
    """Collects iterates; ``steps`` keeps the update vectors of gradient-driven
    methods so alignment is measured on the update, not on rounded differences."""

    def __init__(self, x, f, g):
        self.points = [x]
        self.f = [f]
        self.grads = [g]
        self.steps = []

    def add(self, x, f, g, step=None):
        self.points.append(x)
        self.f.append(f)
        self.grads.append(g)
        if step is not None:
            self.steps.append(step)

    def finish(self, status: Status, **extras) -> Trajectory:
        P = np.array(self.points)
        G = np.array(self.grads)
        extras["grads"] = G
        if self.steps and len(self.steps) == len(P) - 1:
            cos = step_cosines(np.array(self.steps), G)
        else:
            cos = alignment_cosines(P, G)
        return Trajectory(P, np.array(self.f), Terminal(status), cos, extras=extras)


# ---------------------------------------------------------------------------
# Euler family
# ---------------------------------------------------------------------------


def euler_shift_variant(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """x <- x + rho * phi(f(x)) * grad f(x), until the displacement drops below disp_tol * rho."""
    cfg = cfg or ShiftConfig()
    rho = cfg.eps
    phi = cfg.phi_function()
    kappa2 = model.bounds.kappa2
    if rho >= 2.0 / kappa2:
        warnings.warn(f"step size {rho} exceeds 2/kappa2 = {2.0 / kappa2:.4g}", stacklevel=2)
    x = as_point(x0, model.dim).copy()
    f, g = model.value_grad(x)
    rec = _Recorder(x, f, g)
    stop = cfg.disp_tol * rho
    status = Status.MAX_ITERATIONS
    for _ in range(cfg.max_iters):
        if not math.isfinite(float(g @ g)):
            raise ValueError(f"non-finite gradient at {x}")
        scale = phi(f)
        if not math.isfinite(scale):
            raise StepUndefinedError(f"phi is undefined at density value {f!r}")
        step = (rho * scale) * g
        if math.sqrt(float(step @ step)) < stop:
            status = Status.CONVERGED
            break
        x = x + step
        f, g = model.value_grad(x)
        rec.add(x, f, g, step)
    name = "euler" if cfg.phi is None else "euler_variant"
    return rec.finish(status, algorithm=name, rho=rho)


def euler_shift(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """Forward Euler on the gradient flow: x <- x + rho grad f(x)."""
    return euler_shift_variant(model, x0, _cfg(cfg, phi=None))


def level_shift(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """x <- x + rho grad f / |grad f|^2, raising f by about rho per step.

    Stops with ``Stalled`` once |grad f| <= ``cfg.grad_guard``.
    """
    cfg = cfg or ShiftConfig()
    if not cfg.grad_guard > 0:
        raise ValueError("level_shift needs a positive grad_guard")
    rho = cfg.eps
    x = as_point(x0, model.dim).copy()
    f, g = model.value_grad(x)
    rec = _Recorder(x, f, g)
    status = Status.MAX_ITERATIONS
    for _ in range(cfg.max_iters):
        gn2 = float(g @ g)
        if math.sqrt(gn2) <= cfg.grad_guard:
            status = Status.STALLED
            break
        step = (rho / gn2) * g
        x = x + step
        f, g = model.value_grad(x)
        rec.add(x, f, g, step)
    return rec.finish(status, algorithm="level_shift", rho=rho, grad_guard=cfg.grad_guard)


# ---------------------------------------------------------------------------
# Line Search Shift
# ---------------------------------------------------------------------------


def golden_section_max(fun, a: float, b: float, tol: float, fa=None, fb=None):
    """Maximize a 1-D function on [a, b] by golden-section search.

    Returns (x, f(x)); the bracket endpoints compete with the interior
    estimate so a monotone function yields its endpoint.
    """
    fa = fun(a) if fa is None else fa
    fb = fun(b) if fb is None else fb
    lo, hi = a, b
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = fun(x1), fun(x2)
    while hi - lo > tol:
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - GOLDEN * (hi - lo)
            f1 = fun(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + GOLDEN * (hi - lo)
            f2 = fun(x2)
    best = max(((x1, f1), (x2, f2), (a, fa), (b, fb)), key=lambda t: t[1])
    return best


def line_search_shift(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """x <- x + r* grad f(x) with r* maximizing f along the ray over [0, rho].

    The maximizer is located on a grid of ``cfg.line_grid`` points and polished
    by golden-section search; a grid maximum at r = rho with nonnegative
    directional derivative there is accepted as is.
    """
    cfg = cfg or ShiftConfig()
    rho = cfg.eps
    f_tol, _ = cfg.tolerances(model)
    x = as_point(x0, model.dim).copy()
    f, g = model.value_grad(x)
    rec = _Recorder(x, f, g)
    accepted = []
    rs = np.linspace(0.0, rho, cfg.line_grid)
    status = Status.MAX_ITERATIONS
    last = len(rs) - 1
    for _ in range(cfg.max_iters):
        gn2 = float(g @ g)
        if not math.isfinite(gn2):
            raise ValueError(f"non-finite gradient at {x}")
        if gn2 == 0.0:
            status = Status.CONVERGED
            break
        vals = model.values(x + rs[:, None] * g)
        vals[0] = f
        if not math.isfinite(float(vals.sum())):
            raise ValueError("non-finite density along the search ray")
        j = int(vals.argmax())
        end = None
        if j == last:
            y = x + rho * g
            fy, gy = model.value_grad(y)
            if float(gy @ g) >= 0.0:
                end = (y, fy, gy)
        if end is not None:
            r_star, f_new = rho, end[1]
        else:
            lo, hi = max(j - 1, 0), min(j + 1, last)
            r_star, f_new = golden_section_max(
                lambda r: model.value(x + r * g), rs[lo], rs[hi], cfg.line_tol * rho,
                fa=float(vals[lo]), fb=float(vals[hi]),
            )
        if f_new - f <= f_tol:
            status = Status.CONVERGED
            break
        if end is not None:
            x, f, g = end
        else:
            x = x + r_star * g
            f, g = model.value_grad(x)
        rec.add(x, f, g)
        accepted.append(r_star)
    return rec.finish(status, algorithm="line_search", rho=rho, line_steps=np.array(accepted))


# ---------------------------------------------------------------------------
# Ball and annulus maximization
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def direction_set(d: int) -> np.ndarray:
    """Deterministic unit directions: +-axes, then 4d low-discrepancy directions."""
    axes = np.vstack([np.eye(d), -np.eye(d)])
    if d == 1:
        return axes
    pts = qmc.Halton(d, scramble=False).random(4 * d + 1)[1:]
    v = ndtri(np.clip(pts, 1e-12, 1 - 1e-12))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    out = np.vstack([axes, v])
    out.setflags(write=False)
    return out


def _tangent_basis(u: np.ndarray) -> np.ndarray:
    """Orthonormal basis (d, d-1) of the plane orthogonal to unit vector u."""
    d = len(u)
    e = np.zeros(d)
    e[0] = 1.0
    s = 1.0 if u[0] >= 0 else -1.0
    v = u + s * e
    H = np.eye(d) - 2.0 * np.outer(v, v) / float(v @ v)
    return H[:, 1:]


def _neg_def(H: np.ndarray) -> bool:
    d = H.shape[0]
    if d == 1:
        return H[0, 0] < 0
    if d == 2:
        return H[0, 0] < 0 and H[0, 0] * H[1, 1] - H[0, 1] * H[1, 0] > 0
    return np.linalg.eigvalsh(H)[-1] < 0


def _sphere_point(x: np.ndarray, r: float, u: np.ndarray) -> np.ndarray:
    """x + r u, pulled in by a few ulps if rounding put it outside the closed ball."""
    t = r
    for k in range(64):
        y = x + t * u
        # measured exactly as Trajectory.step_lengths measures it
        if np.linalg.norm((y - x)[None, :], axis=1)[0] <= r:
            return y
        t = r * (1.0 - 2.0 ** (k - 52))
    return x + 0.5 * r * u


def _refine_on_circle(model, x, eps, u, fu, steps):
    """2-D case of :func:`_refine_on_sphere`, Newton in the polar angle."""
    theta = math.atan2(u[1], u[0])
    for _ in range(steps):
        c, s = math.cos(theta), math.sin(theta)
        _, g, H = model.derivs(x + eps * np.array([c, s]))
        d1 = eps * (-s * g[0] + c * g[1])
        d2 = eps * eps * (s * s * H[0, 0] - 2 * s * c * H[0, 1] + c * c * H[1, 1]) - eps * (c * g[0] + s * g[1])
        step = -d1 / d2 if d2 < 0 else d1 / max(abs(d2), eps * eps * model.bounds.kappa2, 1e-300)
        if abs(step) <= 1e-10:
            break
        accepted = False
        while abs(step) > 1e-10:
            tn = theta + step
            un = np.array([math.cos(tn), math.sin(tn)])
            fn = model.value(x + eps * un)
            if fn >= fu:
                theta, u, fu, accepted = tn, un, fn, True
                break
            step *= 0.5
        if not accepted:
            break
    return u, fu


def _refine_on_sphere(model, x, eps, u, fu, steps):
    """Maximize f(x + eps u) over unit u by Riemannian Newton with gradient fallback."""
    d = len(u)
    if d == 1:
        return u, fu
    if d == 2:
        return _refine_on_circle(model, x, eps, u, fu, steps)
    for _ in range(steps):
        y = x + eps * u
        _, g, H = model.derivs(y)
        Q = _tangent_basis(u)
        gr = eps * (Q.T @ g)
        Hr = Q.T @ (eps * eps * H - eps * float(u @ g) * np.eye(d)) @ Q
        ev = np.linalg.eigvalsh(Hr)
        if ev[-1] < 0:
            xi = -np.linalg.solve(Hr, gr)
        else:
            xi = gr / max(float(np.abs(ev).max()), 1e-300)
        if math.sqrt(float(xi @ xi)) <= 1e-10:
            break  # angular step below 1e-10 rad: f changes by O(1e-20 eps^2 kappa2)
        direction = Q @ xi
        accepted = False
        while math.sqrt(float(direction @ direction)) > 1e-10:
            un = u + direction
            un /= np.linalg.norm(un)
            fn = model.value(x + eps * un)
            if fn >= fu:
                u, fu, accepted = un, fn, True
                break
            direction = 0.5 * direction
        if not accepted:
            break
    return u, fu


def _interior_max(model, x, eps, gx, Hx, strict: bool):
    """Local maximum of f within the ball around x, found by Newton from x.

    Only attempted when the Hessian at x is negative definite and the Newton
    step predicts a critical point within 2 eps. Returns (z, f(z)) or None.
    """
    try:
        if not _neg_def(Hx):
            return None
        step = -np.linalg.solve(Hx, gx)
    except np.linalg.LinAlgError:
        return None
    if float(np.linalg.norm(step)) > 2.0 * eps:
        return None
    z = x.copy()
    g, H = gx, Hx
    for _ in range(50):
        try:
            step = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            return None
        z = z + step
        if float(np.linalg.norm(z - x)) > 3.0 * eps:
            return None
        fz, g, H = model.derivs(z)
        if float(np.linalg.norm(step)) <= 1e-15 * max(1.0, float(np.linalg.norm(z))):
            break
    if not _neg_def(H):
        return None
    r = float(np.linalg.norm(z - x))
    if (strict and r >= eps) or (not strict and r > eps):
        return None
    # a few more Newton steps can only polish; verify stationarity at machine level
    if float(np.linalg.norm(g)) > 1e-9 * max(model.bounds.kappa1, 1e-300):
        return None
    return z, fz


def ball_argmax(model: DensityModel, x, eps: float, fx=None, derivs=None, refine_steps: int = 20):
    """Maximize f over the closed ball B(x, eps).

    Candidates: the center, the sphere points along a fixed direction set and
    along the gradient; the best sphere candidate is refined on the sphere,
    and a Newton search covers an interior local maximum. Returns (y, f(y)).
    """
    x = as_point(x, model.dim)
    fx_, gx, Hx = model.derivs(x) if derivs is None else derivs
    fx = fx_ if fx is None else fx
    dirs = direction_set(model.dim)
    gn = float(np.linalg.norm(gx))
    if gn > 0:
        dirs = np.vstack([dirs, gx / gn])
    vals = model.values(x + eps * dirs)
    j = int(np.argmax(vals))
    u, fu = _refine_on_sphere(model, x, eps, dirs[j].copy(), float(vals[j]), refine_steps)
    best = (_sphere_point(x, eps, u), fu)
    inner = _interior_max(model, x, eps, gx, Hx, strict=False)
    if inner is not None and inner[1] >= best[1]:
        best = inner
    if best[1] <= fx and gn > 0:
        # large-eps safety net: some point along the gradient must beat the center
        t = eps
        for _ in range(60):
            t *= 0.5
            y = x + (t / gn) * gx
            fy = model.value(y)
            if fy > fx:
                best = (y, fy)
                break
    if best[1] <= fx:
        return x, fx
    return best


def _annulus_slope_argmax(model, x, fx, eps, r_min, refine_steps):
    """Maximize q(y) = (f(y) - f(x)) / |y - x| over r_min <= |y - x| <= eps.

    Seeds from the direction set at three radii, then alternates a sphere
    refinement of the direction (at fixed radius maximizing q is maximizing
    f) with a 1-D search of the radius. Returns (y, q, r).
    """
    dirs = direction_set(model.dim)
    _, gx = model.value_grad(x)
    gn = float(np.linalg.norm(gx))
    if gn > 0:
        dirs = np.vstack([dirs, gx / gn])
    radii = np.array([r_min, 0.5 * (r_min + eps), eps])
    cand = (x[None, None, :] + radii[:, None, None] * dirs[None, :, :]).reshape(-1, model.dim)
    rr = np.repeat(radii, len(dirs))
    q = (model.values(cand) - fx) / rr
    j = int(np.argmax(q))
    u, r = dirs[j % len(dirs)].copy(), float(rr[j])
    fu = fx + float(q[j]) * r
    rgrid = np.linspace(r_min, eps, 9)
    for _ in range(4):
        u, fu = _refine_on_sphere(model, x, r, u, fu, refine_steps)
        qy = (fu - fx) / r
        # radial direction: dq/dr = (grad f . u - q) / r
        if r == eps and float(model.grad(x + eps * u) @ u) >= qy:
            break
        qs = (model.values(x + rgrid[:, None] * u) - fx) / rgrid
        k = int(np.argmax(qs))
        if k == len(rgrid) - 1 and float(model.grad(x + eps * u) @ u) >= qs[k]:
            r_new, q_new = eps, float(qs[k])
        elif k == 0 and float(model.grad(x + r_min * u) @ u) <= qs[k]:
            r_new, q_new = r_min, float(qs[k])
        else:
            lo, hi = max(k - 1, 0), min(k + 1, len(rgrid) - 1)
            r_new, q_new = golden_section_max(
                lambda t: (model.value(x + t * u) - fx) / t, rgrid[lo], rgrid[hi],
                1e-10 * eps, fa=float(qs[lo]), fb=float(qs[hi]),
            )
        if q_new <= qy or abs(r_new - r) <= 1e-10 * eps:
            if q_new > qy:
                r, fu = r_new, fx + q_new * r_new
            break
        r, fu = r_new, fx + q_new * r_new
    return _sphere_point(x, r, u), (fu - fx) / r, r


# ---------------------------------------------------------------------------
# Max Shift and Max Slope Shift
# ---------------------------------------------------------------------------


def max_shift(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """x <- argmax of f over the closed ball B(x, eps); stops when f stops increasing."""
    cfg = cfg or ShiftConfig()
    eps = cfg.eps
    f_tol, g_tol = cfg.tolerances(model)
    x = as_point(x0, model.dim).copy()
    f, g, H = model.derivs(x)
    rec = _Recorder(x, f, g)
    status = Status.MAX_ITERATIONS
    for _ in range(cfg.max_iters):
        y, fy = ball_argmax(model, x, eps, f, (f, g, H), cfg.refine_steps)
        if fy - f <= f_tol:
            if fy <= f and float(np.linalg.norm(g)) > g_tol:
                raise SolverError(f"no improving point in B({x}, {eps}) although |grad f| = "
                                  f"{np.linalg.norm(g):.3e}")
            status = Status.CONVERGED
            break
        x = y
        f, g, H = model.derivs(x)
        rec.add(x, f, g)
    return rec.finish(status, algorithm="max_shift", eps=eps)


def max_slope_shift(model: DensityModel, x0, cfg: Optional[ShiftConfig] = None) -> Trajectory:
    """Jump to a certified local max inside the open ball if there is one, else
    to the maximizer of the slope (f(y) - f(x)) / |y - x| over the annulus
    c eps <= |y - x| <= eps.

    With ``cfg.unregularized`` and c = 0 the annulus degenerates to the
    punctured ball; the run ends ``Stalled`` when the best slope is only
    approached as the shift length goes to zero.
    """
    cfg = cfg or ShiftConfig()
    eps, c = cfg.eps, cfg.slope_fraction
    f_tol, g_tol = cfg.tolerances(model)
    r_floor = 1e-9 * eps
    r_min = c * eps if c > 0 else r_floor
    x = as_point(x0, model.dim).copy()
    f, g, H = model.derivs(x)
    rec = _Recorder(x, f, g)
    status = Status.MAX_ITERATIONS
    for _ in range(cfg.max_iters):
        inner = _interior_max(model, x, eps, g, H, strict=True)
        if inner is not None:
            z, fz = inner
            if fz - f <= f_tol:
                status = Status.CONVERGED
                break
            y = z
        else:
            y, q, r = _annulus_slope_argmax(model, x, f, eps, r_min, cfg.refine_steps)
            if c == 0 and r < STALL_FRACTION * eps:
                status = Status.STALLED
                break
            if q * r <= f_tol:
                if float(np.linalg.norm(g)) > g_tol:
                    raise SolverError(f"no improving point in the annulus around {x}")
                status = Status.CONVERGED
                break
        x = y
        f, g, H = model.derivs(x)
        rec.add(x, f, g)
    return rec.finish(status, algorithm="max_slope_shift", eps=eps, c=c)


# ---------------------------------------------------------------------------
# Mean Shift
# ---------------------------------------------------------------------------


def mean_shift(kde: Kde, x0, stop: Optional[ShiftConfig] = None) -> Trajectory:
    """x <- kernel-weighted mean of the sample points within h of x.

    ``f_values`` hold the shadow-KDE values (the function Mean Shift climbs);
    ``extras['f_base']`` the KDE values themselves.
    """
    stop = stop or ShiftConfig()
    fL = kde.shadow_kde()
    x = as_point(x0, kde.dim).copy()
    tol = stop.disp_tol * kde.h
    rec = _Recorder(x, *fL.value_grad(x))
    base = [kde.value(x)]
    status = Status.MAX_ITERATIONS
    if base[0] <= 0.0:
        status = Status.STALLED
    else:
        for _ in range(stop.max_iters):
            ms = kde.mean_shift(x)
            if math.sqrt(float(ms @ ms)) < tol:
                status = Status.CONVERGED
                break
            x = x + ms
            rec.add(x, *fL.value_grad(x), ms)
            base.append(kde.value(x))
    c = shadow(kde.profile, kde.dim).c
    return rec.finish(status, algorithm="mean_shift", h=kde.h, rho_h=kde.h**2 / (2 * c),
                      f_base=np.array(base))


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass
class StepReport:
    """Per-step checks of hill-climbing, step-length and alignment properties.

    Arrays have one entry per step; ``None`` means the property is not
    asserted for this algorithm.
    """

    algorithm: str
    monotone: np.ndarray
    step_law: Optional[np.ndarray] = None
    angle: Optional[np.ndarray] = None
    sufficient_increase: Optional[np.ndarray] = None
    notes: dict = field(default_factory=dict)

    @staticmethod
    def _count(a):
        return 0 if a is None else int(np.count_nonzero(~a))

    @property
    def violations_monotone(self) -> int:
        return self._count(self.monotone) + self._count(self.sufficient_increase)

    @property
    def violations_steplaw(self) -> int:
        return self._count(self.step_law)

    @property
    def violations_angle(self) -> int:
        return self._count(self.angle)


def step_diagnostics(traj: Trajectory, model: DensityModel = None, cfg: Optional[ShiftConfig] = None,
                     *, inner_tol: float = 1e-6, density_floor: Optional[float] = None) -> StepReport:
    """Check the per-step properties appropriate to the algorithm that produced ``traj``.

    - monotone f (exact for argmax-style algorithms, within 1e-12 relative
      otherwise); for Mean Shift the shadow KDE, only above ``density_floor``
    - Euler with rho <= 1/kappa2: f gains at least (rho/2)|grad f|^2
    - step lengths: eps for Max Shift, [c eps, eps] for Max Slope Shift,
      [rho/2, rho] for Line Search Shift when kappa2 rho <= 1/2, and the
      alternating law for medoid Max Shift (all but the last shift)
    - alignment: cosine 1 for gradient-driven steps, at least
      1 - kappa2 eps / |grad f| for Max Shift
    """
    ex = traj.extras
    alg = ex.get("algorithm", "unknown")
    f = traj.f_values
    df = np.diff(f)
    n = len(df)
    steps = traj.step_lengths
    cos = traj.align_cosines
    nonfinal = np.arange(n) < n - 1
    report_kw = {}
    if alg in ("max_shift", "max_slope_shift", "line_search", "medoid_max_slope_shift", "quick_shift"):
        monotone = df >= 0.0
    elif alg == "medoid_max_shift":
        # the first shift leaves an arbitrary start for the best medoid in its ball
        monotone = (df >= 0.0) | (np.arange(n) == 0)
    elif alg == "medoid_shift":
        monotone = np.ones(n, dtype=bool)  # not a hill-climbing method
    else:
        tol = 1e-12 * max(float(np.abs(f).max()), 1e-300)
        monotone = df >= -tol
    kappa2 = model.bounds.kappa2 if model is not None else None

    if alg == "mean_shift":
        floor = density_floor
        if floor is None:
            floor = 0.0
        base = ex["f_base"][:-1]
        monotone = monotone | (base < floor)
        report_kw["angle"] = cos >= 1.0 - 1e-12
    elif alg in ("euler", "euler_variant", "level_shift"):
        report_kw["angle"] = cos >= 1.0 - 1e-12
        rho = ex["rho"]
        if alg == "euler" and kappa2 is not None and rho <= 1.0 / kappa2:
            G = ex["grads"][:-1]
            gain = 0.5 * rho * np.einsum("ij,ij->i", G, G)
            tol = 1e-12 * max(float(np.abs(f).max()), 1e-300)
            report_kw["sufficient_increase"] = df >= gain - tol
        if alg == "level_shift":
            monotone = np.ones(n, dtype=bool)  # not asserted: rho +- kappa2 rho^2 / 2|grad f|^2
    elif alg == "line_search":
        report_kw["angle"] = cos >= 1.0 - 1e-12
        rho = ex["rho"]
        if kappa2 is not None and kappa2 * rho <= 0.5:
            r = ex["line_steps"]
            report_kw["step_law"] = (r >= 0.5 * rho) & (r <= rho)
    elif alg == "max_shift":
        eps = ex["eps"]
        report_kw["step_law"] = ~nonfinal | ((steps >= eps - inner_tol) & (steps <= eps * (1 + 1e-12)))
        if kappa2 is not None:
            gn = np.linalg.norm(ex["grads"][:-1], axis=1)
            with np.errstate(divide="ignore"):
                bound = 1.0 - kappa2 * eps / gn
            report_kw["angle"] = ~nonfinal | (cos >= bound - 1e-12) | (bound <= -1.0)
    elif alg == "max_slope_shift":
        eps, c = ex["eps"], ex["c"]
        report_kw["step_law"] = ~nonfinal | ((steps >= c * eps * (1 - 1e-12)) & (steps <= eps * (1 + 1e-12)))
    elif alg == "medoid_max_shift":
        eps = ex["eps"]
        short = steps <= eps / 2
        ok = np.ones(n, dtype=bool)
        # a pair (k, k+1) of non-final shifts may not both be short
        if n >= 3:
            ok[1:n - 1] = ~(short[:n - 2] & short[1:n - 1])
        report_kw["step_law"] = ok
    return StepReport(alg, monotone, **report_kw)
