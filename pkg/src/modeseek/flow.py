"""Gradient-flow oracle: integrate dx/dt = grad f(x) to its limit and assign
start points to the basin of the mode they flow into.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _fallback
from ._backend import kernels
from .density import DensityModel, GaussianMixture, ModeList, as_point
from .errors import IntegrationError
from .trajectory import Status, Terminal, Trajectory, alignment_cosines


@dataclass(frozen=True)
class FlowConfig:
    """Integrator settings. ``None`` fields are filled from the model by :meth:`resolve`.

    - ``grad_stop_tol`` defaults to 1e-8 * kappa1
    - ``max_arc_length`` to 50 times the diameter of the model's bounding box
    - ``mode_match_radius`` to 1e-3 times the minimum mode separation
    - ``max_step_length`` (0 = off) caps each step's displacement, which keeps
      polylines close to the curve for Hausdorff comparisons
    """

    rtol: float = 1e-9
    atol: float = 1e-9
    h_max: float = 10.0
    grad_stop_tol: Optional[float] = None
    max_arc_length: Optional[float] = None
    mode_match_radius: Optional[float] = None
    unit_speed: bool = False
    max_steps: int = 1_000_000
    max_step_length: float = 0.0

    def resolve(self, model: DensityModel, modes: Optional[ModeList] = None) -> "FlowConfig":
        modes = model.modes if modes is None else modes
        upd = {}
        if self.grad_stop_tol is None:
            upd["grad_stop_tol"] = 1e-8 * model.bounds.kappa1
        if self.max_arc_length is None:
            upd["max_arc_length"] = 50.0 * _box_diameter(model)
        if self.mode_match_radius is None:
            sep = modes.min_separation
            upd["mode_match_radius"] = 1e-3 * sep if math.isfinite(sep) else 1e-3 * _box_diameter(model)
        cfg = replace(self, **upd) if upd else self
        for name in ("rtol", "atol", "h_max", "grad_stop_tol", "max_arc_length", "mode_match_radius"):
            if not getattr(cfg, name) > 0:
                raise ValueError(f"FlowConfig.{name} must be positive")
        if math.isfinite(modes.min_separation) and cfg.mode_match_radius >= modes.min_separation / 2:
            raise ValueError("mode_match_radius must be below half the minimum mode separation")
        return cfg

    def refined(self, factor: float = 0.5) -> "FlowConfig":
        """Same settings with integrator tolerances scaled by ``factor``."""
        return replace(self, rtol=self.rtol * factor, atol=self.atol * factor)


def _box_diameter(model: DensityModel) -> float:
    if hasattr(model, "box"):
        box = model.box(3.0)
    else:
        pts = model.default_grid()
        box = np.stack([pts.min(axis=0), pts.max(axis=0)], axis=1)
    return float(np.linalg.norm(box[:, 1] - box[:, 0]))


def _match_mode(model, x, modes: ModeList, radius: float) -> Optional[int]:
    """Index of the listed mode within ``radius`` of x, if x is a local max."""
    H = model.hess(x)
    if np.linalg.eigvalsh(H)[-1] >= 0:
        return None
    i, dist = modes.nearest(x)
    return i if dist <= radius else None


def _run(model, x0, cfg: FlowConfig):
    x0 = as_point(x0, model.dim)
    args = (cfg.rtol, cfg.atol, cfg.h_max, cfg.grad_stop_tol, cfg.max_arc_length,
            cfg.max_step_length, cfg.unit_speed, cfg.max_steps)
    if isinstance(model, GaussianMixture):
        pts, code = kernels.flow_mixture(x0, *model.params, *args)
    else:
        pts, code = _fallback.flow_generic(model.value_grad, model.derivs, x0, *args)
    if code == _fallback.FLOW_NONFINITE:
        raise IntegrationError(f"non-finite value while integrating from {x0}")
    return pts, code


def _terminal(model, pts, code, modes, cfg) -> Terminal:
    if code == _fallback.FLOW_CRITICAL:
        idx = _match_mode(model, pts[-1], modes, cfg.mode_match_radius)
        return Terminal(Status.CONVERGED, idx) if idx is not None else Terminal(Status.NEAR_CRITICAL)
    if code == _fallback.FLOW_MAX_ARC:
        return Terminal(Status.STALLED)
    return Terminal(Status.MAX_ITERATIONS)


def integrate_flow(
    model: DensityModel,
    x0,
    config: Optional[FlowConfig] = None,
    modes: Optional[ModeList] = None,
) -> Trajectory:
    """Adaptive Dormand-Prince integration of the gradient (or unit-speed) flow from ``x0``.

    Terminates with ``ConvergedToMode(i)`` when the gradient norm drops below
    ``grad_stop_tol`` at a listed mode, ``NearCritical`` at any other critical
    point, ``Stalled`` past ``max_arc_length`` and ``MaxIterations`` past
    ``max_steps``.
    """
    modes = model.modes if modes is None else modes
    cfg = (config or FlowConfig()).resolve(model, modes)
    pts, code = _run(model, x0, cfg)
    F, G, _ = model.derivs_batch(pts)
    return Trajectory(pts, F, _terminal(model, pts, code, modes, cfg), alignment_cosines(pts, G))


def assign_basin(
    model: DensityModel,
    x0,
    modes: Optional[ModeList] = None,
    config: Optional[FlowConfig] = None,
) -> Optional[int]:
    """Index of the mode the flow from ``x0`` converges to; ``None`` means unresolved."""
    return assign_basins(model, [x0], modes, config)[0]


def assign_basins(model: DensityModel, starts, modes: Optional[ModeList] = None,
                  config: Optional[FlowConfig] = None) -> list:
    """:func:`assign_basin` over many starts with one config resolution."""
    modes = model.modes if modes is None else modes
    if len(modes) == 0:
        raise ValueError("assign_basin needs a nonempty mode list")
    cfg = (config or FlowConfig()).resolve(model, modes)
    out = []
    for x0 in starts:
        pts, code = _run(model, x0, cfg)
        term = _terminal(model, pts, code, modes, cfg)
        out.append(term.mode_index if term.status is Status.CONVERGED else None)
    return out


def _points_to_polyline(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Distance from each row of P to the polyline through the rows of Q."""
    if len(Q) == 1:
        return np.linalg.norm(P - Q[0], axis=1)
    A = Q[:-1]
    D = Q[1:] - A
    dd = np.einsum("ij,ij->i", D, D)
    safe = np.where(dd > 0, dd, 1.0)
    out = np.empty(len(P))
    chunk = max(1, 2_000_000 // max(len(A), 1))
    for s in range(0, len(P), chunk):
        p = P[s:s + chunk, None, :]
        t = np.einsum("pij,ij->pi", p - A[None], D) / safe
        t = np.clip(np.where(dd > 0, t, 0.0), 0.0, 1.0)
        diff = p - (A[None] + t[..., None] * D[None])
        out[s:s + chunk] = np.sqrt(np.einsum("pij,pij->pi", diff, diff).min(axis=1))
    return out


def trajectory_hausdorff(tA: Trajectory, tB: Trajectory) -> float:
    """Symmetric Hausdorff distance between two polylines (vertex-to-segment distances)."""
    A = np.asarray(tA.points if isinstance(tA, Trajectory) else tA, dtype=float)
    B = np.asarray(tB.points if isinstance(tB, Trajectory) else tB, dtype=float)
    if len(A) == 0 or len(B) == 0:
        raise ValueError("empty trajectory")
    if A.shape[1] != B.shape[1]:
        raise ValueError("trajectories differ in dimension")
    return float(max(_points_to_polyline(A, B).max(), _points_to_polyline(B, A).max()))
