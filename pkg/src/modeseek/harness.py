"""Experiment runner: algorithm x parameter sweeps scored against the flow oracle.

A run builds the model, a start set restricted to {f >= s_floor}, the oracle
basin of every start (computed once), and for each (algorithm, parameter)
the endpoint of every start. Endpoints are clustered into estimated modes,
estimated modes are matched one-to-one to the true modes, and a start agrees
when its endpoint's matched mode is its oracle basin.
"""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import medoid as medoid_mod
from . import shift
from .density import DensityModel, GaussianMixture, ModeList, load_mixture, make_grid, sample
from .errors import ConfigError, ModeseekError
from .flow import FlowConfig, assign_basins, integrate_flow
from .kde import Kde, load_points, shadow
from .trajectory import Status

logger = logging.getLogger(__name__)

REPORT_HEADER = [
    "algorithm", "param_name", "param_value", "n_starts", "n_resolved", "agreement_fraction",
    "mode_hausdorff", "violations_monotone", "violations_steplaw", "violations_angle", "wall_time_s",
]

ANALYTIC = {
    "euler": (shift.euler_shift, "rho"),
    "euler_variant": (shift.euler_shift_variant, "rho"),
    "level_shift": (shift.level_shift, "rho"),
    "line_search": (shift.line_search_shift, "rho"),
    "max_shift": (shift.max_shift, "eps"),
    "max_slope_shift": (shift.max_slope_shift, "eps"),
}
MEDOID = {
    "medoid_max_shift": "eps",
    "medoid_max_slope_shift": "eps",
    "quick_shift": "eps",
    "medoid_shift": "h",
}
KDE_BASED = {"mean_shift": "h"}
ALGORITHMS = sorted({**ANALYTIC, **MEDOID, **KDE_BASED, "oracle": None})


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class AlgorithmSpec:
    name: str
    values: list
    options: dict = field(default_factory=dict)

    @property
    def param_name(self) -> str:
        if self.name in ANALYTIC:
            return ANALYTIC[self.name][1]
        return {**MEDOID, **KDE_BASED}.get(self.name) or "rtol"


@dataclass
class ExperimentConfig:
    """Parsed experiment description (see README for the JSON layout)."""

    model: dict
    algorithms: list
    starts: dict = field(default_factory=lambda: {"kind": "grid", "num": 40, "box_sigma": 2.0})
    oracle: dict = field(default_factory=dict)
    s_floor_fraction: float = 0.01
    seed: int = 0
    workers: int = 1
    record_timing: bool = True
    output: Optional[str] = None
    base_dir: str = "."

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: top level must be a JSON object")
        known = {f.name for f in fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"config: unknown field(s) {sorted(unknown)}")
        for req in ("model", "algorithms"):
            if req not in data:
                raise ConfigError(f"config.{req}: required field missing")
        algs = data["algorithms"]
        if not isinstance(algs, list) or not algs:
            raise ConfigError("config.algorithms: must be a nonempty list")
        specs = []
        for i, a in enumerate(algs):
            where = f"config.algorithms[{i}]"
            if not isinstance(a, dict) or "name" not in a:
                raise ConfigError(f"{where}: needs a 'name'")
            if a["name"] not in ALGORITHMS:
                raise ConfigError(f"{where}.name: unknown algorithm {a['name']!r}; known: {ALGORITHMS}")
            vals = a.get("values", [None] if a["name"] == "oracle" else None)
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"{where}.values: must be a nonempty list")
            for j, v in enumerate(vals):
                ok = v is None and a["name"] == "oracle"
                ok = ok or (isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0)
                ok = ok or (isinstance(v, str) and a["name"] in KDE_BASED)
                if not ok:
                    raise ConfigError(f"{where}.values[{j}]: expected a positive number, got {v!r}")
            opts = a.get("options", {})
            if not isinstance(opts, dict):
                raise ConfigError(f"{where}.options: must be an object")
            extra = set(a) - {"name", "values", "options"}
            if extra:
                raise ConfigError(f"{where}: unknown field(s) {sorted(extra)}")
            specs.append(AlgorithmSpec(a["name"], vals, opts))
        cfg = cls(**{**data, "algorithms": specs}, base_dir=str(base_dir))
        if not isinstance(cfg.model, dict):
            raise ConfigError("config.model: must be an object")
        if not isinstance(cfg.starts, dict) or cfg.starts.get("kind") not in ("grid", "sample", "file"):
            raise ConfigError("config.starts.kind: must be 'grid', 'sample' or 'file'")
        if not (0 <= cfg.s_floor_fraction < 1):
            raise ConfigError("config.s_floor_fraction: must lie in [0, 1)")
        if not isinstance(cfg.workers, int) or cfg.workers < 1:
            raise ConfigError("config.workers: must be a positive integer")
        try:
            FlowConfig(**cfg.oracle)
        except TypeError as exc:
            raise ConfigError(f"config.oracle: {exc}") from None
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
        return cls.from_dict(data, base_dir=path.parent)

    def resolve_path(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p


def build_model(cfg: ExperimentConfig) -> GaussianMixture:
    spec = cfg.model
    try:
        if "file" in spec:
            return load_mixture(cfg.resolve_path(spec["file"]))
        if "inline" in spec:
            return GaussianMixture.from_dict(spec["inline"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"config.model: {exc}") from None
    raise ConfigError("config.model: give 'file' or 'inline'")


def mode_heights(model: DensityModel, modes: ModeList) -> np.ndarray:
    return model.values(modes.modes)


def build_starts(cfg: ExperimentConfig, model: DensityModel, modes: ModeList) -> np.ndarray:
    """Start points restricted to f >= s_floor_fraction * highest mode, optionally thinned to max_n."""
    st = cfg.starts
    kind = st["kind"]
    try:
        if kind == "grid":
            pts, _ = make_grid(model.box(float(st.get("box_sigma", 2.0))), num=int(st["num"]))
        elif kind == "sample":
            pts = sample(model, int(st["n"]), int(st.get("seed", cfg.seed)))
        else:
            pts = load_points(cfg.resolve_path(st["path"]))
    except KeyError as exc:
        raise ConfigError(f"config.starts: missing field {exc}") from None
    floor = cfg.s_floor_fraction * float(mode_heights(model, modes).max())
    pts = pts[model.values(pts) >= floor]
    max_n = st.get("max_n")
    if max_n is not None and len(pts) > max_n:
        pts = pts[np.linspace(0, len(pts) - 1, int(max_n)).round().astype(int)]
    return np.ascontiguousarray(pts)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------


class OracleCache:
    """Oracle basin per start point, keyed by the point's exact bytes."""

    def __init__(self, model: DensityModel, modes: ModeList, config: FlowConfig):
        self.model, self.modes, self.config = model, modes, config
        self._store: dict[bytes, Optional[int]] = {}

    def __call__(self, starts: np.ndarray) -> list:
        missing = [x for x in starts if x.tobytes() not in self._store]
        if missing:
            for x, b in zip(missing, assign_basins(self.model, missing, self.modes, self.config)):
                self._store[x.tobytes()] = b
        return [self._store[x.tobytes()] for x in starts]

    def __len__(self):
        return len(self._store)


# ---------------------------------------------------------------------------
# Matching and clustering
# ---------------------------------------------------------------------------


@dataclass
class ModeMatch:
    """One-to-one matching of estimated to true modes.

    ``pairs`` lists (estimated index, true index); ``bottleneck`` is the largest
    matched distance; ``certified`` is False only when the greedy fallback
    could not prove its bottleneck optimal.
    """

    pairs: list
    bottleneck: float
    hausdorff: float
    cardinality_mismatch: bool
    certified: bool = True

    def truth_of(self, i_est: int) -> Optional[int]:
        for a, b in self.pairs:
            if a == i_est:
                return b
        return None


def set_hausdorff(A, B) -> float:
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    D = np.linalg.norm(A[:, None, :] - B[None, :, :], axis=2)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def match_modes(estimated, truth, exhaustive_limit: int = 50_000) -> ModeMatch:
    """Bottleneck-optimal one-to-one matching plus the symmetric Hausdorff distance.

    Exhaustive while the number of candidate assignments stays below
    ``exhaustive_limit``; otherwise greedy in order of distance, with a certificate when the greedy
    bottleneck equals the lower bound max_i min_j d(i, j).
    """
    E = np.asarray(estimated.modes if isinstance(estimated, ModeList) else estimated, dtype=float)
    T = np.asarray(truth.modes if isinstance(truth, ModeList) else truth, dtype=float)
    if E.ndim == 1:
        E = E.reshape(-1, 1) if T.ndim == 2 and T.shape[1] == 1 else E.reshape(1, -1)
    if len(E) == 0 or len(T) == 0:
        raise ValueError("match_modes needs two nonempty mode lists")
    D = np.linalg.norm(E[:, None, :] - T[None, :, :], axis=2)
    ne, nt = D.shape
    k = min(ne, nt)
    if math.perm(max(ne, nt), k) <= exhaustive_limit:
        best = None
        for rows in itertools.permutations(range(ne), k) if ne > nt else [tuple(range(ne))]:
            cols_iter = [tuple(range(nt))] if ne > nt else itertools.permutations(range(nt), k)
            for cols in cols_iter:
                d = D[list(rows), list(cols)]
                key = (float(d.max()), float(d.sum()))
                if best is None or key < best[0]:
                    best = (key, list(zip(rows, cols)))
        pairs = sorted(best[1])
        certified = True
    else:
        order = np.argsort(D, axis=None, kind="stable")
        used_e, used_t, pairs = set(), set(), []
        for flat in order:
            i, j = divmod(int(flat), nt)
            if i not in used_e and j not in used_t:
                pairs.append((i, j))
                used_e.add(i)
                used_t.add(j)
                if len(pairs) == k:
                    break
        pairs.sort()
        lower = D.min(axis=1).max() if ne <= nt else D.min(axis=0).max()
        certified = bool(max(D[i, j] for i, j in pairs) <= lower)
    bottleneck = float(max(D[i, j] for i, j in pairs))
    return ModeMatch(pairs, bottleneck, set_hausdorff(E, T), ne != nt, certified)


def cluster_endpoints(points: np.ndarray, scores: np.ndarray, radius: float):
    """Single-linkage clusters at ``radius``; each represented by its highest-scoring member.

    Returns (labels, representatives) with clusters numbered by first member.
    """
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=int), np.empty((0, points.shape[1] if points.ndim == 2 else 1))
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, raw = connected_components(graph, directed=False)
    # renumber by first occurrence so labels do not depend on the graph library
    _, first, inv = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    labels = rank[inv.reshape(-1)]
    reps = []
    for c in range(len(first)):
        members = np.flatnonzero(labels == c)
        reps.append(points[members[np.argmax(scores[members])]])
    return labels, np.array(reps)


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class StartResult:
    endpoint: Optional[np.ndarray]
    score: float
    converged: bool
    violations: tuple = (0, 0, 0)
    error: Optional[str] = None


@dataclass
class ReportRow:
    algorithm: str
    param_name: str
    param_value: float
    n_starts: int
    n_resolved: int
    agreement_fraction: float
    mode_hausdorff: float
    violations_monotone: int
    violations_steplaw: int
    violations_angle: int
    wall_time_s: float


@dataclass
class ExperimentReport:
    rows: list = field(default_factory=list)

    def row(self, algorithm: str, param_value=None) -> ReportRow:
        for r in self.rows:
            if r.algorithm == algorithm and (param_value is None or r.param_value == param_value):
                return r
        raise KeyError((algorithm, param_value))

    def series(self, algorithm: str) -> list:
        return [r for r in self.rows if r.algorithm == algorithm]


class _Context:
    """Per-run lazily built shared objects (sample, KDE, medoid sets)."""

    def __init__(self, cfg: ExperimentConfig, model: GaussianMixture, modes: ModeList, flow_cfg: FlowConfig):
        self.cfg, self.model, self.modes, self.flow_cfg = cfg, model, modes, flow_cfg
        self._cache = {}

    def _get(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    def sample(self, n: int, seed: int) -> np.ndarray:
        return self._get(("sample", n, seed), lambda: sample(self.model, n, seed))

    def kde(self, n: int, seed: int, h) -> Kde:
        return self._get(("kde", n, seed, h), lambda: Kde(self.sample(n, seed), h))

    def medoids(self, opts: dict) -> medoid_mod.MedoidSet:
        kind = opts.get("medoids", "sample")
        if kind == "grid":
            key = ("medoids-grid", float(opts.get("spacing", 0.02)))
            return self._get(key, lambda: medoid_mod.MedoidSet(
                make_grid(self.model.box(5.0), spacing=key[1])[0], density=self.model))
        n, seed = int(opts.get("n", 2000)), int(opts.get("seed", self.cfg.seed))
        return self._get(("medoids", n, seed), lambda: medoid_mod.MedoidSet(
            self.sample(n, seed), density=self.model))


def _merge_radius(spec: AlgorithmSpec, value, ctx: _Context) -> float:
    if "merge_radius" in spec.options:
        return float(spec.options["merge_radius"])
    if spec.name == "level_shift":
        return 0.25 * ctx.modes.min_separation
    if spec.name in MEDOID or spec.name in KDE_BASED:
        return 0.1 if isinstance(value, str) else max(float(value), 0.1)
    return ctx.flow_cfg.mode_match_radius


def _runner(spec: AlgorithmSpec, value, ctx: _Context) -> Callable[[np.ndarray], StartResult]:
    name, opts, model = spec.name, spec.options, ctx.model

    def wrap(traj, diag_model, **diag_kw):
        rep = shift.step_diagnostics(traj, diag_model, **diag_kw)
        ok = traj.terminal.status is Status.CONVERGED or (
            name == "level_shift" and traj.terminal.status is Status.STALLED)
        return StartResult(traj.endpoint, float(traj.f_values[-1]), ok,
                           (rep.violations_monotone, rep.violations_steplaw, rep.violations_angle))

    if name == "oracle":
        fc = ctx.flow_cfg

        def run(x):
            t = integrate_flow(model, x, fc, ctx.modes)
            return StartResult(t.endpoint, float(t.f_values[-1]), t.terminal.status is Status.CONVERGED)
        return run

    if name in ANALYTIC:
        fn, _ = ANALYTIC[name]
        kw = {k: v for k, v in opts.items() if k in {f.name for f in fields(shift.ShiftConfig)}}
        if name == "level_shift":
            kw.setdefault("grad_guard", 0.05)
        scfg = shift.ShiftConfig(eps=float(value), **kw)
        return lambda x: wrap(fn(model, x, scfg), model)

    if name == "mean_shift":
        kde = ctx.kde(int(opts.get("n", 5000)), int(opts.get("seed", ctx.cfg.seed)), value)
        fL = kde.shadow_kde()
        floor = fL.bounds.kappa2 * kde.h**2 / (2 * _shadow_c(kde))
        return lambda x: wrap(shift.mean_shift(kde, x), kde, density_floor=floor)

    Y = ctx.medoids(opts)
    v = float(value)
    if name == "medoid_max_shift":
        return lambda x: wrap(medoid_mod.medoid_max_shift(Y, x, v), model, inner_tol=0.0)
    if name == "medoid_max_slope_shift":
        return lambda x: wrap(medoid_mod.medoid_max_slope_shift(Y, x, v), model)
    if name == "quick_shift":
        return lambda x: wrap(medoid_mod.quick_shift(Y, x, v), model)
    form = opts.get("form", "anchored")
    return lambda x: wrap(medoid_mod.medoid_shift(Y, x, v, form=form), model)


def _shadow_c(kde: Kde) -> float:
    return shadow(kde.profile, kde.dim).c


def _safe(run):
    def call(x):
        try:
            return run(x)
        except (ModeseekError, ValueError, ArithmeticError) as exc:
            return StartResult(None, -math.inf, False, error=f"{type(exc).__name__}: {exc}")
    return call


def score_endpoints(results: list, oracle: list, truth: ModeList, merge_radius: float,
                    snap_radius: float):
    """(n_resolved, agreement_fraction, mode_hausdorff) for one (algorithm, parameter)."""
    resolved = [o is not None for o in oracle]
    n_resolved = int(sum(resolved))
    usable = [i for i, r in enumerate(results) if r.endpoint is not None and r.converged]
    labels = [None] * len(results)
    hausdorff = math.nan
    if usable:
        P = np.array([results[i].endpoint for i in usable])
        S = np.array([results[i].score for i in usable])
        cl, reps = cluster_endpoints(P, S, merge_radius)
        match = match_modes(reps, truth)
        hausdorff = match.hausdorff
        D = np.linalg.norm(reps[:, None, :] - truth.modes[None, :, :], axis=2)
        truth_of = {}
        for a, b in match.pairs:
            if D[a, b] <= snap_radius:
                truth_of[a] = b
        for i, c in zip(usable, cl):
            labels[i] = truth_of.get(int(c))
    agree = sum(1 for i, o in enumerate(oracle) if o is not None and labels[i] == o)
    frac = agree / n_resolved if n_resolved else math.nan
    return n_resolved, frac, hausdorff


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None,
                   oracle_cache: Optional[OracleCache] = None) -> ExperimentReport:
    """Run every (algorithm, parameter) of ``cfg`` over the start set; write the CSV if ``cfg.output``."""
    model = build_model(cfg)
    modes = model.modes
    flow_cfg = FlowConfig(**cfg.oracle).resolve(model, modes)
    starts = build_starts(cfg, model, modes)
    cache = oracle_cache or OracleCache(model, modes, flow_cfg)
    oracle = cache(starts)
    ctx = _Context(cfg, model, modes, flow_cfg)
    nworkers = workers or cfg.workers
    report = ExperimentReport()
    for spec in cfg.algorithms:
        for value in spec.values:
            t0 = time.perf_counter()
            run = _safe(_runner(spec, value, ctx))
            if nworkers > 1:
                with ThreadPoolExecutor(max_workers=nworkers) as pool:
                    results = list(pool.map(run, starts))
            else:
                results = [run(x) for x in starts]
            errors = [r.error for r in results if r.error]
            if errors:
                logger.warning("%s(%s): %d start(s) failed, first: %s", spec.name, value, len(errors), errors[0])
            merge = _merge_radius(spec, value, ctx)
            snap = float(spec.options.get("snap_radius", merge))
            n_res, frac, haus = score_endpoints(results, oracle, modes, merge, snap)
            viol = np.array([r.violations for r in results], dtype=np.int64).reshape(-1, 3).sum(axis=0)
            pval = _param_value(spec, value, ctx)
            wall = time.perf_counter() - t0 if cfg.record_timing else 0.0
            report.rows.append(ReportRow(
                spec.name, spec.param_name, pval, len(starts), n_res, frac, haus,
                int(viol[0]), int(viol[1]), int(viol[2]), wall,
            ))
            logger.info("%s %s=%s agreement=%.4f", spec.name, spec.param_name, pval, frac)
    if cfg.output:
        emit_report(report, cfg.resolve_path(cfg.output))
    return report


def _param_value(spec: AlgorithmSpec, value, ctx: _Context) -> float:
    if value is None:
        return float(ctx.flow_cfg.rtol)
    if isinstance(value, str):
        opts = spec.options
        return float(ctx.kde(int(opts.get("n", 5000)), int(opts.get("seed", ctx.cfg.seed)), value).h)
    return float(value)


# ---------------------------------------------------------------------------
# Report CSV
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def emit_report(report: ExperimentReport, path) -> None:
    """CSV with the fixed header, UTF-8, LF line endings, 17-significant-digit floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in report.rows:
            w.writerow([_fmt(getattr(r, k)) for k in REPORT_HEADER])


def parse_report(path) -> ExperimentReport:
    types = {f.name: f.type for f in fields(ReportRow)}
    conv = {"str": str, "int": int, "float": float}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != REPORT_HEADER:
        raise ValueError(f"{path}: not a report file (unexpected header)")
    out = ExperimentReport()
    for line in rows[1:]:
        out.rows.append(ReportRow(**{k: conv[types[k]](v) for k, v in zip(REPORT_HEADER, line)}))
    return out


def agreement_nondecreasing(report: ExperimentReport, algorithm: str) -> bool:
    """True when agreement never drops along the listed parameter sequence."""
    a = [r.agreement_fraction for r in report.series(algorithm)]
    return all(y >= x for x, y in zip(a, a[1:]))


def report_to_dicts(report: ExperimentReport) -> list:
    return [asdict(r) for r in report.rows]
