"""Experiment driver: scenarios, (delta, k) grids, CSV output and forward-field caching."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .differentiation import admissible_factors, choose_mesh_sizes
from .fem import sobolev_sq
from .forward import Bump, ModuliSpec, frequency_bcs, solve_forward, static_bcs, synthesize_moduli
from .measurements import AliasingWarning, add_noise, read_field, write_field
from .mesh import FeSpace, build_mesh
from .operators import InvertibilityError
from .reconstruction import (CurveSpec, GradientSystemSampler, build_lifting, integrate_ode, min_ritz_value,
                             reconstruct)
from .solvers import PRECONDITIONERS, SolverError

log = logging.getLogger(__name__)

SCENARIOS = ("static", "frequency", "random", "custom")
BOUNDARY_PRESETS = {"static": static_bcs, "frequency": frequency_bcs}
CSV_COLUMNS = ("scenario", "delta", "k", "h", "err_rel_H1", "err_alpha_H1", "err_beta_H1", "min_detE",
               "cg_iters", "wall_time")
DEFAULT_K_GRID = (1, 2, 3, 4, 5, 6, 8, 10)
REFERENCE_NX = 120


# Configuration --------------------------------------------------------------------

def _bumps_to_list(bumps):
    return [{"amplitude": b.amplitude, "center": list(b.center), "r_minus": b.r_minus, "r_plus": b.r_plus}
            for b in bumps]


def _bumps_from_list(items):
    return tuple(Bump(float(d["amplitude"]), tuple(float(c) for c in d["center"]), float(d["r_minus"]),
                      float(d["r_plus"])) for d in items)


@dataclass
class ExperimentConfig:
    """Everything a run depends on. Serializes to JSON with all defaults filled in.

    Each entry of ``ks`` is a coarsening factor for the hessians; strains use
    the same factor unless ``k1`` pins it. With ``auto_h`` both come from the
    noise level instead.

    ``moduli`` is only read for the custom scenario; it holds ``alpha0``,
    ``beta0`` and either explicit ``alpha_bumps``/``beta_bumps`` lists or a
    ``random`` block with ``n`` and ``seed``.
    """

    scenario: str = "static"
    nx: int = 40
    r: int = 5
    omega1: float | None = None
    omega2: float | None = None
    rho: float = 1.0
    deltas: list = field(default_factory=lambda: [0.0])
    ks: list = field(default_factory=lambda: [1])
    k1: int | None = None
    auto_h: bool = False
    ell: int = 3
    h_scale: float = 1.0
    c0: float = 1e-8
    cg_tol: float = 1e-10
    forward_tol: float = 1e-10
    precond: str = "none"
    noise_modes: int = 20
    seed: int = 12345
    n_bumps: int = 1000
    boundary: str | None = None
    moduli: dict | None = None
    timing: bool = False
    save_fields: bool = False
    out_dir: str | None = None
    cache_dir: str | None = None

    def __post_init__(self):
        if self.omega1 is None or self.omega2 is None:
            w = (1.0, 0.0) if self.scenario == "frequency" else (0.0, 0.0)
            self.omega1 = w[0] if self.omega1 is None else self.omega1
            self.omega2 = w[1] if self.omega2 is None else self.omega2
        if self.boundary is None:
            self.boundary = "static" if self.scenario in ("static", "custom") else "frequency"
        self.deltas = [float(d) for d in self.deltas]
        self.ks = [int(k) for k in self.ks]

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.nx < 1:
            raise ValueError("nx must be positive")
        if self.r < 2:
            raise ValueError("hessians need polynomial order r >= 2")
        if self.boundary not in BOUNDARY_PRESETS:
            raise ValueError(f"unknown boundary preset {self.boundary!r}")
        if any(not math.isfinite(d) or d < 0 for d in self.deltas):
            raise ValueError("noise levels must be finite and nonnegative")
        if not self.auto_h:
            if not self.ks:
                raise ValueError("k list is empty")
            bad = [k for k in self.ks + ([self.k1] if self.k1 is not None else []) if k < 1 or self.nx % k]
            if bad:
                raise ValueError(f"k values {bad} do not divide nx={self.nx}; admissible: "
                                 f"{admissible_factors(self.nx)}")
        if self.ell < 3 or self.ell > self.r + 1:
            raise ValueError(f"ell must lie in [3, r+1], got {self.ell}")
        if self.h_scale <= 0:
            raise ValueError("h_scale must be positive")
        if self.precond not in PRECONDITIONERS:
            raise ValueError(f"unknown preconditioner {self.precond!r}")
        if self.rho <= 0 or self.c0 < 0 or self.cg_tol <= 0 or self.noise_modes < 1:
            raise ValueError("rho, cg_tol and noise_modes must be positive and c0 nonnegative")
        if self.scenario == "custom" and not self.moduli:
            raise ValueError("custom scenario needs a moduli block")
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))

    def dump(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)

    @property
    def h0(self):
        return 1.0 / self.nx

    def moduli_spec(self):
        if self.scenario in ("static", "frequency"):
            return ModuliSpec.single_bump()
        if self.scenario == "random":
            return ModuliSpec.random(n=self.n_bumps, seed=self.seed)
        m = self.moduli
        a0, b0 = float(m.get("alpha0", 22.0)), float(m.get("beta0", 2.0))
        if "random" in m:
            rnd = m["random"]
            return ModuliSpec.random(n=int(rnd.get("n", self.n_bumps)), seed=int(rnd.get("seed", self.seed)),
                                     alpha0=a0, beta0=b0)
        return ModuliSpec(a0, b0, _bumps_from_list(m.get("alpha_bumps", [])),
                          _bumps_from_list(m.get("beta_bumps", [])))

    def boundary_data(self):
        return BOUNDARY_PRESETS[self.boundary]()

    def space(self):
        return FeSpace(build_mesh(nx=self.nx), self.r)


def moduli_to_dict(spec):
    return {"alpha0": spec.alpha0, "beta0": spec.beta0, "alpha_bumps": _bumps_to_list(spec.alpha_bumps),
            "beta_bumps": _bumps_to_list(spec.beta_bumps)}


# Results --------------------------------------------------------------------------

@dataclass
class SweepRow:
    scenario: str
    delta: float
    k: int
    h: float
    err_rel_H1: float
    err_alpha_H1: float
    err_beta_H1: float
    min_detE: float
    cg_iters: int
    wall_time: float

    def as_tuple(self):
        return tuple(getattr(self, c) for c in CSV_COLUMNS)


@dataclass
class SweepResult:
    """One row per requested (delta, k) cell, delta-major. Failed cells keep their row with
    NaN errors and ``cg_iters = -1``; the reason is in ``details``."""

    rows: list = field(default_factory=list)
    details: list = field(default_factory=list)

    def errors(self):
        return np.array([r.err_rel_H1 for r in self.rows])

    def table(self):
        """Errors as a dict ``{delta: {k: err}}``."""
        out = {}
        for r in self.rows:
            out.setdefault(r.delta, {})[r.k] = r.err_rel_H1
        return out

    def report(self, config=None):
        rep = {"rows": [dict(zip(CSV_COLUMNS, r.as_tuple())) for r in self.rows], "runs": self.details}
        if config is not None:
            rep["config"] = config.to_dict()
        return rep


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(result, path):
    """Write the fixed 10-column table. Floats carry 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in result.rows:
            w.writerow([_fmt(v) for v in row.as_tuple()])
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if tuple(header) != CSV_COLUMNS:
            raise ValueError(f"unexpected CSV header {header}")
        rows = []
        for rec in rd:
            s, d, k, h, e, ea, eb, md, it, wt = rec
            rows.append(SweepRow(s, float(d), int(k), float(h), float(e), float(ea), float(eb), float(md),
                                 int(it), float(wt)))
    return SweepResult(rows)


# Forward data ---------------------------------------------------------------------

@dataclass
class ScenarioData:
    """Exact moduli and noise-free displacement fields of one configuration."""

    space: FeSpace
    material: object
    u1: object
    u2: object
    spec: ModuliSpec


def _forward_key(config):
    payload = {"moduli": moduli_to_dict(config.moduli_spec()), "nx": config.nx, "r": config.r,
               "omega": [config.omega1, config.omega2], "rho": config.rho, "boundary": config.boundary,
               "tol": config.forward_tol}
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def forward_fields(config):
    """Solve both forward problems, or load them from ``config.cache_dir``."""
    space = config.space()
    spec = config.moduli_spec()
    material = synthesize_moduli(spec, space, config.rho)
    cache = Path(config.cache_dir) if config.cache_dir else None
    paths = None
    if cache is not None:
        key = _forward_key(config)
        paths = [cache / f"forward-{key}-u{n}.fld" for n in (1, 2)]
        if all(p.exists() for p in paths):
            log.info("loading cached forward fields %s", key)
            return ScenarioData(space, material, read_field(paths[0], space), read_field(paths[1], space), spec)
    g1, g2 = config.boundary_data()
    u1 = solve_forward(material, config.omega1, g1, cg_tol=config.forward_tol)
    u2 = solve_forward(material, config.omega2, g2, cg_tol=config.forward_tol)
    if paths is not None:
        cache.mkdir(parents=True, exist_ok=True)
        write_field(u1, paths[0])
        write_field(u2, paths[1])
    return ScenarioData(space, material, u1, u2, spec)


# Runs -----------------------------------------------------------------------------

def _mesh_factors(config, delta):
    """(k1, k2, notes) for one noise level."""
    if not config.auto_h:
        return None
    if delta == 0:
        return 1, 1, ["noise-free: no regularization, k1 = k2 = 1"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ch = choose_mesh_sizes(delta, config.ell, 2, config.h0, config.nx, config.nx, scale=config.h_scale)
    return ch.k1, ch.k2, [str(w.message) for w in caught]


def _run_cell(config, data, lifting, noisy, delta, k1, k2, tag):
    """One reconstruction. Returns (row, detail)."""
    t0 = time.perf_counter()
    detail = {"delta": delta, "k1": k1, "k2": k2}
    try:
        res, gsd, system = reconstruct(noisy[0], noisy[1], lifting, k1, k2, config.omega1, config.omega2,
                                       config.rho, config.c0, "abort", config.cg_tol, config.precond)
    except (InvertibilityError, SolverError) as exc:
        detail.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        md = float(getattr(exc, "value", float("nan")))
        wall = time.perf_counter() - t0 if config.timing else 0.0
        nan = float("nan")
        return SweepRow(config.scenario, delta, k2, k2 * config.h0, nan, nan, nan, abs(md), -1, wall), detail, None
    mat = data.material
    err = _relative_pair(res, mat)
    ritz = min_ritz_value(system)
    detail.update(status="ok", residual=res.residual, min_ritz=ritz, sup_norms=gsd.sup_norms(),
                  invertibility={"min_abs_detE": gsd.report.min_abs_detE,
                                 "location": [float(c) for c in np.ravel(gsd.report.location)],
                                 "fraction_below": gsd.report.fraction_below})
    wall = time.perf_counter() - t0 if config.timing else 0.0
    row = SweepRow(config.scenario, delta, k2, k2 * config.h0, err[0], err[1], err[2],
                   float(gsd.report.min_abs_detE), int(res.iterations), wall)
    if config.save_fields and config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_field(res.alpha, out / f"{tag}-alpha.fld")
        write_field(res.beta, out / f"{tag}-beta.fld")
    return row, detail, res


def _relative_pair(res, mat):
    e_a, e_b = sobolev_sq(res.alpha - mat.alpha), sobolev_sq(res.beta - mat.beta)
    n_a, n_b = sobolev_sq(mat.alpha), sobolev_sq(mat.beta)
    num_a, num_b = e_a[0].sum() + e_a[1].sum(), e_b[0].sum() + e_b[1].sum()
    den_a, den_b = n_a[0].sum() + n_a[1].sum(), n_b[0].sum() + n_b[1].sum()
    total = float(np.sqrt((num_a + num_b) / (den_a + den_b)))
    return total, float(np.sqrt(num_a / den_a)), float(np.sqrt(num_b / den_b))


def run_scenario(config, data=None):
    """Forward solve (or cache hit), noise, differentiation, reconstruction and scoring
    for every requested (delta, k) cell."""
    config.validate()
    data = data or forward_fields(config)
    lifting = build_lifting(data.material.alpha, data.material.beta, data.space)
    result = SweepResult()
    for delta in config.deltas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            noisy = (add_noise(data.u1, delta, config.noise_modes), add_noise(data.u2, delta, config.noise_modes))
        auto = _mesh_factors(config, delta)
        cells = [(auto[0], auto[1])] if auto else [(config.k1 or k, k) for k in config.ks]
        for k1, k2 in cells:
            tag = f"{config.scenario}-d{delta:.3e}-k{k1}-{k2}"
            row, detail, _ = _run_cell(config, data, lifting, noisy, delta, k1, k2, tag)
            if auto:
                detail["notes"] = auto[2]
            log.info("delta=%g k1=%d k2=%d err=%.4g", delta, k1, k2, row.err_rel_H1)
            result.rows.append(row)
            result.details.append(detail)
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        emit_csv(result, out / "sweep.csv")
        (out / "report.json").write_text(json.dumps(_jsonable(result.report(config)), indent=2, sort_keys=True)
                                         + "\n")
    return result


def sweep_h(config, data=None):
    """Error against the coarsening factor at each noise level (fixed k list)."""
    return run_scenario(config.replace(auto_h=False), data)


def sweep_delta(config, data=None):
    """Error against the noise level, for a fixed k list or with automatic sizes."""
    return run_scenario(config, data)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


# Curve integration check ----------------------------------------------------------

DEFAULT_CURVES = (((0.0, 0.5), (0.5, 0.5)),
                  ((0.0, 0.5), (0.25, 0.85), (0.5, 0.5)))


@dataclass
class OdeCheck:
    delta: float
    endpoints: list
    exact: list
    rel_errors: list
    disagreement: float


def ode_check(config, curves=DEFAULT_CURVES, data=None, k=1):
    """Integrate the gradient system along each polyline for every noise level.

    Initial values come from the exact moduli at the common start point. The
    disagreement is the largest endpoint difference between any two curves.
    """
    config.validate()
    data = data or forward_fields(config)
    specs = [CurveSpec(tuple(tuple(p) for p in c)) for c in curves]
    start, end = specs[0].start, specs[0].end
    if any(np.any(c.start != start) or np.any(c.end != end) for c in specs):
        raise ValueError("curves must share start and end points")
    init = np.array([data.spec.alpha(*start), data.spec.beta(*start)], dtype=float)
    exact = np.array([data.spec.alpha(*end), data.spec.beta(*end)], dtype=float)
    out = []
    for delta in config.deltas:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AliasingWarning)
            u1 = add_noise(data.u1, delta, config.noise_modes)
            u2 = add_noise(data.u2, delta, config.noise_modes)
        sampler = GradientSystemSampler(u1, u2, k, k, config.omega1, config.omega2, config.rho, config.c0)
        ends = [integrate_ode(sampler, c, init) for c in specs]
        rel = [float(np.max(np.abs(e - exact)) / np.max(np.abs(exact))) for e in ends]
        dis = max(float(np.max(np.abs(a - b))) for i, a in enumerate(ends) for b in ends[i + 1:])
        out.append(OdeCheck(delta, [e.tolist() for e in ends], exact.tolist(), rel, dis))
    return out
