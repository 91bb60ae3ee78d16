"""Experiment orchestration: refinement study and interface sweep.

CSV schemas (each file starts with a ``# locmodfe <name> schema vN`` line):

``example1.csv``
    level, patches, dofs, basis, solver, iterations, converged, l2_error,
    h1_error, l2_rate, h1_rate
``example2.csv``
    k, y_offset, basis, solver, iterations, converged
``stats_k<k>.csv``
    k, placement, area_max, area_min, area_ratio, edge_max, edge_min,
    max_aspect, max_angle

Rates compare a level with the previous one of the same (basis, solver)
pair and are empty on the first level.  ``basis`` ``standard`` uses the
standard node placement with the nodal basis, ``hierarchical`` the
hierarchical placement with the hierarchical basis.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import patch_mesh as pm
from . import postprocess, solvers, system
from .exceptions import NotConverged
from .problems import InterfaceProblem
from .ref_fem import HIERARCHICAL, STANDARD

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
BASES = (STANDARD, HIERARCHICAL)
STATS_K = (0, 10, 50, 990)
MAX_LEVEL = 8

EXAMPLE1_COLUMNS = ("level", "patches", "dofs", "basis", "solver", "iterations", "converged",
                    "l2_error", "h1_error", "l2_rate", "h1_rate")
EXAMPLE2_COLUMNS = ("k", "y_offset", "basis", "solver", "iterations", "converged")
STATS_COLUMNS = ("k", "placement", "area_max", "area_min", "area_ratio", "edge_max",
                 "edge_min", "max_aspect", "max_angle")


@dataclass(frozen=True)
class RunConfig:
    test_case: int = 1
    min_level: int = 0
    max_level: int = 4
    basis: str = "both"
    solvers: tuple = (solvers.CG, solvers.DPCG, solvers.SSOR)
    n_sweep: int = 1000
    stride: int = 10
    sweep_level: int = 4
    kappa1: float = 0.1
    kappa2: float = 1.0
    out: str = "results"
    vtk_every: int = 0
    flux_jump: bool = False
    omega: float = 1.2
    tol: float = 1e-12
    workers: int = 1
    export_matrices: bool = False

    def __post_init__(self):
        if self.test_case not in (1, 2):
            raise ValueError("test_case must be 1 or 2")
        if not 0 <= self.min_level <= self.max_level <= MAX_LEVEL:
            raise ValueError(f"levels must satisfy 0 <= min <= max <= {MAX_LEVEL}")
        if not 0 <= self.sweep_level <= MAX_LEVEL:
            raise ValueError(f"sweep level must lie in [0, {MAX_LEVEL}]")
        if self.basis not in ("both",) + BASES:
            raise ValueError("basis must be standard, hierarchical or both")
        if self.stride < 1 or self.n_sweep < 1:
            raise ValueError("stride and n_sweep must be >= 1")
        for s in self.solvers:
            if s not in (solvers.CG, solvers.DPCG, solvers.SSOR):
                raise ValueError(f"unknown solver {s!r}")
        if self.vtk_every < 0 or self.workers < 1:
            raise ValueError("vtk_every must be >= 0 and workers >= 1")

    @property
    def bases(self):
        return BASES if self.basis == "both" else (self.basis,)

    def solver_config(self, method):
        return solvers.SolverConfig(method, abs_tolerance=self.tol, omega=self.omega,
                                    raise_on_failure=True)

    def problem(self, y_offset=0.0):
        return InterfaceProblem(kappa1=self.kappa1, kappa2=self.kappa2, y_offset=y_offset)


# ---------------------------------------------------------------- parameters

def _parse_bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def parse_levels(text):
    """``"a..b"`` or ``"a"`` to ``(a, b)``."""
    parts = str(text).split("..")
    if len(parts) == 1:
        lvl = int(parts[0])
        return lvl, lvl
    if len(parts) != 2:
        raise ValueError(f"bad level range {text!r}")
    return int(parts[0]), int(parts[1])


def normalize_params(raw: dict) -> dict:
    """Convert string values of a parameter mapping to RunConfig field types."""
    out = {}
    types = {f.name: f.type for f in fields(RunConfig)}
    for key, val in raw.items():
        key = key.strip().replace("-", "_")
        if val is None:
            continue
        if key == "levels":
            out["min_level"], out["max_level"] = parse_levels(val)
        elif key == "level":
            out["sweep_level"] = int(val)
        elif key == "solvers":
            items = val if isinstance(val, (list, tuple)) else str(val).split(",")
            out["solvers"] = tuple(s.strip().lower() for s in items if s.strip())
        elif key in ("flux_jump", "export_matrices"):
            out[key] = val if isinstance(val, bool) else _parse_bool(val)
        elif key in types:
            t = types[key]
            if t in ("int", int):
                out[key] = int(val)
            elif t in ("float", float):
                out[key] = float(val)
            else:
                out[key] = str(val)
        else:
            raise ValueError(f"unknown parameter {key!r}")
    return out


def read_param_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read parameter file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        k, v = line.split("=", 1)
        raw[k.strip()] = v.strip()
    return normalize_params(raw)


# ------------------------------------------------------------------- helpers

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, name, columns, rows):
    buf = io.StringIO()
    buf.write(f"# locmodfe {name} schema v{SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    path = Path(path)
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path):
    """Rows of a CSV written by :func:`write_csv` as dicts of strings."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def _solve(sysm, method, config):
    try:
        x, rep = solvers.solve(sysm.A, sysm.b, config.solver_config(method), sysm.x0)
        return x, rep.iterations, True
    except NotConverged as exc:
        log.warning("%s did not converge: %s", method, exc)
        return exc.x, exc.report.iterations, False


def _out_dir(config):
    d = Path(config.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ----------------------------------------------------------------- example 1

def run_example1(config: RunConfig):
    """Refinement study; returns the row dicts and writes ``example1.csv``."""
    out = _out_dir(config)
    problem = config.problem()
    rows = []
    prev = {}
    for level in range(config.min_level, config.max_level + 1):
        mesh = pm.PatchMesh(level)
        dofh = system.DofHandler(mesh)
        for basis in config.bases:
            geom = pm.build_geometry(mesh, problem.level_set, basis)
            sub = pm.extract_subcells(geom)
            sysm = system.build_system(geom, problem, basis, config.flux_jump, dofh, sub)
            if config.export_matrices:
                system.export_matrix_market(out / f"matrix_l{level}_{basis}.mtx", sysm.A,
                                            comment=f"level {level} basis {basis}")
            for method in config.solvers:
                x, its, ok = _solve(sysm, method, config)
                u = sysm.nodal(x)
                l2 = postprocess.integrate_difference_norms(geom, u, problem, postprocess.L2)
                h1 = postprocess.integrate_difference_norms(geom, u, problem, postprocess.H1SEMI)
                key = (basis, method)
                l2r = h1r = None
                if key in prev:
                    l2r = math.log2(prev[key][0] / l2)
                    h1r = math.log2(prev[key][1] / h1)
                prev[key] = (l2, h1)
                rows.append(dict(level=level, patches=mesh.n_patches, dofs=dofh.n_dofs,
                                 basis=basis, solver=method, iterations=its, converged=ok,
                                 l2_error=l2, h1_error=h1, l2_rate=l2r, h1_rate=h1r))
                log.info("level %d %s %s: %d its, L2 %.3e H1 %.3e", level, basis, method,
                         its, l2, h1)
            if config.vtk_every and (level - config.min_level) % config.vtk_every == 0:
                u = sysm.nodal(x) if config.solvers else None
                postprocess.plot_vtk(out / f"solution_l{level}_{basis}.vtk", geom,
                                     u, sub, title=f"level {level} {basis}")
    write_csv(out / "example1.csv", "example1", EXAMPLE1_COLUMNS, rows)
    return rows


# ----------------------------------------------------------------- example 2

def sweep_offsets(config: RunConfig):
    return list(range(0, config.n_sweep, config.stride))


def y_offset(k, n_sweep, h_patch):
    return k / n_sweep * h_patch


def _sweep_point(args):
    config, k = args
    mesh = pm.PatchMesh(config.sweep_level)
    dofh = system.DofHandler(mesh)
    yo = y_offset(k, config.n_sweep, mesh.h_patch)
    problem = config.problem(yo)
    rows = []
    for basis in config.bases:
        geom = pm.build_geometry(mesh, problem.level_set, basis)
        sub = pm.extract_subcells(geom)
        sysm = system.build_system(geom, problem, basis, config.flux_jump, dofh, sub)
        for method in config.solvers:
            x, its, ok = _solve(sysm, method, config)
            rows.append(dict(k=k, y_offset=yo, basis=basis, solver=method,
                             iterations=its, converged=ok))
        if config.vtk_every and (k // config.stride) % config.vtk_every == 0:
            u = sysm.nodal(x) if config.solvers else None
            postprocess.plot_vtk(Path(config.out) / f"solution_k{k}_{basis}.vtk", geom, u, sub,
                                 title=f"k {k} {basis}")
    return rows


def mesh_statistics_row(mesh, k, n_sweep, placement, radius=0.5):
    """Sub-cell statistics at sweep position ``k``."""
    ls = InterfaceProblem(y_offset=y_offset(k, n_sweep, mesh.h_patch), radius=radius).level_set
    geom = pm.build_geometry(mesh, ls, placement)
    sub = pm.extract_subcells(geom)
    st = pm.mesh_statistics(sub)
    ang = pm.triangle_angles(sub.points, sub.triangles)
    row = dict(k=k, placement=placement, **st)
    row["max_angle"] = float(ang.max()) if ang.size else 90.0
    return row


def run_example2(config: RunConfig):
    """Interface sweep; returns ``(rows, stats)`` and writes the CSV files."""
    out = _out_dir(config)
    jobs = [(config, k) for k in sweep_offsets(config)]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_sweep_point, jobs))
    else:
        parts = [_sweep_point(j) for j in jobs]
    rows = sorted((r for p in parts for r in p), key=lambda r: r["k"])
    write_csv(out / "example2.csv", "example2", EXAMPLE2_COLUMNS, rows)

    mesh = pm.PatchMesh(config.sweep_level)
    stats = {}
    for k in STATS_K:
        if k >= config.n_sweep:
            continue
        stats[k] = [mesh_statistics_row(mesh, k, config.n_sweep, b) for b in config.bases]
        write_csv(out / f"stats_k{k}.csv", f"stats_k{k}", STATS_COLUMNS, stats[k])
    return rows, stats


def run(config: RunConfig):
    if config.test_case == 1:
        return run_example1(config)
    return run_example2(config)


def merge_config(file_params: dict | None, cli_params: dict | None) -> RunConfig:
    """Parameter file values overridden by CLI values."""
    merged = dict(file_params or {})
    merged.update({k: v for k, v in (cli_params or {}).items() if v is not None})
    return RunConfig(**merged)


__all__ = ["RunConfig", "run", "run_example1", "run_example2", "read_param_file",
           "merge_config", "parse_levels", "sweep_offsets", "mesh_statistics_row",
           "write_csv", "read_csv"]
