"""
End-to-end runs behind the command-line front end.

Each run computes every output in memory first and only then writes the
bundle, one file at a time through a temporary name and an atomic rename.
A failure anywhere upstream therefore leaves no partial outputs behind.
"""
from __future__ import annotations

import hashlib
import logging
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .config import RunConfig, canonical_json
from .diagnostics import AnalysisCovariance, block_spread, gain, ls_study, lt_study
from .domain import DomainError, N_OBS, N_STATE, OBS_NAMES, STATE_NAMES
from .ingest import (IngestError, ValidationReport, compose_prior, modern_observations, modern_state,
                     read_gridded, read_sites, to_absolute, write_gridded)
from .obs_operator import DEFAULT_CONSTANTS
from .synthetic import build_problem, lt_problem, multisite_problem
from .twin import TwinConfig, run_twin

log = logging.getLogger(__name__)

GDD_BLANK = 1e-6
MANIFEST_VERSION = 1
STATE_COLS = STATE_NAMES
OBS_COLS = OBS_NAMES


@dataclass
class RunOutputs:
    command: str
    files: dict                      # name -> text
    telemetry: dict
    converged: bool = True
    timings: dict = field(default_factory=dict)


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _versions():
    return {"palaeovar": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pyyaml": yaml.__version__}


# -- loading ---------------------------------------------------------------

@dataclass
class LoadedInputs:
    grid: object
    prior: object
    sites: object
    report: ValidationReport


def load_inputs(cfg: RunConfig, consts=DEFAULT_CONSTANTS) -> LoadedInputs:
    cfg.check_inputs()
    report = ValidationReport()
    grid = cfg.grid()
    inp = cfg.inputs
    modern = read_gridded(inp["modern"], report)
    members = [(read_gridded(m["lgm"], report), read_gridded(m["pi"], report)) for m in inp["members"]]
    prior = compose_prior(members, modern, grid, cfg.variance_floors(),
                          allow_single_member=inp["allow_single_member"], report=report)
    sites = read_sites(inp["sites"], grid, anomalies=inp["sites_are_anomalies"], report=report,
                       exclude_methods=tuple(inp["exclude_methods"]), omega=consts.omega)
    if inp["sites_are_anomalies"] and sites.N:
        base, cloud = modern_state(modern, grid, report.new("modern baseline at sites"))
        cloud = prior.cloud if cloud is None else cloud
        cells = sites.cell_indices(grid)
        try:
            obs0 = modern_observations(base, cloud, grid, cells, cfg.radiation_model(), consts)
        except DomainError as exc:
            raise IngestError(f"modern baseline at a site cell is outside the observation domain: {exc}") from None
        sites = to_absolute(sites, obs0, consts.omega, report)
    log.info("loaded %d site(s) on a %d-cell grid", sites.N, grid.M)
    return LoadedInputs(grid, prior, sites, report)


def _input_hashes(cfg: RunConfig):
    paths = [cfg.inputs.get("sites"), cfg.inputs.get("modern")]
    for m in cfg.inputs.get("members", []):
        paths += [m["lgm"], m["pi"]]
    return {p: _sha256(Path(p).read_bytes()) for p in paths if p}


# -- tables ----------------------------------------------------------------

def _grid_table(grid, state, obs, blank=None):
    cols = {n: state[:, k] for k, n in enumerate(STATE_COLS)}
    cols.update({n: obs[:, k] for k, n in enumerate(OBS_COLS)})
    return write_gridded(None, grid.lats, grid.lons, cols, blank)


def _tsv(header, rows):
    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v)) if np.isfinite(v) else ("nan" if np.isnan(v) else repr(float(v)))
        return str(v)
    lines = ["\t".join(header)] + ["\t".join(fmt(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


# -- assimilate --------------------------------------------------------------

def assimilate(cfg: RunConfig, consts=DEFAULT_CONSTANTS) -> RunOutputs:
    t0 = time.perf_counter()
    loaded = load_inputs(cfg, consts)
    t_load = time.perf_counter()
    grid, prior, sites = loaded.grid, loaded.prior, loaded.sites
    rad = cfg.radiation_model()
    sc = consts.scaling()
    problem = build_problem(prior, sites, rad, consts)
    factor = problem.factor(cfg.covariance["L_s"], cfg.covariance["L_t"])
    res = problem.solve(factor, cfg.solver_config())
    t_solve = time.perf_counter()

    op = problem.operator
    H = op.jacobian(problem.x_b)
    K = gain(factor, H, problem.r_inv)
    A = AnalysisCovariance(K, H, factor)
    blocks = A.cell_blocks()
    var_nd = np.einsum("mii->mi", blocks)

    X_b = sc.redim_state(problem.x_b).reshape(grid.M, N_STATE)
    X_a = sc.redim_state(res.x_a).reshape(grid.M, N_STATE)
    with np.errstate(invalid="ignore"):
        h_b = op.observe_cells(problem.x_b)
        h_a = op.observe_cells(res.x_a)
        obs_sd_nd = block_spread(op.cell_jacobians(res.x_a), blocks)
        obs_sd_nd[np.isnan(h_a)] = np.nan
    Y_b, Y_a = sc.redim_obs(h_b), sc.redim_obs(h_a)
    _, obs_sd = sc.redim_obs(h_a, obs_sd_nd)
    state_sd = np.sqrt(np.maximum(sc.redim_state_variance(res.x_a, var_nd.reshape(-1)), 0.0)).reshape(grid.M, N_STATE)
    gdd_blank = (h_a[:, 5] < GDD_BLANK) & (obs_sd_nd[:, 5] < GDD_BLANK)
    blank = {"GDD5": gdd_blank}

    files = {
        "prior.tsv": _grid_table(grid, X_b, Y_b),
        "analysis.tsv": _grid_table(grid, X_a, Y_a, blank),
        "difference.tsv": _grid_table(grid, X_a - X_b, Y_a - Y_b, blank),
        "posterior_std.tsv": _grid_table(grid, state_sd, obs_sd, blank),
        "site_misfit.tsv": _site_misfit(sites, op, problem, res, sc),
        "validation_report.txt": loaded.report.to_text(),
    }
    telemetry = {"status": res.status, "converged": res.converged, "iterations": res.iterations,
                 "evaluations": res.evaluations, "gradient_norm": res.gradient_norm,
                 "cost_prior": res.cost_trace[0], "cost_analysis": res.cost,
                 "n_sites": sites.N, "n_cells": grid.M, "clipped_eigenvalues": factor.clipped,
                 "gdd5_blank_cells": int(gdd_blank.sum())}
    t_end = time.perf_counter()
    return RunOutputs("assimilate", files, telemetry, res.converged,
                      {"load_s": t_load - t0, "solve_s": t_solve - t_load, "diagnostics_s": t_end - t_solve})


def _site_misfit(sites, op, problem, res, sc):
    if sites.N == 0:
        return _tsv(["site_id", "lat", "lon", "variable"], [])
    yb = sc.redim_obs(op.apply(problem.x_b).reshape(-1, N_OBS))
    ya = sc.redim_obs(op.apply(res.x_a).reshape(-1, N_OBS))
    rows = []
    for i, sid in enumerate(sites.site_ids):
        for k in range(N_OBS):
            if not sites.present[i, k]:
                continue
            y, se = sites.values[i, k], sites.std_errors[i, k]
            rows.append((sid, float(sites.lats[i]), float(sites.lons[i]), OBS_NAMES[k], float(y), float(se),
                         float(yb[i, k]), float(ya[i, k]), float((y - yb[i, k]) / se), float((y - ya[i, k]) / se)))
    return _tsv(["site_id", "lat", "lon", "variable", "observed", "std_error", "prior", "analysis",
                 "z_prior", "z_analysis"], rows)


# -- tune --------------------------------------------------------------------

def _tag(v):
    return f"{v:g}"


def tune(cfg: RunConfig, consts=DEFAULT_CONSTANTS, which=("lt", "ls")) -> RunOutputs:
    t0 = time.perf_counter()
    rad = cfg.radiation_model()
    files, telemetry, converged = {}, {}, True
    if "lt" in which:
        entries = lt_study(lt_problem(rad, consts), cfg.tune["lt"], L_s=cfg.covariance["L_s"],
                           config=cfg.solver_config())
        months = [f"{m:02d}" for m in range(1, 13)]
        for e in entries:
            tag = _tag(e.L_t)
            files[f"lt_{tag}_monthly.tsv"] = _tsv(
                ["month", "prior", "analysis"],
                [(m, p, a) for m, p, a in zip(months, e.prior_monthly, e.analysis_monthly)])
            files[f"lt_{tag}_resolution.tsv"] = _tsv(
                ["row"] + list(STATE_NAMES), [(n, *e.resolution[i]) for i, n in enumerate(STATE_NAMES)])
            with np.errstate(divide="ignore"):
                logN = np.log10(np.abs(e.resolution))
            files[f"lt_{tag}_log10_resolution.tsv"] = _tsv(
                ["row"] + list(STATE_NAMES), [(n, *logN[i]) for i, n in enumerate(STATE_NAMES)])
            converged &= e.converged
        files["lt_summary.tsv"] = _tsv(["L_t", "roughness", "identity_distance", "converged"],
                                       [(e.L_t, e.roughness, e.closeness, str(e.converged).lower()) for e in entries])
        telemetry["lt"] = [{"L_t": e.L_t, "converged": e.converged} for e in entries]
    if "ls" in which:
        if cfg.inputs.get("sites"):
            loaded = load_inputs(cfg, consts)
            problem = build_problem(loaded.prior, loaded.sites, rad, consts)
            source = "inputs"
        else:
            problem = multisite_problem(cfg.grid(), cfg.tune["n_sites"], cfg.seed, rad, consts)
            source = "synthetic"
        study = ls_study(problem, cfg.tune["ls"], L_t=cfg.covariance["L_t"])
        files["ls_kappa.tsv"] = _tsv(["L_s_km", "kappa"], list(zip(study.L_s, study.kappa)))
        telemetry["ls"] = {"source": source, "spearman": study.trend, "increasing": study.increasing}
    return RunOutputs("tune", files, telemetry, converged, {"total_s": time.perf_counter() - t0})


# -- twin --------------------------------------------------------------------

def twin(cfg: RunConfig, consts=DEFAULT_CONSTANTS) -> RunOutputs:
    t0 = time.perf_counter()
    grid = cfg.twin_grid()
    tc = TwinConfig(fraction=cfg.twin["fraction"], noise=cfg.twin["noise"],
                    L_s=cfg.covariance["L_s"], L_t=cfg.covariance["L_t"])
    rows, summary, converged = [], [], True
    for seed in range(cfg.seed, cfg.seed + cfg.twin["n_seeds"]):
        r = run_twin(grid, seed, tc, rad=cfg.radiation_model(), consts=consts, solver=cfg.solver_config())
        for row in r.rows():
            rows.append((*row, str(bool(row[4] < row[3])).lower()))
        improved = bool(np.all(r.obs_rmse_analysis < r.obs_rmse_prior))
        summary.append((r.seed, r.n_sites, str(r.converged).lower(), r.iterations, str(improved).lower()))
        converged &= r.converged
    files = {
        "twin_report.tsv": _tsv(["seed", "kind", "variable", "rmse_prior", "rmse_analysis", "improved"], rows),
        "twin_summary.tsv": _tsv(["seed", "n_sites", "converged", "iterations", "obs_all_improved"], summary),
    }
    telemetry = {"n_cells": grid.M, "seeds": [s[0] for s in summary], "converged": converged}
    return RunOutputs("twin", files, telemetry, converged, {"total_s": time.perf_counter() - t0})


# -- validate ----------------------------------------------------------------

def validate(cfg: RunConfig, consts=DEFAULT_CONSTANTS) -> RunOutputs:
    loaded = load_inputs(cfg, consts)
    return RunOutputs("validate", {"validation_report.txt": loaded.report.to_text()},
                      {"n_sites": loaded.sites.N, "n_cells": loaded.grid.M}, True)


# -- writing -----------------------------------------------------------------

def manifest(cfg: RunConfig, out: RunOutputs) -> str:
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "command": out.command,
        "config": cfg.to_mapping(),
        "versions": _versions(),
        "inputs": _input_hashes(cfg) if out.command in ("assimilate", "validate") or
        (out.command == "tune" and cfg.inputs.get("sites")) else {},
        "telemetry": out.telemetry,
        "outputs": {k: _sha256(v.encode("utf-8")) for k, v in sorted(out.files.items())},
    }
    return canonical_json(doc)


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bundle(cfg: RunConfig, out: RunOutputs) -> Path:
    """Write outputs, the manifest and (separately) wall-clock timings."""
    outdir = Path(cfg.output)
    outdir.mkdir(parents=True, exist_ok=True)
    files = dict(out.files)
    files["manifest.json"] = manifest(cfg, out)
    files["timings.json"] = canonical_json({k: round(v, 6) for k, v in out.timings.items()})
    written = []
    try:
        for name in sorted(files):
            target = outdir / name
            _atomic_write(target, files[name])
            written.append(target)
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return outdir
