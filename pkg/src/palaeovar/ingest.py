"""
Reading, regridding and composing the inputs.

File formats (UTF-8, comma or tab delimited, ``#`` comment lines, mandatory
header):

Site file
    ``site_id, lat, lon, variable, anomaly_mean, anomaly_se[, method]`` with
    ``variable`` one of ALPHA, MI, MAP, MAT, MTWA, MTCO, GDD5; one row per
    (site, variable).  ``mean``/``se`` are accepted as column aliases.

Gridded file
    ``lat, lon, <value columns>``; one row per node of a complete
    rectangular lat/lon lattice.  Value columns are T01..T12 (degC),
    P01..P12 or PANN (mm), S01..S12 (cloud fraction).  -9999.0 marks a
    missing value.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .domain import N_OBS, OBS_NAMES, GridSpec, SiteObservationSet, site_to_cell
from .obs_operator import (DEFAULT_CONSTANTS, budyko_inverse, budyko_mu, budyko_mu_derivative,
                           site_observe)
from .scaling import P_FLOOR, floor_precipitation

log = logging.getLogger(__name__)

SENTINEL = -9999.0
SITE_VARIABLES = ("ALPHA", "MI", "MAP", "MAT", "MTWA", "MTCO", "GDD5")
T_COLS = tuple(f"T{k:02d}" for k in range(1, 13))
P_COLS = tuple(f"P{k:02d}" for k in range(1, 13))
S_COLS = tuple(f"S{k:02d}" for k in range(1, 13))


class IngestError(ValueError):
    pass


@dataclass
class InputReport:
    name: str
    rows_read: int = 0
    rejected: list = field(default_factory=list)   # (line or id, reason)
    events: list = field(default_factory=list)


@dataclass
class ValidationReport:
    inputs: list = field(default_factory=list)

    def new(self, name) -> InputReport:
        r = InputReport(str(name))
        self.inputs.append(r)
        return r

    def to_text(self) -> str:
        out = []
        for r in self.inputs:
            out.append(f"[{r.name}]")
            out.append(f"rows_read\t{r.rows_read}")
            out.append(f"rows_rejected\t{len(r.rejected)}")
            for where, why in r.rejected:
                out.append(f"rejected\t{where}\t{why}")
            for ev in r.events:
                out.append(f"event\t{ev}")
            out.append("")
        return "\n".join(out)


def _report(report, name):
    return (report or ValidationReport()).new(name)


def _read_table(path):
    """Rows of a delimited text file as (line_number, dict); delimiter sniffed."""
    text = Path(path).read_text(encoding="utf-8")
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise IngestError(f"{path}: no header row")
    header = lines[0][1]
    delim = "\t" if "\t" in header else ","
    reader = csv.reader(io.StringIO("\n".join(ln for _, ln in lines)), delimiter=delim)
    rows = list(reader)
    names = [h.strip() for h in rows[0]]
    out = []
    for (lineno, _), row in zip(lines[1:], rows[1:]):
        if len(row) != len(names):
            raise IngestError(f"{path}:{lineno}: expected {len(names)} fields, got {len(row)}")
        out.append((lineno, {k: v.strip() for k, v in zip(names, row)}))
    return names, out


def _float(rec, key, path, lineno):
    try:
        return float(rec[key])
    except (KeyError, ValueError):
        raise IngestError(f"{path}:{lineno}: bad or missing value for {key!r}") from None


# -- sites ---------------------------------------------------------------

def read_sites(path, grid: Optional[GridSpec] = None, anomalies=False, report=None,
               exclude_methods=(), omega=3.0) -> SiteObservationSet:
    """Parse a site file.

    With ``anomalies=False`` values are absolute: ALPHA rows keep alpha in
    the first slot and get their MI by inverting the Budyko curve; MI rows are
    mapped to alpha (errors by the curve's slope).  With ``anomalies=True``
    the moisture slot is kept raw until :func:`to_absolute`.  Sites outside
    ``grid`` and sites with no usable variable are dropped and reported.
    """
    rep = _report(report, path)
    names, rows = _read_table(path)
    need = {"site_id", "lat", "lon", "variable"}
    if not need <= set(names):
        raise IngestError(f"{path}: missing columns {sorted(need - set(names))}")
    mean_key = "anomaly_mean" if "anomaly_mean" in names else "mean"
    se_key = "anomaly_se" if "anomaly_se" in names else "se"
    if mean_key not in names or se_key not in names:
        raise IngestError(f"{path}: need anomaly_mean and anomaly_se columns")

    sites = {}
    seen = set()
    for lineno, rec in rows:
        rep.rows_read += 1
        sid, var = rec["site_id"], rec["variable"].upper()
        if var not in SITE_VARIABLES:
            raise IngestError(f"{path}:{lineno}: unknown variable {var!r}")
        if (sid, var) in seen:
            raise IngestError(f"{path}:{lineno}: duplicate row for site {sid!r} variable {var}")
        seen.add((sid, var))
        lat, lon = _float(rec, "lat", path, lineno), _float(rec, "lon", path, lineno)
        if not (-90 <= lat <= 90 and -180 <= lon < 180):
            raise IngestError(f"{path}:{lineno}: coordinates out of range ({lat}, {lon})")
        mean, se = _float(rec, mean_key, path, lineno), _float(rec, se_key, path, lineno)
        if not (np.isfinite(se) and se > 0):
            raise IngestError(f"{path}:{lineno}: standard error must be positive")
        if not np.isfinite(mean):
            raise IngestError(f"{path}:{lineno}: value must be finite")
        s = sites.setdefault(sid, {"lat": lat, "lon": lon, "vars": {}, "method": rec.get("method") or None})
        if (s["lat"], s["lon"]) != (lat, lon):
            raise IngestError(f"{path}:{lineno}: site {sid!r} has inconsistent coordinates")
        if "ALPHA" in s["vars"] and var == "MI" or "MI" in s["vars"] and var == "ALPHA":
            raise IngestError(f"{path}:{lineno}: site {sid!r} gives both ALPHA and MI")
        s["vars"][var] = (mean, se)

    ids, lats, lons, vals, ses, pres, mis, kinds, methods = ([] for _ in range(9))
    for sid, s in sites.items():
        if s["method"] and s["method"] in exclude_methods:
            rep.rejected.append((sid, f"method {s['method']} excluded"))
            continue
        if grid is not None and site_to_cell(s["lat"], s["lon"], grid) is None:
            rep.rejected.append((sid, "outside grid"))
            log.warning("site %s at (%g, %g) lies outside the grid; dropped", sid, s["lat"], s["lon"])
            continue
        v = np.full(N_OBS, np.nan)
        e = np.full(N_OBS, np.inf)
        p = np.zeros(N_OBS, bool)
        mi, kind = np.nan, None
        for var, (mean, se) in s["vars"].items():
            if var in ("ALPHA", "MI"):
                kind = var
                v[0], e[0] = mean, se
            else:
                k = OBS_NAMES.index(var)
                v[k], e[k] = mean, se
            p[0 if var in ("ALPHA", "MI") else OBS_NAMES.index(var)] = True
        if not p.any():
            rep.rejected.append((sid, "no variables"))
            log.warning("site %s has no variables; dropped", sid)
            continue
        if kind and not anomalies:
            v[0], e[0], mi = _moisture_slot(kind, v[0], e[0], omega)
        ids.append(sid); lats.append(s["lat"]); lons.append(s["lon"])
        vals.append(v); ses.append(e); pres.append(p); mis.append(mi); kinds.append(kind)
        methods.append(s["method"])
    if not ids:
        return SiteObservationSet.empty()
    return SiteObservationSet(ids, lats, lons, np.array(vals), np.array(ses), np.array(pres),
                              np.array(mis), kinds, methods)


def _moisture_slot(kind, value, se, omega=3.0):
    """(alpha, se_alpha, MI) from an absolute ALPHA or MI value."""
    if kind == "ALPHA":
        alpha = float(np.clip(value, 0.0, 1.0 - 1e-12))
        return alpha, se, float(budyko_inverse(alpha, omega))
    mi = max(float(value), 0.0)
    return float(budyko_mu(mi, omega)), se * float(budyko_mu_derivative(mi, omega)), mi


def _raw_moisture(sites, i):
    if sites.raw_moisture_kind[i] == "MI" and np.isfinite(sites.moisture_index[i]):
        return "MI", sites.moisture_index[i]
    return sites.raw_moisture_kind[i] or "ALPHA", sites.values[i, 0]


def write_sites(path, sites: SiteObservationSet, anomalies=False):
    """Write a site file readable by :func:`read_sites` (lossless for floats)."""
    lines = ["site_id,lat,lon,variable,anomaly_mean,anomaly_se,method"]
    for i, sid in enumerate(sites.site_ids):
        for k in range(N_OBS):
            if not sites.present[i, k]:
                continue
            name, val, se = OBS_NAMES[k], sites.values[i, k], sites.std_errors[i, k]
            if k == 0:
                name, val = _raw_moisture(sites, i) if not anomalies else (
                    sites.raw_moisture_kind[i] or "ALPHA", val)
                if name == "MI" and not anomalies:
                    se = se / float(budyko_mu_derivative(val))
            lines.append(",".join([sid, repr(float(sites.lats[i])), repr(float(sites.lons[i])), name,
                                   repr(float(val)), repr(float(se)), sites.methods[i] or ""]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def to_absolute(anom: SiteObservationSet, modern_obs, omega=3.0, report=None) -> SiteObservationSet:
    """Add modern observation-space values (N, 6; alpha in slot 0) to anomalies."""
    rep = _report(report, "anomaly composition")
    modern_obs = np.asarray(modern_obs, dtype=float).reshape(anom.N, N_OBS)
    v = anom.values.copy()
    e = anom.std_errors.copy()
    mi = np.full(anom.N, np.nan)
    for i in range(anom.N):
        for k in range(1, N_OBS):
            if anom.present[i, k]:
                v[i, k] += modern_obs[i, k]
        if anom.present[i, 1] and v[i, 1] < P_FLOOR:
            rep.events.append(f"{anom.site_ids[i]}: MAP {v[i, 1]:.6g} floored at {P_FLOOR}")
            v[i, 1] = P_FLOOR
        if anom.present[i, 5] and v[i, 5] < 0:
            rep.events.append(f"{anom.site_ids[i]}: GDD5 {v[i, 5]:.6g} floored at 0")
            v[i, 5] = 0.0
        if anom.present[i, 0]:
            kind = anom.raw_moisture_kind[i] or "ALPHA"
            a0 = modern_obs[i, 0]
            base = a0 if kind == "ALPHA" else float(budyko_inverse(min(a0, 1 - 1e-12), omega))
            v[i, 0], e[i, 0], mi[i] = _moisture_slot(kind, v[i, 0] + base, e[i, 0], omega)
    return SiteObservationSet(list(anom.site_ids), anom.lats, anom.lons, v, e, anom.present, mi,
                              list(anom.raw_moisture_kind), list(anom.methods))


# -- gridded fields ------------------------------------------------------

@dataclass
class GriddedField:
    """Named fields on a regular lattice; arrays have shape (nlat, nlon)."""

    lats: np.ndarray          # ascending
    lons: np.ndarray          # ascending
    values: dict

    def __getitem__(self, name):
        return self.values[name]

    def has(self, *names):
        return all(n in self.values for n in names)

    def stack(self, names) -> np.ndarray:
        return np.stack([self.values[n] for n in names], axis=-1)


def read_gridded(path, report=None) -> GriddedField:
    rep = _report(report, path)
    names, rows = _read_table(path)
    if names[:2] != ["lat", "lon"] or len(names) < 3:
        raise IngestError(f"{path}: header must start with lat, lon and name at least one value column")
    cols = names[2:]
    if len(set(cols)) != len(cols):
        raise IngestError(f"{path}: duplicate value columns")
    data = np.empty((len(rows), len(names)))
    for r, (lineno, rec) in enumerate(rows):
        for c, n in enumerate(names):
            data[r, c] = _float(rec, n, path, lineno)
    rep.rows_read = len(rows)
    lats, lons = np.unique(data[:, 0]), np.unique(data[:, 1])
    if lats.size * lons.size != len(rows):
        raise IngestError(f"{path}: rows do not form a complete rectangular lattice "
                          f"({len(rows)} rows for {lats.size} x {lons.size} nodes)")
    ii = np.searchsorted(lats, data[:, 0])
    jj = np.searchsorted(lons, data[:, 1])
    seen = np.zeros((lats.size, lons.size), bool)
    seen[ii, jj] = True
    if not seen.all():
        raise IngestError(f"{path}: duplicate lattice nodes")
    values = {}
    for c, n in enumerate(cols):
        arr = np.empty((lats.size, lons.size))
        arr[ii, jj] = data[:, c + 2]
        miss = arr == SENTINEL
        if miss.any():
            rep.events.append(f"{n}: {int(miss.sum())} missing value(s) (sentinel {SENTINEL})")
            arr[miss] = np.nan
        values[n] = arr
    return GriddedField(lats, lons, values)


def _fmt(v):
    return repr(float(v)) if np.isfinite(v) else repr(SENTINEL)


def write_gridded(path, lats, lons, columns: dict, blank=None):
    """Write one row per (lat, lon) pair; ``lats``/``lons`` are per-row arrays.

    ``blank`` maps column name to a boolean mask of entries written empty.
    """
    names = list(columns)
    lines = ["\t".join(["lat", "lon"] + names)]
    blank = blank or {}
    for i in range(len(lats)):
        row = [repr(float(lats[i])), repr(float(lons[i]))]
        for n in names:
            row.append("" if n in blank and blank[n][i] else _fmt(columns[n][i]))
        lines.append("\t".join(row))
    text = "\n".join(lines) + "\n"
    if path is None:
        return text
    Path(path).write_text(text, encoding="utf-8")
    return text


def bilinear_regrid(field: GriddedField, target: GridSpec, names=None, report=None) -> dict:
    """Bilinear interpolation of lattice fields to the target cell centres.

    Target points outside the lattice are clamped to its edge.
    """
    names = list(field.values) if names is None else list(names)
    if field.lats.size == 0 or field.lons.size == 0 or not names:
        raise IngestError("empty source field")
    lat = np.clip(target.lats, field.lats[0], field.lats[-1])
    lon = np.clip(target.lons, field.lons[0], field.lons[-1])
    clamped = int(np.sum((lat != target.lats) | (lon != target.lons)))
    if clamped:
        log.info("clamped %d target cell(s) to the source lattice edge", clamped)
        if report is not None:
            report.events.append(f"{clamped} target cell(s) clamped to source edge")
    pts = np.column_stack([lat, lon])
    out = {}
    for n in names:
        vals = field.values[n]
        if field.lats.size == 1 or field.lons.size == 1:
            out[n] = _degenerate_interp(field, vals, lat, lon)
            continue
        f = RegularGridInterpolator((field.lats, field.lons), vals, method="linear")
        out[n] = f(pts)
    return out


def _degenerate_interp(field, vals, lat, lon):
    if field.lats.size == 1 and field.lons.size == 1:
        return np.full(lat.size, vals[0, 0])
    if field.lats.size == 1:
        return np.interp(lon, field.lons, vals[0])
    return np.interp(lat, field.lats, vals[:, 0])


# -- prior composition ---------------------------------------------------

@dataclass
class BackgroundPrior:
    """Dimensional prior on a grid: means, variances and cloud fraction."""

    grid: GridSpec
    precip: np.ndarray            # (M,) mm/yr
    temperature: np.ndarray       # (M, 12) degC
    precip_var: np.ndarray        # (M,)
    temperature_var: np.ndarray   # (M, 12)
    cloud: np.ndarray             # (M, 12)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        M = self.grid.M
        self.precip = np.asarray(self.precip, dtype=float).reshape(M)
        self.temperature = np.asarray(self.temperature, dtype=float).reshape(M, 12)
        self.precip_var = np.asarray(self.precip_var, dtype=float).reshape(M)
        self.temperature_var = np.asarray(self.temperature_var, dtype=float).reshape(M, 12)
        self.cloud = np.clip(np.asarray(self.cloud, dtype=float).reshape(M, 12), 0.0, 1.0)
        for name in ("precip", "temperature", "precip_var", "temperature_var", "cloud"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise IngestError(f"prior {name} contains missing or non-finite values")
        if np.any(self.precip <= 0):
            raise IngestError("prior precipitation must be positive")
        if np.any(self.precip_var <= 0) or np.any(self.temperature_var <= 0):
            raise IngestError("prior variances must be positive")

    def state(self) -> np.ndarray:
        """Dimensional flat state (13M,)."""
        return np.column_stack([self.precip, self.temperature]).reshape(-1)

    def variance(self) -> np.ndarray:
        return np.column_stack([self.precip_var, self.temperature_var]).reshape(-1)

    def nondimensional(self, scaling):
        x = self.state()
        return scaling.nondim_state(x), scaling.nondim_state_variance(x, self.variance())


@dataclass(frozen=True)
class VarianceFloors:
    temperature: float = 0.25         # degC^2
    precip_fraction: float = 0.1      # floor is (fraction * mean)^2


def _annual_precip(field: GriddedField, name):
    if field.has(*P_COLS):
        return field.stack(P_COLS).sum(axis=-1), True
    if field.has("PANN"):
        return field["PANN"], False
    raise IngestError(f"{name}: needs P01..P12 or PANN columns")


def _on_grid(field, grid, names, report):
    r = bilinear_regrid(field, grid, names, report)
    return np.column_stack([r[n] for n in names])


def compose_prior(members, modern: GriddedField, grid: GridSpec, floors=VarianceFloors(),
                  allow_single_member=False, report=None) -> BackgroundPrior:
    """Ensemble-mean prior from (LGM, PI) member pairs and a modern baseline.

    Each member's anomaly ``LGM - PI`` is added to the modern baseline after
    regridding; mean and unbiased variance are taken across members.
    """
    rep = _report(report, "prior composition")
    if len(members) < 1:
        raise IngestError("at least one ensemble member is required")
    if len(members) == 1 and not allow_single_member:
        raise IngestError("a single member has no spread; set allow_single_member to use variance floors")
    if not modern.has(*T_COLS):
        raise IngestError("modern baseline needs T01..T12")
    mod_T = _on_grid(modern, grid, T_COLS, rep)
    mod_P, _ = _annual_precip(modern, "modern baseline")
    mod_P = bilinear_regrid(GriddedField(modern.lats, modern.lons, {"P": mod_P}), grid)["P"]

    ref = members[0][0]
    for i, pair in enumerate(members):
        for f in pair:
            if f.lats.shape != ref.lats.shape or f.lons.shape != ref.lons.shape or \
                    not (np.array_equal(f.lats, ref.lats) and np.array_equal(f.lons, ref.lons)):
                raise IngestError(f"member {i}: lattice differs from member 0; members must share one source grid")

    Ts, Ps, Ss = [], [], []
    for i, (lgm, pi) in enumerate(members):
        for f, tag in ((lgm, "LGM"), (pi, "PI")):
            if not f.has(*T_COLS):
                raise IngestError(f"member {i} {tag}: needs T01..T12")
        if not lgm.has(*S_COLS):
            raise IngestError(f"member {i} LGM: needs cloud fraction S01..S12")
        T = _on_grid(lgm, grid, T_COLS, rep) - _on_grid(pi, grid, T_COLS, rep) + mod_T
        P_l, _ = _annual_precip(lgm, f"member {i} LGM")
        P_p, _ = _annual_precip(pi, f"member {i} PI")
        P_l = bilinear_regrid(GriddedField(lgm.lats, lgm.lons, {"P": P_l}), grid)["P"]
        P_p = bilinear_regrid(GriddedField(pi.lats, pi.lons, {"P": P_p}), grid)["P"]
        Ts.append(T)
        Ps.append(P_l - P_p + mod_P)
        Ss.append(_on_grid(lgm, grid, S_COLS, rep))
    Ts, Ps, Ss = np.array(Ts), np.array(Ps), np.array(Ss)
    if any(np.isnan(a).any() for a in (Ts, Ps, Ss)):
        raise IngestError("missing values reach the target grid; check sentinel cells in the inputs")

    T_mean, P_mean = Ts.mean(axis=0), Ps.mean(axis=0)
    if len(members) > 1:
        T_var, P_var = Ts.var(axis=0, ddof=1), Ps.var(axis=0, ddof=1)
    else:
        T_var, P_var = np.zeros_like(T_mean), np.zeros_like(P_mean)

    P_mean, low = floor_precipitation(P_mean)
    if low.any():
        rep.events.append(f"{int(low.sum())} cell(s) with prior precipitation floored at {P_FLOOR} mm/yr")
    t_floor = floors.temperature
    p_floor = (floors.precip_fraction * P_mean) ** 2
    nt, np_ = int(np.sum(T_var < t_floor)), int(np.sum(P_var < p_floor))
    if nt or np_:
        rep.events.append(f"variance floored: {nt} temperature and {np_} precipitation value(s)")
        log.info("variance floored for %d temperature and %d precipitation values", nt, np_)
    T_var = np.maximum(T_var, t_floor)
    P_var = np.maximum(P_var, p_floor)
    cloud = Ss.mean(axis=0)
    if np.any((cloud < 0) | (cloud > 1)):
        rep.events.append("cloud fraction clamped to [0, 1]")
    return BackgroundPrior(grid, P_mean, T_mean, P_var, T_var, np.clip(cloud, 0, 1), list(rep.events))


def modern_state(modern: GriddedField, grid: GridSpec, report=None):
    """Dimensional (M, 13) modern baseline on the grid and its cloud (or None)."""
    T = _on_grid(modern, grid, T_COLS, report)
    P, _ = _annual_precip(modern, "modern baseline")
    P = bilinear_regrid(GriddedField(modern.lats, modern.lons, {"P": P}), grid)["P"]
    P, _ = floor_precipitation(P)
    cloud = _on_grid(modern, grid, S_COLS, report) if modern.has(*S_COLS) else None
    return np.column_stack([P, T]), cloud


def modern_observations(state, cloud, grid, cells, rad, consts=DEFAULT_CONSTANTS):
    """Dimensional observation-space values of the modern state at given cells."""
    sc = consts.scaling()
    X = sc.nondim_state(np.asarray(state)[cells])
    obs = site_observe(X, grid.lats[cells], np.asarray(cloud)[cells], rad, consts)
    return sc.redim_obs(obs)
