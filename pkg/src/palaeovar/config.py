"""
Run configuration: a YAML (or JSON) mapping with the layout below.  Relative
input paths resolve against the config file's directory; a relative output
directory resolves against the working directory.

.. code-block:: yaml

    region:
      preset: southern-europe-lgm     # or lat_min/lat_max/lon_min/lon_max
      resolution: 2.0
    inputs:
      sites: sites.csv
      sites_are_anomalies: true
      exclude_methods: []
      modern: modern.tsv
      members:
        - {lgm: m1_lgm.tsv, pi: m1_pi.tsv}
      allow_single_member: false
    covariance: {L_s: 400.0, L_t: 1.0}
    solver: {memory: 10, max_iterations: 500, gradient_norm_tolerance: 1.0e-6}
    radiation: {model: constant, value: 100.0}   # or {model: davis2016, elevation: 0}
    floors: {temperature: 0.25, precip_fraction: 0.1}
    output: out
    seed: 0
    tune: {lt: [0.1, 1, 2], ls: [100, 200, 300, 400, 500, 600, 700, 800]}
    twin: {region: {...}, fraction: 0.3, noise: 0.05, n_seeds: 10}

A manifest written by a previous run can be passed as the config; its
``config`` entry is used.
"""
from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .domain import GridSpec
from .ingest import VarianceFloors
from .radiation import get_radiation_model
from .solver import SolverConfig

OUTPUT_ENV = "PALAEOVAR_OUTPUT_DIR"

REGION_PRESETS = {
    "southern-europe-lgm": dict(lat_min=30.0, lat_max=50.0, lon_min=-10.0, lon_max=50.0),
    "twin-10x10": dict(lat_min=30.0, lat_max=50.0, lon_min=0.0, lon_max=20.0),
}
DEFAULT_LS_SWEEP = [100.0 * k for k in range(1, 9)]
DEFAULT_LT_SWEEP = [0.1, 1.0, 2.0]


class ConfigError(ValueError):
    pass


def _region(d, default_preset):
    d = dict(d or {})
    preset = d.pop("preset", None if {"lat_min", "lat_max", "lon_min", "lon_max"} <= set(d) else default_preset)
    res = float(d.pop("resolution", 2.0))
    if preset and preset not in REGION_PRESETS:
        raise ConfigError(f"unknown region preset {preset!r}")
    bounds = dict(REGION_PRESETS[preset]) if preset else {}
    for k in ("lat_min", "lat_max", "lon_min", "lon_max"):
        if k in d:
            bounds[k] = float(d.pop(k))
    if d:
        raise ConfigError(f"unknown region keys {sorted(d)}")
    if set(bounds) != {"lat_min", "lat_max", "lon_min", "lon_max"}:
        raise ConfigError("region needs a preset or all four bounds")
    out = {"resolution": res, **{k: bounds[k] for k in sorted(bounds)}}
    if preset:
        out["preset"] = preset
    return out


def _grid(region):
    try:
        return GridSpec.from_bounds(region["lat_min"], region["lat_max"], region["lon_min"],
                                    region["lon_max"], region["resolution"])
    except ValueError as exc:
        raise ConfigError(f"bad region: {exc}") from None


def _floats(xs, name):
    try:
        vals = [float(v) for v in xs]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of numbers") from None
    if not vals:
        raise ConfigError(f"{name} sweep list is empty")
    if any(not v > 0 for v in vals):
        raise ConfigError(f"{name} values must be positive")
    return vals


@dataclass
class RunConfig:
    region: dict
    covariance: dict
    solver: dict
    radiation: dict
    floors: dict
    output: str
    seed: int = 0
    inputs: dict = field(default_factory=dict)
    tune: dict = field(default_factory=dict)
    twin: dict = field(default_factory=dict)

    # -- construction ------------------------------------------------------
    @classmethod
    def from_mapping(cls, d: dict, base_dir=".") -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping")
        d = copy.deepcopy(d)
        if "config" in d and "manifest_version" in d:
            d = d["config"]
        base = Path(base_dir)
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")

        resolve = lambda p: str((base / p).resolve()) if p is not None else None
        inputs = dict(d.get("inputs") or {})
        for key in ("sites", "modern"):
            if inputs.get(key) is not None:
                inputs[key] = resolve(inputs[key])
        members = []
        for m in inputs.get("members") or []:
            if not isinstance(m, dict) or set(m) != {"lgm", "pi"}:
                raise ConfigError("each ensemble member needs exactly 'lgm' and 'pi' paths")
            members.append({"lgm": resolve(m["lgm"]), "pi": resolve(m["pi"])})
        inputs["members"] = members
        inputs["sites_are_anomalies"] = bool(inputs.get("sites_are_anomalies", True))
        inputs["allow_single_member"] = bool(inputs.get("allow_single_member", False))
        inputs["exclude_methods"] = [str(s) for s in inputs.get("exclude_methods") or []]
        unknown = set(inputs) - {"sites", "modern", "members", "sites_are_anomalies",
                                 "allow_single_member", "exclude_methods"}
        if unknown:
            raise ConfigError(f"unknown inputs keys {sorted(unknown)}")

        cov = {"L_s": 400.0, "L_t": 1.0, **(d.get("covariance") or {})}
        cov = {k: float(v) for k, v in cov.items()}
        if set(cov) != {"L_s", "L_t"} or not (cov["L_s"] > 0 and cov["L_t"] > 0):
            raise ConfigError("covariance needs positive L_s and L_t only")

        solver = dict(d.get("solver") or {})
        try:
            SolverConfig(**solver)
        except TypeError as exc:
            raise ConfigError(f"bad solver section: {exc}") from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

        rad = dict(d.get("radiation") or {"model": "constant"})
        try:
            get_radiation_model(rad.get("model", "constant"), **{k: v for k, v in rad.items() if k != "model"})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad radiation section: {exc}") from None
        rad.setdefault("model", "constant")

        floors = {"temperature": 0.25, "precip_fraction": 0.1, **(d.get("floors") or {})}
        try:
            VarianceFloors(**floors)
        except TypeError as exc:
            raise ConfigError(f"bad floors section: {exc}") from None
        if not (floors["temperature"] > 0 and floors["precip_fraction"] > 0):
            raise ConfigError("variance floors must be positive")

        tune = dict(d.get("tune") or {})
        tune["lt"] = _floats(tune.get("lt", DEFAULT_LT_SWEEP), "tune.lt")
        tune["ls"] = _floats(tune.get("ls", DEFAULT_LS_SWEEP), "tune.ls")
        tune["n_sites"] = int(tune.get("n_sites", 12))
        if set(tune) - {"lt", "ls", "n_sites"}:
            raise ConfigError(f"unknown tune keys {sorted(set(tune) - {'lt', 'ls', 'n_sites'})}")

        twin = dict(d.get("twin") or {})
        twin_region = _region(twin.pop("region", None), "twin-10x10")
        parsed = {"region": twin_region, "fraction": float(twin.pop("fraction", 0.3)),
                  "noise": float(twin.pop("noise", 0.05)), "n_seeds": int(twin.pop("n_seeds", 10))}
        if twin:
            raise ConfigError(f"unknown twin keys {sorted(twin)}")
        twin = parsed
        if twin["n_seeds"] < 1:
            raise ConfigError("twin.n_seeds must be at least 1")

        try:
            seed = int(d.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        out = str(Path(d.get("output", "palaeovar-output")).resolve())
        return cls(region=_region(d.get("region"), "southern-europe-lgm"), covariance=cov, solver=solver,
                   radiation=rad, floors=floors, output=out, seed=seed, inputs=inputs,
                   tune=tune, twin=twin)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from None
        return cls.from_mapping(data or {}, path.parent)

    # -- use -------------------------------------------------------------
    def with_overrides(self, output=None, seed=None) -> "RunConfig":
        c = copy.deepcopy(self)
        env = os.environ.get(OUTPUT_ENV)
        if output is not None:
            c.output = str(Path(output).resolve())
        elif env:
            c.output = str(Path(env).resolve())
        if seed is not None:
            c.seed = int(seed)
        return c

    def to_mapping(self) -> dict:
        return {f.name: copy.deepcopy(getattr(self, f.name)) for f in fields(self)}

    def grid(self) -> GridSpec:
        return _grid(self.region)

    def twin_grid(self) -> GridSpec:
        return _grid(self.twin["region"])

    def solver_config(self) -> SolverConfig:
        return SolverConfig(**self.solver)

    def radiation_model(self):
        kw = {k: v for k, v in self.radiation.items() if k != "model"}
        return get_radiation_model(self.radiation["model"], **kw)

    def variance_floors(self) -> VarianceFloors:
        return VarianceFloors(**self.floors)

    def check_inputs(self):
        """Raise ConfigError unless every referenced input path exists."""
        need = [("inputs.sites", self.inputs.get("sites")), ("inputs.modern", self.inputs.get("modern"))]
        for i, m in enumerate(self.inputs.get("members", [])):
            need += [(f"inputs.members[{i}].lgm", m["lgm"]), (f"inputs.members[{i}].pi", m["pi"])]
        for name, p in need:
            if p is None:
                raise ConfigError(f"{name} is required")
            if not Path(p).is_file():
                raise ConfigError(f"{name}: file not found: {p}")
        if not self.inputs.get("members"):
            raise ConfigError("inputs.members must list at least one ensemble member")


def canonical_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"
