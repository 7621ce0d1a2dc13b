"""YAML experiment configs (schema version 1).

Every physical quantity carries its unit in the key name.  Layout::

    schema_version: 1
    name: fig2_l16
    kind: sweep            # sweep | chirp | gear
    experiment:            # sweep and chirp
      pair_rate_hz: 42700
      acq_time_s: 0.1
      singles_rates_hz: [500000, 490000]
      coincidence_window_s: 5.0e-10
      visibility: 0.976
      photon_number: 2
      charge: 16
      repeats: 20
      drift_std_deg: 0.0
      seed: 16
      random_start: true
    sweep:                 # kind: sweep
      start_deg: 0.0
      stop_deg: 360.0      # exclusive
      step_deg: 0.703125
      offset_deg: 0.0
    chirp:                 # kind: chirp
      theta0_rad: 0.0
      w0_deg_s: 0.0
      accel_deg_s2: 1.0
      duration_s: 10.0
    gear:                  # kind: gear
      charge: 16
      waist_m: 5.0e-4
      offset_m: [2.0e-3, 0.0]
      distance_m: 0.05
      grid_n: 1024
      extent_m: 8.0e-3
      wavelength_m: 1.064e-6
      theta_deg: [0, 5, 10, 20]
      convergence_sizes: [512, 1024, 2048]
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .detector_sim import ConfigError, ExperimentConfig
from .gear_optics import GearGeometry, GridSpec
from .models import ChirpModel

SCHEMA_VERSION = 1
KINDS = ("sweep", "chirp", "gear")

_EXPERIMENT = {
    # key: (ExperimentConfig field, type, required)
    "pair_rate_hz": ("pair_rate", float, True),
    "acq_time_s": ("acquisition_time", float, True),
    "singles_rates_hz": ("singles_rates", list, False),
    "coincidence_window_s": ("coincidence_window", float, False),
    "visibility": ("visibility", float, False),
    "photon_number": ("N", int, False),
    "charge": ("ell", int, True),
    "repeats": ("repeats", int, False),
    "drift_std_deg": ("drift", float, False),
    "seed": ("rng_seed", int, False),
    "random_start": ("random_start", bool, False),
}
_SWEEP = {"start_deg": (float, True), "stop_deg": (float, True), "step_deg": (float, True),
          "offset_deg": (float, False)}
_CHIRP = {"theta0_rad": (float, False), "w0_deg_s": (float, False),
          "accel_deg_s2": (float, True), "duration_s": (float, True)}
_GEAR = {"charge": (int, True), "waist_m": (float, False), "offset_m": (list, False),
         "distance_m": (float, False), "grid_n": (int, False), "extent_m": (float, False),
         "wavelength_m": (float, False), "theta_deg": (list, False),
         "convergence_sizes": (list, False)}


@dataclass
class RunConfig:
    name: str
    kind: str
    raw: dict
    text: str
    source: str

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode()).hexdigest()

    def experiment(self, seed: int | None = None) -> ExperimentConfig:
        exp = self.raw["experiment"]
        kwargs = {}
        for key, (fname, _, _) in _EXPERIMENT.items():
            if key in exp:
                kwargs[fname] = exp[key]
        if "singles_rates" in kwargs:
            kwargs["singles_rates"] = tuple(float(v) for v in kwargs["singles_rates"])
        if seed is not None:
            kwargs["rng_seed"] = seed
        return ExperimentConfig(**kwargs)

    def angles(self) -> np.ndarray:
        s = self.raw["sweep"]
        n = int(round((s["stop_deg"] - s["start_deg"]) / s["step_deg"]))
        return s["start_deg"] + s["step_deg"] * np.arange(n)

    def sweep_offset(self) -> float:
        return float(self.raw["sweep"].get("offset_deg", 0.0))

    def chirp(self) -> ChirpModel:
        c = self.raw["chirp"]
        exp = self.raw["experiment"]
        return ChirpModel.from_acceleration(
            c["accel_deg_s2"], c["duration_s"], w0=c.get("w0_deg_s", 0.0),
            theta0=c.get("theta0_rad", 0.0), N=exp.get("photon_number", 2), ell=exp["charge"])

    def gear(self) -> GearGeometry:
        g = self.raw["gear"]
        grid = GridSpec(g.get("grid_n", 1024), g.get("extent_m", 8e-3), g.get("wavelength_m", 1064e-9))
        return GearGeometry(
            ell=g["charge"], waist=g.get("waist_m", 5e-4),
            offset=tuple(g.get("offset_m", (2e-3, 0.0))),
            distance=g.get("distance_m", 0.05), grid=grid)

    def gear_thetas_deg(self) -> list[float]:
        return [float(v) for v in self.raw["gear"].get("theta_deg", [0.0, 5.0, 20.0])]


def _check_section(section: str, data, schema: dict, types_of=lambda v: v) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{section}: expected a mapping")
    unknown = set(data) - set(schema)
    if unknown:
        raise ConfigError(f"{section}: unknown field(s) {sorted(unknown)}")
    for key, spec in schema.items():
        typ, required = types_of(spec)
        if key not in data:
            if required:
                raise ConfigError(f"{section}.{key}: missing required field")
            continue
        val = data[key]
        if typ is float and isinstance(val, int) and not isinstance(val, bool):
            data[key] = float(val)
            continue
        if typ is bool and not isinstance(val, bool):
            raise ConfigError(f"{section}.{key}: expected true/false, got {val!r}")
        if typ is int and (isinstance(val, bool) or not isinstance(val, int)):
            raise ConfigError(f"{section}.{key}: expected an integer, got {val!r}")
        if typ in (float, list) and not isinstance(val, typ):
            raise ConfigError(f"{section}.{key}: expected {typ.__name__}, got {val!r}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: not valid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"kind: expected one of {KINDS}, got {kind!r}")
    allowed = {"schema_version", "name", "kind", "experiment", kind}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level field(s) {sorted(unknown)} for kind {kind!r}")
    if kind in ("sweep", "chirp"):
        if "experiment" not in raw:
            raise ConfigError("experiment: missing section")
        _check_section("experiment", raw["experiment"], _EXPERIMENT, lambda s: (s[1], s[2]))
    if kind not in raw:
        raise ConfigError(f"{kind}: missing section")
    schema = {"sweep": _SWEEP, "chirp": _CHIRP, "gear": _GEAR}[kind]
    _check_section(kind, raw[kind], schema, lambda s: s)
    cfg = RunConfig(str(raw.get("name", Path(source).stem)), kind, raw, text, source)
    # build once so physical validation errors surface at load time
    if kind == "sweep":
        cfg.experiment()
        if raw["sweep"]["step_deg"] <= 0 or cfg.angles().size < 1:
            raise ConfigError("sweep: step_deg must be > 0 and the range nonempty")
    elif kind == "chirp":
        cfg.experiment()
        cfg.chirp()
        if raw["experiment"]["acq_time_s"] > raw["chirp"]["duration_s"]:
            raise ConfigError("chirp.duration_s: shorter than one acquisition bin")
    else:
        if raw["gear"]["charge"] == 0:
            raise ConfigError("gear.charge: topological charge must be nonzero")
        try:
            cfg.gear()
        except ValueError as exc:
            raise ConfigError(f"gear: {exc}") from exc
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    return parse_config(text, str(path))


def preset_names() -> list[str]:
    root = resources.files("wavegear") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def preset_text(name: str) -> str:
    res = resources.files("wavegear") / "presets" / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return res.read_text()


def load_preset(name: str) -> RunConfig:
    return parse_config(preset_text(name), f"preset:{name}")
