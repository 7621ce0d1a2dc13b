"""Stochastic coincidence/singles records for static sweeps and accelerating rotations.

Mean coincidences per bin follow the fringe law with

    S = pair_rate * acquisition_time
    A = V * S
    B = (1 - V)/2 * S + s1 * s2 * coincidence_window * acquisition_time

so that ``A / (A + 2B) = V`` when accidentals vanish.  ``pair_rate`` is the
coincidence rate at the fringe maximum for ``V = 1``.

Randomness comes from numpy's PCG64 generator.  Run ``m`` of a seeded
experiment draws from ``SeedSequence([seed, m])``, so every run is
reproducible on its own and independent of how many runs are generated or
in which order.  Counts are exact Poisson draws up to a mean of
``NORMAL_THRESHOLD``; above it a rounded normal ``N(mu, mu)`` is used.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .models import ChirpModel, FringeModel, fringe_frequency

NORMAL_THRESHOLD = 1e6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    pair_rate: float
    acquisition_time: float
    singles_rates: tuple[float, float] = (0.0, 0.0)
    coincidence_window: float = 0.0
    visibility: float = 1.0
    N: int = 2
    ell: int = 1
    repeats: int = 1
    drift: float = 0.0
    rng_seed: int = 0
    random_start: bool = True

    def __post_init__(self):
        if not self.pair_rate > 0:
            raise ConfigError(f"pair_rate must be > 0, got {self.pair_rate}")
        if not self.acquisition_time > 0:
            raise ConfigError(f"acquisition_time must be > 0, got {self.acquisition_time}")
        if not 0.0 <= self.visibility <= 1.0:
            raise ConfigError(f"visibility must lie in [0, 1], got {self.visibility}")
        if self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats}")
        if self.N < 1:
            raise ConfigError(f"N must be >= 1, got {self.N}")
        if self.ell == 0:
            raise ConfigError("ell must be nonzero")
        if self.drift < 0:
            raise ConfigError(f"drift must be >= 0, got {self.drift}")
        if self.coincidence_window < 0 or min(self.singles_rates) < 0:
            raise ConfigError("singles rates and coincidence window must be >= 0")
        object.__setattr__(self, "singles_rates", tuple(float(s) for s in self.singles_rates))

    @property
    def accidental_rate(self) -> float:
        s1, s2 = self.singles_rates
        return s1 * s2 * self.coincidence_window

    @property
    def amplitude_counts(self) -> float:
        return self.pair_rate * self.acquisition_time

    @property
    def A(self) -> float:
        return self.visibility * self.amplitude_counts

    @property
    def B(self) -> float:
        return ((1 - self.visibility) / 2 * self.amplitude_counts
                + self.accidental_rate * self.acquisition_time)

    def fringe(self, C: float = 0.0) -> FringeModel:
        return FringeModel(self.A, self.B, C, self.N, self.ell)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singles_rates"] = list(self.singles_rates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "singles_rates" in d:
            d["singles_rates"] = tuple(d["singles_rates"])
        return cls(**d)


@dataclass
class CountRecord:
    """One simulated run.  ``kind`` is ``"angle_deg"`` or ``"time_s"``."""

    abscissa: np.ndarray
    coincidences: np.ndarray
    singles1: np.ndarray
    singles2: np.ndarray
    kind: str = "angle_deg"
    config: dict = field(default_factory=dict)
    offset: float = 0.0
    run_index: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.coincidences = np.asarray(self.coincidences, dtype=np.int64)
        self.singles1 = np.asarray(self.singles1, dtype=np.int64)
        self.singles2 = np.asarray(self.singles2, dtype=np.int64)
        n = len(self.abscissa)
        if not (len(self.coincidences) == len(self.singles1) == len(self.singles2) == n):
            raise ValueError("record columns differ in length")
        if n > 1 and not np.all(np.diff(self.abscissa) > 0):
            raise ValueError("abscissa must be strictly increasing")
        if (self.coincidences < 0).any() or (self.singles1 < 0).any() or (self.singles2 < 0).any():
            raise ValueError("counts must be nonnegative")

    def __len__(self):
        return len(self.abscissa)

    def replace_counts(self, coincidences, abscissa=None, **extra) -> "CountRecord":
        return CountRecord(
            self.abscissa if abscissa is None else abscissa,
            coincidences, self.singles1, self.singles2, self.kind,
            dict(self.config), self.offset, self.run_index, {**self.extra, **extra},
        )


def run_rng(seed: int, run_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, run_index])))


def sample_counts(mean, rng: np.random.Generator) -> np.ndarray:
    """Poisson counts; rounded normal approximation above ``NORMAL_THRESHOLD``."""
    mean = np.asarray(mean, dtype=float)
    big = mean > NORMAL_THRESHOLD
    out = rng.poisson(np.where(big, 0.0, mean)).astype(np.int64)
    if big.any():
        approx = np.rint(rng.normal(mean[big], np.sqrt(mean[big])))
        out[big] = np.maximum(approx, 0).astype(np.int64)
    return out


def apply_drift(C0: float, std_per_bin: float, bins: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian random walk of the fringe offset, starting at ``C0``."""
    if std_per_bin < 0:
        raise ValueError("drift std must be >= 0")
    steps = np.zeros(bins)
    if bins > 1 and std_per_bin > 0:
        steps[1:] = rng.normal(0.0, std_per_bin, bins - 1)
    return C0 + np.cumsum(steps)


def _singles(cfg: ExperimentConfig, bins: int, rng) -> tuple[np.ndarray, np.ndarray]:
    s1, s2 = cfg.singles_rates
    return (sample_counts(np.full(bins, s1 * cfg.acquisition_time), rng),
            sample_counts(np.full(bins, s2 * cfg.acquisition_time), rng))


def simulate_run(cfg: ExperimentConfig, angles, C0: float, run_index: int) -> CountRecord:
    angles = np.asarray(angles, dtype=float)
    if angles.size == 0:
        raise ConfigError("angle list is empty")
    rng = run_rng(cfg.rng_seed, run_index)
    start = C0 + (rng.uniform(0.0, 360.0) if cfg.random_start else 0.0)
    offsets = apply_drift(start, cfg.drift, angles.size, rng)
    model = cfg.fringe()
    arg = model.omega * angles - np.radians(offsets)
    mean = model.A / 2 * (1 - np.cos(arg)) + model.B
    coinc = sample_counts(mean, rng)
    s1, s2 = _singles(cfg, angles.size, rng)
    return CountRecord(angles, coinc, s1, s2, "angle_deg", cfg.to_dict(), float(start), run_index)


def simulate_sweep(cfg: ExperimentConfig, angles, C0: float = 0.0) -> list[CountRecord]:
    """``cfg.repeats`` independent runs over the same angle grid.

    Each run starts from its own fringe offset, uniform over one fringe
    period (when ``cfg.random_start``), and then drifts per bin.
    """
    return [simulate_run(cfg, angles, C0, m) for m in range(cfg.repeats)]


def chirp_times(cfg: ExperimentConfig, bins: int) -> np.ndarray:
    """Bin centres in seconds."""
    return (np.arange(bins) + 0.5) * cfg.acquisition_time


def simulate_chirp(cfg: ExperimentConfig, chirp: ChirpModel, bins: int | None = None,
                   run_index: int = 0) -> CountRecord:
    if chirp.N != cfg.N or chirp.ell != cfg.ell:
        raise ConfigError("chirp N/l disagree with the experiment config")
    if bins is None:
        bins = int(round(chirp.T / cfg.acquisition_time))
    if bins < 1:
        raise ConfigError("need at least one bin")
    if bins * cfg.acquisition_time > chirp.T * (1 + 1e-9):
        raise ConfigError(
            f"{bins} bins of {cfg.acquisition_time} s exceed the duration T={chirp.T} s"
        )
    rng = run_rng(cfg.rng_seed, run_index)
    t = chirp_times(cfg, bins)
    drift = np.radians(apply_drift(0.0, cfg.drift, bins, rng))
    mean = cfg.A / 2 * (1 - np.cos(chirp.phase(t) - drift)) + cfg.B
    coinc = sample_counts(mean, rng)
    s1, s2 = _singles(cfg, bins, rng)
    extra = {"chirp": chirp.to_dict()}
    return CountRecord(t, coinc, s1, s2, "time_s", cfg.to_dict(), chirp.theta0, run_index, extra)


def total_phase(chirp: ChirpModel, t: float) -> float:
    """Fringe phase accumulated between 0 and ``t``, excluding ``theta0``."""
    return float(chirp.phase(t) - chirp.theta0)


# CSV + JSON sidecar.  Floats are written with repr() so the round trip is exact.

CSV_HEADER = ("abscissa", "coincidences", "singles1", "singles2")


def _sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def write_record(record: CountRecord, path, manifest: str | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for a, c, s1, s2 in zip(record.abscissa, record.coincidences,
                                record.singles1, record.singles2):
            w.writerow((repr(float(a)), int(c), int(s1), int(s2)))
    side = {
        "format": "wavegear-record/1",
        "kind": record.kind,
        "config": record.config,
        "seed": record.config.get("rng_seed"),
        "offset": record.offset,
        "run_index": record.run_index,
        "extra": record.extra,
    }
    if manifest is not None:
        side["manifest"] = manifest
    _sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return path


def read_record(path) -> CountRecord:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ValueError(f"{path}: missing record header {CSV_HEADER}")
    body = rows[1:]
    side = json.loads(_sidecar_path(path).read_text())
    return CountRecord(
        np.array([float(r[0]) for r in body]),
        np.array([int(r[1]) for r in body]),
        np.array([int(r[2]) for r in body]),
        np.array([int(r[3]) for r in body]),
        side.get("kind", "angle_deg"), side.get("config", {}),
        float(side.get("offset", 0.0)), int(side.get("run_index", 0)),
        side.get("extra", {}),
    )


def mean_rate(records: list[CountRecord]) -> float:
    """Average coincidence rate per second over all bins of ``records``."""
    acq = records[0].config["acquisition_time"]
    total = sum(int(r.coincidences.sum()) for r in records)
    bins = sum(len(r) for r in records)
    return total / (bins * acq)


def fringe_period_deg(N: int, ell: int) -> float:
    return 2 * math.pi / fringe_frequency(N, ell)
