"""Angular uncertainty from fringe slope, the Heisenberg bound, and the violation criterion."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from ..detector_sim import CountRecord
from ..models import FringeModel
from .fringe_fit import FitReport

SIN_EPS = 0.05


class DegenerateGridError(ValueError):
    pass


@dataclass
class UncertaintyCurve:
    angles: np.ndarray
    poisson: np.ndarray
    measured: np.ndarray | None
    excluded: np.ndarray
    min_poisson: float
    min_measured: float | None
    argmin_poisson: float
    argmin_measured: float | None

    def included(self):
        return ~self.excluded

    def write_csv(self, path) -> None:
        """Rows for included angles only; excluded angles sit at fringe extrema."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("theta_deg", "dtheta_measured_deg", "dtheta_poisson_deg"))
            for i in np.flatnonzero(self.included()):
                meas = "" if self.measured is None else repr(float(self.measured[i]))
                w.writerow((repr(float(self.angles[i])), meas, repr(float(self.poisson[i]))))


def angle_spread(records: list[CountRecord], model: FringeModel | None = None) -> np.ndarray:
    """Per-angle sample standard deviation across aligned repeats.

    With ``model``, the spread of ``counts - model(abscissa)`` is used, which
    removes the slope contribution of per-run sub-sample angle shifts.
    """
    counts = np.array([r.coincidences for r in records], dtype=float)
    if counts.shape[0] < 2:
        raise ValueError("spread needs at least two repeats")
    if model is not None:
        counts = counts - np.array([model.rate(r.abscissa) for r in records])
    return counts.std(axis=0, ddof=1)


def slope_denominator(model: FringeModel, theta_deg) -> np.ndarray:
    """``A N l pi / 360 |sin(omega theta - C)|``, the fringe slope magnitude per degree."""
    return model.A * model.N * abs(model.ell) * math.pi / 360.0 * np.abs(np.sin(model.argument(theta_deg)))


def delta_theta(model: FringeModel, theta_deg, spread):
    """Angular uncertainty in degrees for count spread ``spread`` at ``theta_deg``."""
    return np.asarray(spread, dtype=float) / slope_denominator(model, theta_deg)


def uncertainty_curve(fit: FitReport | FringeModel, angles=None, spread=None,
                      eps: float = SIN_EPS) -> UncertaintyCurve:
    """Evaluate the slope-based uncertainty on ``angles``.

    ``spread`` is the per-angle count std (array), ``"poisson"`` or None.
    The Poisson curve uses ``sqrt(model rate)`` and is always computed.
    Angles with ``|sin| < eps`` are excluded.
    """
    model = fit.model if isinstance(fit, FitReport) else fit
    if angles is None:
        if not isinstance(fit, FitReport) or "angles" not in fit.extra:
            raise ValueError("no angle grid given")
        angles = fit.extra["angles"]
    angles = np.asarray(angles, dtype=float)
    s = np.abs(np.sin(model.argument(angles)))
    excluded = s < eps
    if excluded.all():
        raise DegenerateGridError("every angle sits within the fringe-extremum exclusion band")
    with np.errstate(divide="ignore", invalid="ignore"):
        poisson = delta_theta(model, angles, np.sqrt(model.rate(angles)))
        if spread is None:
            measured = None
        elif isinstance(spread, str):
            if spread != "poisson":
                raise ValueError(f"unknown spread mode {spread!r}")
            measured = poisson.copy()
        else:
            spread = np.asarray(spread, dtype=float)
            if spread.shape != angles.shape:
                raise ValueError("spread must match the angle grid")
            if (spread[~excluded] <= 0).any():
                raise ValueError("spread must be positive at included angles")
            measured = delta_theta(model, angles, spread)
    inc = np.flatnonzero(~excluded)
    ip = inc[np.argmin(poisson[inc])]
    if measured is not None:
        im = inc[np.argmin(measured[inc])]
        min_m, arg_m = float(measured[im]), float(angles[im])
    else:
        min_m = arg_m = None
    return UncertaintyCurve(angles, poisson, measured, excluded,
                            float(poisson[ip]), min_m, float(angles[ip]), arg_m)


def invert_fringe(counts, model: FringeModel, theta_near) -> np.ndarray:
    """Angle on the monotone fringe branch containing ``theta_near`` whose rate equals ``counts``."""
    counts = np.asarray(counts, dtype=float)
    cosv = np.clip(1 - 2 * (counts - model.B) / model.A, -1.0, 1.0)
    base = np.arccos(cosv)
    arg_near = float(model.argument(theta_near))
    j = math.floor(arg_near / (2 * math.pi))
    local = arg_near - 2 * math.pi * j
    arg = 2 * math.pi * j + (base if local <= math.pi else 2 * math.pi - base)
    return (arg + math.radians(model.C)) / model.omega


def heisenberg_limit(M: int, N: int, ell: int) -> float:
    """``1 / (sqrt(M) N l)`` in radians."""
    if M < 1 or N < 1 or ell < 1:
        raise ValueError("M, N and l must be >= 1")
    return 1.0 / (math.sqrt(M) * N * ell)


def matched_heisenberg_deg(model: FringeModel) -> float:
    """Heisenberg bound (degrees) for one bin holding the fringe-maximum count.

    ``M = ceil(A + B)`` is the most N-photon detections any bin of the fringe
    receives, so the bound is never larger than the one for the actual bin.
    """
    M = max(1, math.ceil(model.A + model.B))
    return math.degrees(heisenberg_limit(M, model.N, abs(model.ell)))


@dataclass(frozen=True)
class EfficiencyBudget:
    eta: float
    V: float
    N: int = 2

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError(f"efficiency must lie in (0, 1], got {self.eta}")
        if not 0 <= self.V <= 1:
            raise ValueError(f"visibility must lie in [0, 1], got {self.V}")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def figure(self) -> float:
        return self.eta**self.N * self.V**2 * self.N


def violation_figure(budget: EfficiencyBudget) -> tuple[float, bool]:
    f = budget.figure
    return f, f > 1.0


def threshold_efficiency(V: float, N: int = 2) -> float:
    """Efficiency at which ``eta^N V^2 N = 1``."""
    return (1.0 / (V**2 * N)) ** (1.0 / N)


def threshold_efficiency_root(V: float, N: int = 2) -> float:
    return optimize.brentq(lambda eta: eta**N * V**2 * N - 1.0, 1e-12, 1e3, xtol=1e-15, rtol=1e-15)


def klyshko_efficiency(coincidence_rate: float, singles1: float, singles2: float) -> float:
    """Heralding efficiency ``C / sqrt(S1 S2)``."""
    return coincidence_rate / math.sqrt(singles1 * singles2)
