"""Parameter containers for the static fringe and the accelerating (chirped) fringe."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


def fringe_frequency(n: int, ell: int) -> float:
    """Fringe phase per mechanical degree, ``pi N l / 180`` (rad/deg)."""
    return math.pi * n * ell / 180.0


@dataclass(frozen=True)
class FringeModel:
    """``A/2 [1 - cos(omega theta - C)] + B`` with theta and C in degrees.

    ``C`` is measured in degrees of fringe phase, so the cosine argument in
    degrees is ``N l theta - C``.
    """

    A: float
    B: float
    C: float
    N: int = 2
    ell: int = 1

    def __post_init__(self):
        # A == 0 (zero visibility) is a valid flat fringe
        if not self.A >= 0:
            raise ValueError(f"fringe amplitude A must be >= 0, got {self.A}")
        if self.A == 0 and self.B == 0:
            raise ValueError("fringe with A = B = 0 carries no counts")
        if self.B < 0:
            raise ValueError(f"fringe offset B must be >= 0, got {self.B}")
        if self.ell == 0 or self.N < 1:
            raise ValueError("need N >= 1 and nonzero l")

    @property
    def omega(self) -> float:
        return fringe_frequency(self.N, self.ell)

    @property
    def period_deg(self) -> float:
        return 360.0 / (self.N * abs(self.ell))

    @property
    def visibility(self) -> float:
        return self.A / (self.A + 2 * self.B)

    def argument(self, theta_deg):
        """Cosine argument in radians."""
        return self.omega * np.asarray(theta_deg, dtype=float) - math.radians(self.C)

    def rate(self, theta_deg):
        return self.A / 2 * (1 - np.cos(self.argument(theta_deg))) + self.B

    def slope(self, theta_deg):
        """d(rate)/d(theta) per degree."""
        return self.A / 2 * self.omega * np.sin(self.argument(theta_deg))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChirpModel:
    """Fringe phase ``theta0 + (pi N l / 180) w0 t + (k/2) t^2``.

    ``w0``/``wf`` are mechanical angular speeds in deg/s at ``t = 0`` and
    ``t = T``; ``k = pi N l (wf - w0) / (180 T)`` in rad/s^2.
    """

    theta0: float
    w0: float
    wf: float
    T: float
    N: int = 2
    ell: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError(f"duration T must be > 0, got {self.T}")

    @classmethod
    def from_acceleration(cls, accel_deg_s2: float, T: float, w0: float = 0.0,
                          theta0: float = 0.0, N: int = 2, ell: int = 1) -> "ChirpModel":
        return cls(theta0, w0, w0 + accel_deg_s2 * T, T, N, ell)

    @classmethod
    def from_k(cls, k: float, T: float, w0: float = 0.0, theta0: float = 0.0,
               N: int = 2, ell: int = 1) -> "ChirpModel":
        accel = k / fringe_frequency(N, ell)
        return cls(theta0, w0, w0 + accel * T, T, N, ell)

    @property
    def omega(self) -> float:
        return fringe_frequency(self.N, self.ell)

    @property
    def k(self) -> float:
        return math.pi * self.N * self.ell * (self.wf - self.w0) / (180.0 * self.T)

    @property
    def acceleration(self) -> float:
        """Mechanical angular acceleration in deg/s^2."""
        return (self.wf - self.w0) / self.T

    def phase(self, t):
        t = np.asarray(t, dtype=float)
        return self.theta0 + self.omega * self.w0 * t + 0.5 * self.k * t**2

    def instantaneous_frequency(self, t):
        """d(phase)/dt in rad/s."""
        return self.omega * self.w0 + self.k * np.asarray(t, dtype=float)

    def rate(self, t, A: float, B: float):
        return A / 2 * (1 - np.cos(self.phase(t))) + B

    def to_dict(self) -> dict:
        d = asdict(self)
        d["k"] = self.k
        return d
