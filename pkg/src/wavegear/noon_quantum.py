"""Two-photon N00N interference through the gear interferometer.

Beam-splitter convention (50:50, ``i`` on the cross terms)::

    a_dag -> (a_dag + i b_dag) / sqrt(2)
    b_dag -> (i a_dag + b_dag) / sqrt(2)

With this convention ``(|2,0> + e^{i phi}|0,2>)/sqrt(2)`` leaves the splitter
with ``|1,1>`` amplitude ``i (1 + e^{i phi}) / 2``, so ``P(1,1) = cos^2(phi/2)``.
The gear imparts ``theta * l`` per photon, the two-photon arm ``phi = 2 theta l``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import FringeModel

NORM_TOL = 1e-12
MAX_ORACLE_PHOTONS = 10


class UnsupportedClosedFormError(ValueError):
    pass


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class FockVector:
    """Two-mode state of fixed total photon number.

    ``amplitudes[k]`` is the coefficient of ``|k, n_total - k>``.
    """

    amplitudes: np.ndarray
    n_total: int

    def __post_init__(self):
        if len(self.amplitudes) != self.n_total + 1:
            raise ValueError(
                f"need {self.n_total + 1} amplitudes for n_total={self.n_total}, "
                f"got {len(self.amplitudes)}"
            )

    @classmethod
    def basis(cls, n_a: int, n_b: int) -> "FockVector":
        amps = np.zeros(n_a + n_b + 1, dtype=complex)
        amps[n_a] = 1.0
        return cls(amps, n_a + n_b)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def probability(self, n_a: int, n_b: int) -> float:
        if n_a + n_b != self.n_total or n_a < 0 or n_b < 0:
            return 0.0
        return float(abs(self.amplitudes[n_a]) ** 2)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class NoonState:
    """``(|n,0> + e^{i phase}|0,n>)/sqrt(2)``; ``phase`` is the total relative phase."""

    n: int
    phase: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("N00N state needs n >= 1")

    @classmethod
    def from_rotation(cls, theta: float, ell: int, n: int = 2) -> "NoonState":
        return cls(n, n * theta * ell)

    def to_fock(self) -> FockVector:
        amps = np.zeros(self.n + 1, dtype=complex)
        amps[self.n] = 1 / math.sqrt(2)
        amps[0] += np.exp(1j * self.phase) / math.sqrt(2)
        return FockVector(amps, self.n)


def coincidence_probability(theta, ell: int, n: int = 2):
    """Probability of the ``|1,1>`` outcome, ``cos^2(theta * l)`` for n = 2."""
    if n != 2:
        raise UnsupportedClosedFormError(
            f"closed form only for n=2 (got n={n}); use beamsplitter_oracle"
        )
    return np.cos(np.asarray(theta) * ell) ** 2


def _beamsplitter_matrix(n: int) -> np.ndarray:
    """Column k holds the output amplitudes for input ``|k, n-k>``."""
    s = 1 / math.sqrt(2)
    t, r = s, 1j * s
    u = np.zeros((n + 1, n + 1), dtype=complex)
    for k in range(n + 1):
        m = n - k
        norm_in = math.sqrt(math.factorial(k) * math.factorial(m))
        # (t a + r b)^k (r a + t b)^m, monomial a^(p+q) b^(n-p-q)
        for p in range(k + 1):
            cp = math.comb(k, p) * t**p * r ** (k - p)
            for q in range(m + 1):
                cq = math.comb(m, q) * r**q * t ** (m - q)
                j = p + q
                u[j, k] += cp * cq * math.sqrt(math.factorial(j) * math.factorial(n - j))
        u[:, k] /= norm_in
    return u


def beamsplitter_oracle(state: FockVector, n_total: int | None = None) -> FockVector:
    """Exact 50:50 splitter on the ``n_total``-photon two-mode subspace."""
    n = state.n_total if n_total is None else n_total
    if n != state.n_total:
        raise ValueError(f"state carries {state.n_total} photons, not {n}")
    if n > MAX_ORACLE_PHOTONS:
        raise ValueError(f"oracle limited to n_total <= {MAX_ORACLE_PHOTONS}")
    if abs(state.norm() - 1.0) > NORM_TOL:
        raise NormalizationError(f"input norm {state.norm():.15g} is not 1")
    return FockVector(_beamsplitter_matrix(n) @ state.amplitudes, n)


def oracle_coincidence(theta: float, ell: int, n: int = 2) -> float:
    out = beamsplitter_oracle(NoonState.from_rotation(theta, ell, n).to_fock())
    half = n // 2
    return out.probability(half, n - half)


def fringe_rate(theta_deg, model: FringeModel):
    """Expected counts per bin ``A/2 [1 - cos(pi N l theta/180 - C)] + B``.

    ``C`` is in degrees of fringe phase.
    """
    return model.rate(theta_deg)
