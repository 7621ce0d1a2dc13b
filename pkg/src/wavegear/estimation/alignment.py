"""Cross-correlation alignment of repeated runs started at different fringe phases."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detector_sim import CountRecord
from ..models import fringe_frequency

SIGNIFICANCE = 0.5


class AlignmentError(ValueError):
    def __init__(self, message: str, failed: list[int] | None = None):
        super().__init__(message)
        self.failed = failed or []


@dataclass
class AlignmentResult:
    aligned: list[CountRecord]
    lags: np.ndarray
    phase_shifts: np.ndarray
    peak_correlation: np.ndarray
    integer_lags: np.ndarray
    failed: list[int] = field(default_factory=list)


def circular_xcorr(x: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """Normalized circular cross-correlation; ``c[k]`` peaks at ``k = s`` when ``x = roll(ref, s)``."""
    x = np.asarray(x, dtype=float) - np.mean(x)
    r = np.asarray(ref, dtype=float) - np.mean(ref)
    denom = np.linalg.norm(x) * np.linalg.norm(r)
    if denom == 0:
        return np.zeros_like(x)
    return np.real(np.fft.ifft(np.fft.fft(x) * np.conj(np.fft.fft(r)))) / denom


def parabolic_peak(c: np.ndarray) -> tuple[int, float, float]:
    """Integer peak index, sub-sample offset in [-0.5, 0.5], and peak height."""
    k = int(np.argmax(c))
    cm, c0, cp = c[k - 1], c[k], c[(k + 1) % c.size]
    denom = cm - 2 * c0 + cp
    delta = 0.0 if denom == 0 else 0.5 * (cm - cp) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    return k, delta, float(c0)


def _signed(k: int, n: int) -> int:
    return k - n if k > n // 2 else k


def check_periodic_grid(grid: np.ndarray, N: int, ell: int, rtol: float = 1e-6) -> float:
    """Grid step; raises unless the grid covers a whole number of fringe periods."""
    steps = np.diff(grid)
    step = float(steps.mean())
    if not np.allclose(steps, step, rtol=1e-9, atol=1e-12):
        raise AlignmentError("alignment needs an equally spaced angle grid")
    period = 360.0 / (N * abs(ell))
    cycles = grid.size * step / period
    if abs(cycles - round(cycles)) > rtol * max(1.0, cycles) or round(cycles) < 1:
        raise AlignmentError(
            f"grid covers {cycles:.6g} fringe periods; circular alignment needs a whole number"
        )
    return step


def align_runs(
    runs: list[CountRecord],
    reference: CountRecord | np.ndarray | None = None,
    N: int | None = None,
    ell: int | None = None,
    threshold: float = SIGNIFICANCE,
    drop_failed: bool = False,
) -> AlignmentResult:
    """Shift every run onto the reference's fringe offset.

    Each run is rolled by the integer lag of its correlation peak, so sample
    ``i`` of every aligned run sits at the same fringe phase, and its angle
    axis is then moved by the parabolic sub-sample remainder (counts are
    never interpolated).  ``integer_lags`` holds the roll applied, ``lags`` is the refined lag in grid steps and
    ``phase_shifts`` the same lag in degrees of fringe phase
    (``N l * lag * step``), i.e. the run's offset relative to the reference.
    """
    if not runs:
        raise AlignmentError("no runs to align")
    grid = runs[0].abscissa
    for i, r in enumerate(runs):
        if len(r) != len(grid) or not np.array_equal(r.abscissa, grid):
            raise AlignmentError(f"run {i} does not share the angle grid of run 0")
    N = N if N is not None else int(runs[0].config.get("N", 2))
    ell = ell if ell is not None else int(runs[0].config.get("ell", 1))
    step = check_periodic_grid(grid, N, ell)
    if reference is None:
        ref = runs[0].coincidences
    elif isinstance(reference, CountRecord):
        if not np.array_equal(reference.abscissa, grid):
            raise AlignmentError("reference grid differs from the runs")
        ref = reference.coincidences
    else:
        ref = np.asarray(reference, dtype=float)
        if ref.size != grid.size:
            raise AlignmentError("template length differs from the run grid")

    n = grid.size
    aligned, lags, ilags, peaks, failed = [], [], [], [], []
    for i, r in enumerate(runs):
        c = circular_xcorr(r.coincidences, ref)
        k, delta, peak = parabolic_peak(c)
        if peak < threshold:
            failed.append(i)
            if drop_failed:
                continue
            lags.append(np.nan)
            ilags.append(0)
            peaks.append(peak)
            continue
        shift = _signed(k, n)
        lags.append(shift + delta)
        ilags.append(shift)
        peaks.append(peak)
        rolled = np.roll(r.coincidences, -shift)
        axis = grid - delta * step
        aligned.append(r.replace_counts(rolled, abscissa=axis, aligned_lag=shift + delta))
    if failed and not drop_failed:
        raise AlignmentError(
            f"correlation peak below {threshold} for runs {failed}", failed
        )
    lags = np.asarray(lags, dtype=float)
    per_step = fringe_frequency(N, ell) * 180 / np.pi * step
    return AlignmentResult(aligned, lags, lags * per_step, np.asarray(peaks),
                           np.asarray(ilags, dtype=int), failed)
