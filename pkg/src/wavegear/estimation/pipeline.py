from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..detector_sim import CountRecord
from .alignment import AlignmentError, AlignmentResult, align_runs
from .fringe_fit import FitReport, fit_fringe
from .uncertainty import UncertaintyCurve, angle_spread, uncertainty_curve


@dataclass
class SweepAnalysis:
    alignment: AlignmentResult
    fit: FitReport
    curve: UncertaintyCurve


def analyze_sweep(records: list[CountRecord], N: int, ell: int,
                  drop_failed: bool = False) -> SweepAnalysis:
    """Align repeats, fit with reciprocal-variance weights, then build the uncertainty curve."""
    if len(records) == 1:
        # nothing to align against
        al = AlignmentResult(list(records), np.zeros(1), np.zeros(1), np.ones(1), np.zeros(1, int))
    else:
        al = align_runs(records, N=N, ell=ell, drop_failed=drop_failed)
        if not al.aligned:
            raise AlignmentError("every run failed alignment", al.failed)
    fit = fit_fringe(al.aligned, N, ell)
    spread = angle_spread(al.aligned, fit.model) if len(al.aligned) > 1 else None
    curve = uncertainty_curve(fit, al.aligned[0].abscissa, spread)
    return SweepAnalysis(al, fit, curve)
