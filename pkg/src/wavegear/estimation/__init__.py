"""Fringe fitting, run alignment, uncertainty analysis and chirp fitting."""
from .alignment import AlignmentError, AlignmentResult, align_runs
from .chirp_fit import fit_chirp
from .fringe_fit import (FitFailedError, FitReport, IllConditionedError, count_maxima,
                         fit_fringe, fit_fringe_arrays, fit_fringe_free, repeat_weights)
from .uncertainty import (DegenerateGridError, EfficiencyBudget, UncertaintyCurve, angle_spread,
                          heisenberg_limit, invert_fringe, threshold_efficiency,
                          uncertainty_curve, violation_figure)
from .pipeline import SweepAnalysis, analyze_sweep
