"""Weighted least-squares fit of the static fringe.

With the fringe frequency known, the model is linear after writing it as
``p0 + p1 cos(omega theta) + p2 sin(omega theta)``; then

    A = 2 sqrt(p1^2 + p2^2),  C = atan2(-p2, -p1),  B = p0 - A/2

and the covariance of (A, B, C, V) follows from the Jacobian of that map.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ..detector_sim import CountRecord
from ..models import ChirpModel, FringeModel, fringe_frequency


class IllConditionedError(ValueError):
    pass


class FitFailedError(RuntimeError):
    pass


@dataclass
class FitReport:
    model: FringeModel | ChirpModel
    params: dict
    errors: dict
    rss: float
    dof: int
    visibility: float | None = None
    visibility_err: float | None = None
    converged: bool = True
    iterations: int = 1
    step_norm: float = 0.0
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return "fringe" if isinstance(self.model, FringeModel) else "chirp"

    @property
    def reduced_chi2(self) -> float:
        return self.rss / self.dof if self.dof > 0 else float("nan")

    def to_dict(self) -> dict:
        return {
            "format": "wavegear-fit/1",
            "kind": self.kind,
            "model": self.model.to_dict(),
            "params": self.params,
            "errors": self.errors,
            "rss": self.rss,
            "dof": self.dof,
            "reduced_chi2": self.reduced_chi2,
            "visibility": self.visibility,
            "visibility_err": self.visibility_err,
            "convergence": {"converged": self.converged, "iterations": self.iterations,
                            "step_norm": self.step_norm},
            "flags": list(self.flags),
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(_plain(self.to_dict()), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FitReport":
        m = dict(d["model"])
        if d["kind"] == "fringe":
            model = FringeModel(**m)
        else:
            m.pop("k", None)
            model = ChirpModel(**m)
        conv = d.get("convergence", {})
        return cls(model, d["params"], d["errors"], d["rss"], d["dof"],
                   d.get("visibility"), d.get("visibility_err"),
                   conv.get("converged", True), conv.get("iterations", 1),
                   conv.get("step_norm", 0.0), list(d.get("flags", [])), d.get("extra", {}))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _same_length(records: list[CountRecord]) -> bool:
    return all(len(r) == len(records[0]) for r in records)


def _shared_axis(records: list[CountRecord]) -> bool:
    return all(np.array_equal(r.abscissa, records[0].abscissa) for r in records)


def repeat_weights(records: list[CountRecord], model: FringeModel | None = None) -> np.ndarray:
    """Per-angle reciprocal sample variance across repeats.

    Repeats are matched by sample index, which after alignment means by
    fringe phase.  With ``model`` given, the variance is taken over the
    residuals ``counts - model(abscissa)`` so that the sub-sample angle
    shifts left by alignment do not leak fringe slope into the spread.
    Zero-variance angles (and single-record input) fall back to the Poisson
    floor ``max(mean, 1)``.
    """
    counts = np.array([r.coincidences for r in records], dtype=float)
    mean = counts.mean(axis=0)
    floor = np.maximum(mean, 1.0)
    if len(records) < 2:
        return 1.0 / floor
    if model is not None:
        counts = counts - np.array([model.rate(r.abscissa) for r in records])
    var = counts.var(axis=0, ddof=1)
    var = np.where(var > 0, var, floor)
    return 1.0 / var


def _stack(records, weights):
    theta = np.concatenate([r.abscissa for r in records])
    y = np.concatenate([r.coincidences for r in records]).astype(float)
    if weights is None:
        if _same_length(records):
            w_grid = repeat_weights(records)
            w = np.tile(w_grid, len(records))
        else:
            w = 1.0 / np.maximum(y, 1.0)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.size == theta.size:
            w = weights
        elif weights.size == len(records[0]):
            w = np.tile(weights, len(records))
        else:
            raise ValueError("weights must be given per angle or per point")
    if (w <= 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be positive and finite")
    return theta, y, w


def _check_span(theta: np.ndarray, period: float):
    distinct = np.unique(theta)
    if distinct.size < 3:
        raise IllConditionedError(f"need >= 3 distinct angles, got {distinct.size}")
    span = distinct[-1] - distinct[0]
    if span <= period / 2:
        raise IllConditionedError(
            f"angle span {span:g} deg does not exceed half a fringe period ({period / 2:g} deg)"
        )


def _linear_solve(X, y, w):
    sw = np.sqrt(w)
    Xw = X * sw[:, None]
    normal = Xw.T @ Xw
    cond = np.linalg.cond(normal)
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError(f"normal matrix condition number {cond:.3g}")
    p = np.linalg.solve(normal, Xw.T @ (y * sw))
    cov = np.linalg.inv(normal)
    resid = y - X @ p
    return p, cov, float(np.sum(w * resid**2))


def _fringe_from_linear(p, cov):
    p0, p1, p2 = p
    r = math.hypot(p1, p2)
    A = 2 * r
    c = math.atan2(-p2, -p1)
    B = p0 - r
    jac = np.array([
        [0.0, 2 * p1 / r, 2 * p2 / r],                       # A
        [1.0, -p1 / r, -p2 / r],                             # B
        [0.0, -p2 / r**2 * 180 / math.pi, p1 / r**2 * 180 / math.pi],  # C (deg)
        [-r / p0**2, p1 / (r * p0), p2 / (r * p0)],          # V
    ])
    pcov = jac @ cov @ jac.T
    errs = np.sqrt(np.clip(np.diag(pcov), 0, None))
    return A, B, math.degrees(c), errs, pcov


def wrap_deg(c: float) -> float:
    w = (c + 180.0) % 360.0 - 180.0
    return 180.0 if w == -180.0 else w


def fit_fringe(records, N: int, ell: int, weights=None) -> FitReport:
    """Known-frequency weighted fit of ``A/2 [1 - cos(pi N l theta/180 - C)] + B``."""
    if isinstance(records, CountRecord):
        records = [records]
    if not records:
        raise ValueError("no records to fit")
    theta, y, w = _stack(records, weights)
    rep = fit_fringe_arrays(theta, y, w, N, ell, n_records=len(records))
    if weights is None and len(records) > 1 and _same_length(records) and not _shared_axis(records):
        # aligned runs: re-weight with the residual variance about the pilot fit
        w = np.tile(repeat_weights(records, rep.model), len(records))
        rep = fit_fringe_arrays(theta, y, w, N, ell, n_records=len(records))
    return rep


def fit_fringe_arrays(theta, y, w, N: int, ell: int, n_records: int = 1) -> FitReport:
    """Known-frequency fit on flat arrays of angles, counts and weights.

    Counts may be non-integer; :func:`fit_fringe` is the record-level entry point.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.broadcast_to(np.asarray(w, dtype=float), theta.shape)
    if (w <= 0).any() or not np.isfinite(w).all():
        raise ValueError("weights must be positive and finite")
    omega = fringe_frequency(N, ell)
    _check_span(theta, 360.0 / (N * abs(ell)))
    if np.ptp(y) == 0:
        raise IllConditionedError("coincidence counts are constant; fringe not resolved")
    X = np.column_stack([np.ones_like(theta), np.cos(omega * theta), np.sin(omega * theta)])
    p, cov, rss = _linear_solve(X, y, w)
    if math.hypot(p[1], p[2]) == 0:
        raise IllConditionedError("fringe amplitude is zero")
    A, B, C, errs, pcov = _fringe_from_linear(p, cov)
    if A <= 2 * errs[0]:
        raise IllConditionedError(f"fringe amplitude {A:.4g} not resolved (stderr {errs[0]:.3g})")
    flags = []
    V = float(A / (A + 2 * B)) if A + 2 * B > 0 else 1.0
    if B < 0:
        if B < -3 * errs[1]:
            flags.append("B_clamped")
            warnings.warn(f"fitted offset B={B:.4g} < 0 beyond tolerance; clamped to 0")
        B = 0.0
        V = 1.0
    model = FringeModel(float(A), float(B), wrap_deg(C), N, ell)
    return FitReport(
        model=model,
        params={"A": model.A, "B": model.B, "C": model.C},
        errors={"A": float(errs[0]), "B": float(errs[1]), "C": float(errs[2])},
        rss=rss, dof=int(theta.size - 3),
        visibility=V, visibility_err=float(errs[3]),
        iterations=1, step_norm=0.0, flags=flags,
        extra={"angles": np.unique(theta).tolist(), "n_records": n_records,
               "linear_params": p.tolist(), "covariance_ABCV": pcov.tolist()},
    )


def _periodogram(theta, y, w, omegas, chunk: int = 128) -> np.ndarray:
    """Weighted RSS of the best three-term fit at each trial frequency."""
    out = np.empty(omegas.size)
    wy = w * y
    yy = float(np.sum(wy * y))
    for lo in range(0, omegas.size, chunk):
        om = omegas[lo:lo + chunk, None]
        c, s = np.cos(om * theta), np.sin(om * theta)
        G = np.empty((om.shape[0], 3, 3))
        G[:, 0, 0] = w.sum()
        G[:, 0, 1] = G[:, 1, 0] = c @ w
        G[:, 0, 2] = G[:, 2, 0] = s @ w
        G[:, 1, 1] = (c * c) @ w
        G[:, 2, 2] = (s * s) @ w
        G[:, 1, 2] = G[:, 2, 1] = (c * s) @ w
        b = np.stack([np.full(om.shape[0], wy.sum()), c @ wy, s @ wy], axis=-1)
        p = (np.linalg.pinv(G) @ b[..., None])[..., 0]
        out[lo:lo + chunk] = yy - np.einsum("ij,ij->i", p, b)
    return out


def fit_fringe_free(records, N: int = 2, oversample: int = 8, omega_max: float | None = None) -> FitReport:
    """Diagnostic fit with the fringe frequency left free.

    A weighted periodogram over omega locates the dominant frequency, then a
    Levenberg-Marquardt polish refines ``(p0, p1, p2, omega)``.  The fitted
    oscillation count per turn is ``omega * 180 / pi``; ``extra["ell_equiv"]``
    divides it by ``N``.
    """
    if isinstance(records, CountRecord):
        records = [records]
    theta, y, w = _stack(records, None)
    grid = np.unique(theta)
    span = grid[-1] - grid[0]
    step = float(np.median(np.diff(records[0].abscissa)))
    if omega_max is None:
        omega_max = math.pi / step
    d_omega = 2 * math.pi / (span * oversample)
    omegas = np.arange(d_omega, omega_max, d_omega)
    if omegas.size == 0:
        raise IllConditionedError("angle grid too short for a frequency scan")
    rss = _periodogram(theta, y, w, omegas)
    om0 = float(omegas[int(np.argmin(rss))])
    X = np.column_stack([np.ones_like(theta), np.cos(om0 * theta), np.sin(om0 * theta)])
    sw = np.sqrt(w)
    p, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    best = (float(rss.min()), np.append(p, om0))

    def resid(q):
        p0, p1, p2, om = q
        return sw * (y - (p0 + p1 * np.cos(om * theta) + p2 * np.sin(om * theta)))

    res = optimize.least_squares(resid, best[1], method="lm", x_scale="jac")
    if not res.success:
        raise FitFailedError(f"free-frequency polish failed: {res.message}")
    p0, p1, p2, om = res.x
    J = res.jac
    cov = np.linalg.inv(J.T @ J)
    A, B, C, errs, _ = _fringe_from_linear(np.array([p0, p1, p2]), cov[:3, :3])
    om_err = float(math.sqrt(cov[3, 3]))
    count = om * 180 / math.pi
    return FitReport(
        model=FringeModel(float(A), float(max(B, 0.0)), wrap_deg(C), N, 1),
        params={"A": float(A), "B": float(B), "C": wrap_deg(C), "omega": float(om)},
        errors={"A": float(errs[0]), "B": float(errs[1]), "C": float(errs[2]), "omega": om_err},
        rss=float(2 * res.cost), dof=int(theta.size - 4),
        visibility=float(A / (A + 2 * B)), visibility_err=float(errs[3]),
        converged=bool(res.success), iterations=int(res.nfev),
        step_norm=float(np.linalg.norm(res.x - best[1])),
        extra={"omega": float(om), "oscillations_per_turn": float(count),
               "ell_equiv": float(count / N), "angles": grid.tolist()},
    )


def free_fringe_curve(report: FitReport, theta_deg):
    """Evaluate a free-frequency fit."""
    p = report.params
    arg = p["omega"] * np.asarray(theta_deg, dtype=float) - math.radians(p["C"])
    return p["A"] / 2 * (1 - np.cos(arg)) + p["B"]


def count_maxima(values: np.ndarray, periodic: bool = True) -> int:
    """Strict local maxima of a sampled curve, via sign changes of the difference."""
    v = np.asarray(values, dtype=float)
    if periodic:
        d = np.diff(np.append(v, v[0]))
        prev = np.roll(d, 1)
        return int(np.sum((prev > 0) & (d <= 0)))
    d = np.diff(v)
    return int(np.sum((d[:-1] > 0) & (d[1:] <= 0)))


def maxima_per_turn(fn, samples: int = 36000) -> int:
    """Local maxima of ``fn`` over one 360 deg window that starts at a minimum.

    Starting the window at the sampled minimum keeps a near-integer but not
    exactly periodic curve (free-frequency fits) from showing a spurious
    maximum at the 0/360 seam; for a periodic curve it equals the periodic count.
    """
    step = 360.0 / samples
    theta = np.arange(samples) * step
    start = theta[int(np.argmin(fn(theta)))]
    window = start + np.arange(samples + 1) * step
    return count_maxima(fn(window), periodic=False)
