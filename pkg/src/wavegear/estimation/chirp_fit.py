"""Multi-start weighted least-squares fit of the accelerating fringe.

Model per time bin::

    A/2 [1 - cos(theta0 + (pi N l / 180) w0 t + (k/2) t^2)] + B

For fixed ``(w0, k)`` the model is linear in ``(p0, p1, p2)`` with
``p1 = -A/2 cos(theta0)``, ``p2 = A/2 sin(theta0)``, so a grid over
``(w0, acceleration)`` can be scanned with batched 3x3 solves.  The lowest
grid local minima seed Levenberg-Marquardt polishes over all five
parameters; the best polished objective wins.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from ..detector_sim import CountRecord
from ..models import ChirpModel, fringe_frequency
from .fringe_fit import FitFailedError, FitReport

GRID_SHAPE = (50, 50)
N_POLISH = 8
MIN_BINS_PER_FRINGE = 10


def _grid_objective(t, y, w, omega, w0s, accels):
    W0, AC = np.meshgrid(w0s, accels, indexing="ij")
    psi = omega * (W0[..., None] * t + 0.5 * AC[..., None] * t**2)
    c, s = np.cos(psi), np.sin(psi)
    sw = w.sum()
    wc, ws = (w * c).sum(-1), (w * s).sum(-1)
    wcc, wss, wcs = (w * c * c).sum(-1), (w * s * s).sum(-1), (w * c * s).sum(-1)
    G = np.empty(W0.shape + (3, 3))
    G[..., 0, 0] = sw
    G[..., 0, 1] = G[..., 1, 0] = wc
    G[..., 0, 2] = G[..., 2, 0] = ws
    G[..., 1, 1] = wcc
    G[..., 1, 2] = G[..., 2, 1] = wcs
    G[..., 2, 2] = wss
    wy = w * y
    b = np.stack([np.full(W0.shape, wy.sum()), (wy * c).sum(-1), (wy * s).sum(-1)], axis=-1)
    # pinv: psi == 0 at (w0, a) = (0, 0) makes the system singular
    p = (np.linalg.pinv(G) @ b[..., None])[..., 0]
    rss = float((wy * y).sum()) - np.einsum("...i,...i->...", p, b)
    return rss, p


def grid_local_minima(obj: np.ndarray) -> list[tuple[int, int]]:
    """Cells no higher than every 8-neighbour (edges use the neighbours they have)."""
    padded = np.pad(obj, 1, constant_values=np.inf)
    core = padded[1:-1, 1:-1]
    is_min = np.ones_like(obj, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            nb = padded[1 + di:padded.shape[0] - 1 + di, 1 + dj:padded.shape[1] - 1 + dj]
            is_min &= core <= nb
    idx = np.argwhere(is_min)
    order = np.argsort(obj[is_min])
    return [tuple(int(v) for v in idx[o]) for o in order]


def _linear_to_phys(p):
    p0, p1, p2 = p
    r = math.hypot(p1, p2)
    return 2 * r, p0 - r, math.atan2(p2, -p1)


def fit_chirp(
    record: CountRecord,
    N: int,
    ell: int,
    nominal_speed: float | None = None,
    nominal_accel: float | None = None,
    grid_shape=GRID_SHAPE,
    n_polish: int = N_POLISH,
) -> FitReport:
    """Fit the chirped fringe; acceleration in deg/s^2 is ``180 k / (pi N l)``.

    The search box is ``w0 in [0, 2 * nominal_speed]`` and
    ``acceleration in [0, 5 * nominal_accel]``.  Nominal values default to
    the chirp stored with the record (final speed ``wf`` and its acceleration).
    """
    t = np.asarray(record.abscissa, dtype=float)
    y = np.asarray(record.coincidences, dtype=float)
    if t.size < 6:
        raise ValueError("chirp fit needs at least 6 bins")
    if np.ptp(y) == 0:
        raise ValueError("coincidence record is flat; nothing to fit")
    chirp_meta = record.extra.get("chirp", {})
    if nominal_speed is None:
        nominal_speed = chirp_meta.get("wf")
    if nominal_accel is None and chirp_meta:
        nominal_accel = (chirp_meta["wf"] - chirp_meta["w0"]) / chirp_meta["T"]
    if not nominal_speed or not nominal_accel:
        raise ValueError("nominal speed and acceleration are needed for the search box")
    acq = float(np.median(np.diff(t)))
    T = float(chirp_meta.get("T", t.size * acq))
    omega = fringe_frequency(N, ell)
    f_final = omega * nominal_speed / (2 * math.pi)
    if f_final > 0 and 1.0 / (f_final * acq) < MIN_BINS_PER_FRINGE:
        raise ValueError(
            f"only {1.0 / (f_final * acq):.1f} bins per fringe at the nominal final speed; "
            f"need >= {MIN_BINS_PER_FRINGE}"
        )

    w = 1.0 / np.maximum(y, 1.0)
    w0s = np.linspace(0.0, 2 * nominal_speed, grid_shape[0])
    accels = np.linspace(0.0, 5 * nominal_accel, grid_shape[1])
    obj, lin = _grid_objective(t, y, w, omega, w0s, accels)
    minima = grid_local_minima(obj)
    sw = np.sqrt(w)

    def resid(q):
        A, B, th0, w0, k = q
        return sw * (y - (A / 2 * (1 - np.cos(th0 + omega * w0 * t + 0.5 * k * t**2)) + B))

    best = None
    tried = 0
    for i, j in minima[:n_polish]:
        A0, B0, th0 = _linear_to_phys(lin[i, j])
        start = np.array([A0, B0, th0, w0s[i], omega * accels[j]])
        try:
            res = optimize.least_squares(resid, start, method="lm", x_scale="jac")
        except (ValueError, np.linalg.LinAlgError):
            continue
        tried += 1
        if not res.success:
            continue
        if best is None or res.cost < best[0].cost:
            best = (res, start)
    if best is None:
        raise FitFailedError(
            f"no multi-start polish converged ({tried} tried); grid objective range "
            f"[{obj.min():.4g}, {obj.max():.4g}], {len(minima)} grid local minima"
        )
    res, start = best
    A, B, th0, w0, k = res.x
    if A < 0:
        A, th0 = -A, th0 + math.pi
        B = B - A
    th0 = math.atan2(math.sin(th0), math.cos(th0))
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac)
        errs = np.sqrt(np.clip(np.diag(cov), 0, None))
    except np.linalg.LinAlgError:
        errs = np.full(5, np.nan)
    accel = k / omega
    accel_err = errs[4] / omega
    model = ChirpModel.from_k(k, T, w0=w0, theta0=th0, N=N, ell=ell)
    return FitReport(
        model=model,
        params={"A": float(A), "B": float(B), "theta0": float(th0), "w0": float(w0), "k": float(k)},
        errors={"A": float(errs[0]), "B": float(errs[1]), "theta0": float(errs[2]),
                "w0": float(errs[3]), "k": float(errs[4])},
        rss=float(2 * res.cost), dof=int(t.size - 5),
        visibility=float(A / (A + 2 * B)) if A + 2 * B > 0 else None,
        converged=True, iterations=int(res.nfev),
        step_norm=float(np.linalg.norm(res.x - start)),
        extra={
            "acceleration_deg_s2": float(accel),
            "acceleration_err_deg_s2": float(accel_err),
            "grid_local_minima": len(minima),
            "search_box": {"w0_deg_s": [0.0, 2 * nominal_speed],
                           "accel_deg_s2": [0.0, 5 * nominal_accel],
                           "shape": list(grid_shape)},
            "grid_best_objective": float(obj.min()),
        },
    )
