"""Classical wavefront model of two opposed spiral phase plates.

A Gaussian beam displaced from the plate singularity passes a plate of
charge ``l``, propagates a short distance, and passes a second plate of
charge ``-l`` rotated by ``theta`` about its own centre.  In the near-field
limit the two azimuthal ramps cancel and leave a flat phase ``theta * l``.

All phase arithmetic is done with unit-modulus complex masks so that the
``atan2`` branch cut never produces a 2*pi seam.

Propagation uses the Fresnel transfer function

    H(fx, fy) = exp(i k z) * exp(-i pi lambda z (fx**2 + fy**2))

applied in the FFT domain.  ``|H| = 1`` so the step is unitary and exact at
``z = 0``.  The sampling criterion checked before propagating has two parts,
both evaluated on ``f_b``, the radial spatial frequency that contains all
but ``SPECTRAL_TAIL`` of the field's spectral power:

* band limit: ``f_b <= BAND_FRACTION * f_nyquist`` with
  ``f_nyquist = 1 / (2 dx)``; violated means the field itself is
  undersampled, fix by raising ``n`` at fixed extent;
* transfer-function chirp: ``lambda * z * f_b <= L / 2`` with
  ``L = 2 * extent``; this keeps the phase step of ``H`` between adjacent
  frequency samples below pi over the occupied band, which is also the
  condition for the occupied band not to wrap around the window.  Fix by
  raising ``n`` at fixed pixel pitch.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DEFAULT_N = 1024
DEFAULT_EXTENT = 8e-3
DEFAULT_WAVELENGTH = 1064e-9
DEFAULT_WAIST = 0.5e-3
DEFAULT_OFFSET = (2e-3, 0.0)
DEFAULT_SEPARATION = 5e-2

SPECTRAL_TAIL = 1e-4
BAND_FRACTION = 0.9


class GeometryError(ValueError):
    """Beam or plate does not fit the sampling grid."""


class BoundaryError(GeometryError):
    """Beam would be clipped by the grid edge."""


class AliasingError(GeometryError):
    """Grid sampling is too coarse for the requested propagation."""

    def __init__(self, message: str, suggested_n: int):
        super().__init__(f"{message}; suggested minimum n = {suggested_n}")
        self.suggested_n = suggested_n


class DegenerateInputError(ValueError):
    """Field carries no usable intensity."""


@dataclass(frozen=True)
class GridSpec:
    n: int = DEFAULT_N
    extent: float = DEFAULT_EXTENT
    wavelength: float = DEFAULT_WAVELENGTH

    def __post_init__(self):
        if self.n < 2:
            raise GeometryError(f"grid needs n >= 2, got {self.n}")
        if not self.extent > 0:
            raise GeometryError(f"extent must be positive, got {self.extent}")
        if not self.wavelength > 0:
            raise GeometryError(f"wavelength must be positive, got {self.wavelength}")

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.n

    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        ax = self.axis()
        return np.meshgrid(ax, ax, indexing="xy")


@dataclass(frozen=True)
class FieldGrid:
    """Complex scalar field sampled on a square grid.

    ``samples[iy, ix]`` sits at ``(x, y) = ((ix - n//2) dx, (iy - n//2) dx)``
    with ``dx = 2 * extent / n``.
    """

    samples: np.ndarray
    extent: float
    n: int
    wavelength: float

    def __post_init__(self):
        if self.samples.shape != (self.n, self.n):
            raise GeometryError(
                f"samples shape {self.samples.shape} does not match n={self.n}"
            )
        GridSpec(self.n, self.extent, self.wavelength)

    @property
    def spec(self) -> GridSpec:
        return GridSpec(self.n, self.extent, self.wavelength)

    @property
    def dx(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.samples) ** 2

    def power(self) -> float:
        return float(np.sum(self.intensity) * self.dx**2)

    def phase(self) -> np.ndarray:
        return np.angle(self.samples)

    def with_samples(self, samples: np.ndarray) -> "FieldGrid":
        return replace(self, samples=samples)

    def same_geometry(self, other: "FieldGrid") -> bool:
        return (
            self.n == other.n
            and self.extent == other.extent
            and self.wavelength == other.wavelength
        )


@dataclass(frozen=True)
class SpiralPlate:
    """Spiral phase plate of integer charge, optionally rotated about its centre.

    The mask is ``exp(i * charge * (atan2(y - cy, x - cx) - rotation))``.
    For the flipped plate (``charge = -l``) the rotation term becomes
    ``+l * rotation``.  The pixel nearest the centre gets phase 0.
    """

    topological_charge: int
    center: tuple[float, float] = (0.0, 0.0)
    rotation: float = 0.0

    def __post_init__(self):
        if int(self.topological_charge) != self.topological_charge:
            raise GeometryError("topological charge must be an integer")
        if self.topological_charge == 0:
            raise GeometryError("topological charge must be nonzero")


@dataclass(frozen=True)
class GearReport:
    residual_mean: float
    residual_std: float
    expected: float

    def to_dict(self) -> dict:
        return {
            "residual_mean": self.residual_mean,
            "residual_std": self.residual_std,
            "expected": self.expected,
        }


def wrap_phase(phi):
    """Wrap to (-pi, pi]."""
    w = np.angle(np.exp(1j * np.asarray(phi, dtype=float)))
    w = np.where(np.isclose(w, -np.pi, rtol=0, atol=1e-15), np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def make_gaussian(waist: float, offset=(0.0, 0.0), grid_spec: GridSpec | None = None) -> FieldGrid:
    """Flat-phase Gaussian ``exp(-r**2 / waist**2)`` with unit total power."""
    spec = grid_spec or GridSpec()
    if not waist > 0:
        raise GeometryError(f"waist must be positive, got {waist}")
    ox, oy = offset
    reach = 3.0 * waist
    if abs(ox) + reach > spec.extent or abs(oy) + reach > spec.extent:
        raise BoundaryError(
            f"beam at offset ({ox:g}, {oy:g}) m with waist {waist:g} m is clipped by "
            f"the +/-{spec.extent:g} m grid (needs 3 waists of margin)"
        )
    x, y = spec.coords()
    amp = np.exp(-((x - ox) ** 2 + (y - oy) ** 2) / waist**2).astype(complex)
    amp /= math.sqrt(np.sum(np.abs(amp) ** 2) * spec.dx**2)
    return FieldGrid(amp, spec.extent, spec.n, spec.wavelength)


def singularity_index(spec: GridSpec, center) -> tuple[int, int]:
    """Row/column of the sample nearest a plate centre."""
    cx, cy = center
    ix = int(round(cx / spec.dx)) + spec.n // 2
    iy = int(round(cy / spec.dx)) + spec.n // 2
    if not (0 <= ix < spec.n and 0 <= iy < spec.n):
        raise GeometryError(f"plate centre {center} lies outside the grid")
    return iy, ix


def plate_mask(spec: GridSpec, plate: SpiralPlate) -> np.ndarray:
    x, y = spec.coords()
    cx, cy = plate.center
    azimuth = np.arctan2(y - cy, x - cx)
    mask = np.exp(1j * plate.topological_charge * azimuth)
    mask *= np.exp(-1j * plate.topological_charge * plate.rotation)
    mask[singularity_index(spec, plate.center)] = 1.0
    return mask


def apply_spiral_plate(field: FieldGrid, plate: SpiralPlate) -> FieldGrid:
    return field.with_samples(field.samples * plate_mask(field.spec, plate))


def spectral_band_edge(field: FieldGrid, tail: float = SPECTRAL_TAIL) -> float:
    """Radial frequency (1/m) enclosing all but ``tail`` of the spectral power."""
    spectrum = np.abs(np.fft.fft2(field.samples)) ** 2
    f = np.fft.fftfreq(field.n, d=field.dx)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    fr = np.hypot(fx, fy).ravel()
    order = np.argsort(fr)
    cum = np.cumsum(spectrum.ravel()[order])
    total = cum[-1]
    if total <= 0:
        raise DegenerateInputError("field has zero power")
    idx = int(np.searchsorted(cum, (1.0 - tail) * total))
    return float(fr[order][min(idx, fr.size - 1)])


def _next_pow2(x: float) -> int:
    return 1 << max(1, math.ceil(math.log2(max(x, 2.0))))


def check_sampling(field: FieldGrid, distance: float) -> float:
    """Raise :class:`AliasingError` if ``field`` cannot be propagated by ``distance``.

    Returns the band edge used for the check.
    """
    f_b = spectral_band_edge(field)
    f_nyq = 0.5 / field.dx
    if f_b > BAND_FRACTION * f_nyq:
        need = field.n * f_b / (BAND_FRACTION * f_nyq)
        raise AliasingError(
            f"field spectrum reaches {f_b:.4g} 1/m, above {BAND_FRACTION} x Nyquist "
            f"({f_nyq:.4g} 1/m) at fixed extent",
            _next_pow2(need),
        )
    width = 2.0 * field.extent
    spread = field.wavelength * distance * f_b
    if spread > width / 2:
        need = field.n * 2.0 * spread / width
        raise AliasingError(
            f"transfer-function chirp undersampled: lambda*z*f_b = {spread:.4g} m "
            f"exceeds L/2 = {width / 2:.4g} m at fixed pixel pitch",
            _next_pow2(need),
        )
    return f_b


def propagate_fresnel(field: FieldGrid, distance: float, check: bool = True) -> FieldGrid:
    if distance < 0:
        raise GeometryError(f"distance must be >= 0, got {distance}")
    if distance == 0:
        return field.with_samples(field.samples.copy())
    if check:
        check_sampling(field, distance)
    f = np.fft.fftfreq(field.n, d=field.dx)
    fx, fy = np.meshgrid(f, f, indexing="xy")
    k = 2 * np.pi / field.wavelength
    # the exp(ikz) piston is kept modulo 2pi to avoid huge arguments
    piston = np.exp(1j * ((k * distance) % (2 * np.pi)))
    h = piston * np.exp(-1j * np.pi * field.wavelength * distance * (fx**2 + fy**2))
    # centred grid: shift so that x=0 sits at index 0 before the FFT
    u = np.fft.ifftshift(field.samples)
    out = np.fft.fftshift(np.fft.ifft2(np.fft.fft2(u) * h))
    return field.with_samples(out)


def beam_waist(field: FieldGrid) -> float:
    """1/e^2 intensity radius from the second moment, ``w = 2 * sqrt(<x'^2>)``."""
    x, y = field.spec.coords()
    inten = field.intensity
    total = inten.sum()
    if total <= 0:
        raise DegenerateInputError("field has zero power")
    mx = (inten * x).sum() / total
    my = (inten * y).sum() / total
    var = (inten * ((x - mx) ** 2 + (y - my) ** 2)).sum() / total / 2.0
    return float(2.0 * math.sqrt(var))


def circular_stats(z: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Weighted circular mean and std of the phases of unit complex numbers ``z``.

    The std is ``sqrt(-2 ln R)`` with the resultant length ``R`` computed as
    ``1 - sum w * 2 sin^2(d/2)`` about the mean, keeping it exact for tiny spreads.
    """
    wsum = weights.sum()
    if not wsum > 0:
        raise DegenerateInputError("zero total intensity in residual weights")
    resultant = (weights * z).sum() / wsum
    if resultant == 0:
        return 0.0, float("inf")
    mean = float(np.angle(resultant))
    dev = np.angle(z * np.exp(-1j * mean))
    one_minus_r = float((weights * 2.0 * np.sin(dev / 2.0) ** 2).sum() / wsum)
    if one_minus_r >= 1.0:
        return wrap_phase(mean), float("inf")
    std = math.sqrt(max(0.0, -2.0 * math.log1p(-one_minus_r)))
    return wrap_phase(mean), std


def gear_residual(
    psi0: FieldGrid,
    psi2: FieldGrid,
    theta: float,
    ell: int,
    exclude: tuple[tuple[int, int], ...] = (),
) -> GearReport:
    """Intensity-weighted circular statistics of ``phase(psi2) - phase(psi0) - theta*ell``.

    Weights are ``|psi0|**2``; samples listed in ``exclude`` (the plate
    singularity pixels) and samples where either field vanishes get weight 0.
    """
    if not psi0.same_geometry(psi2):
        raise GeometryError("psi0 and psi2 must share grid geometry")
    expected = wrap_phase(theta * ell)
    prod = psi2.samples * np.conj(psi0.samples)
    mag = np.abs(prod)
    weights = psi0.intensity.copy()
    for idx in exclude:
        weights[idx] = 0.0
    weights[mag == 0] = 0.0
    z = np.exp(1j * np.angle(prod)) * np.exp(-1j * theta * ell)
    mean, std = circular_stats(z, weights)
    return GearReport(residual_mean=mean, residual_std=std, expected=expected)


@dataclass(frozen=True)
class GearGeometry:
    ell: int = 16
    waist: float = DEFAULT_WAIST
    offset: tuple[float, float] = DEFAULT_OFFSET
    distance: float = DEFAULT_SEPARATION
    plate_center: tuple[float, float] = (0.0, 0.0)
    grid: GridSpec = GridSpec()


def run_gear(geom: GearGeometry, theta: float) -> tuple[GearReport, FieldGrid, FieldGrid]:
    """Plate, propagate, flipped plate rotated by ``theta``; compare against free propagation.

    The reference ``psi0`` is the same input beam propagated by the same
    distance without plates, so that diffraction common to both paths drops
    out of the residual.  Returns ``(report, psi0_reference, psi2)``.
    """
    if geom.ell == 0:
        raise GeometryError("topological charge must be nonzero")
    beam = make_gaussian(geom.waist, geom.offset, geom.grid)
    first = SpiralPlate(geom.ell, geom.plate_center, 0.0)
    second = SpiralPlate(-geom.ell, geom.plate_center, theta)
    psi1 = propagate_fresnel(apply_spiral_plate(beam, first), geom.distance)
    psi2 = apply_spiral_plate(psi1, second)
    ref = propagate_fresnel(beam, geom.distance)
    sing = singularity_index(geom.grid, geom.plate_center)
    return gear_residual(ref, psi2, theta, geom.ell, exclude=(sing,)), ref, psi2


def convergence_study(
    geom: GearGeometry,
    theta: float,
    sizes=(512, 1024, 2048),
    rel_tol: float = 0.05,
) -> dict:
    """Residual std at increasing ``n`` (fixed extent).

    Converged when the last two sizes agree to ``rel_tol`` relative (or both
    are below 1e-10 rad).  Sizes rejected by the sampling check are recorded
    as ``None`` and need at least two accepted sizes to converge.
    """
    stds: list[float | None] = []
    for n in sizes:
        g = replace(geom, grid=GridSpec(n, geom.grid.extent, geom.grid.wavelength))
        try:
            stds.append(run_gear(g, theta)[0].residual_std)
        except AliasingError:
            stds.append(None)
    ok = [s for s in stds if s is not None]
    if len(ok) < 2:
        return {"sizes": list(sizes), "residual_std": stds, "relative_change": None,
                "rel_tol": rel_tol, "converged": False}
    a, b = ok[-2], ok[-1]
    rel = abs(a - b) / max(abs(b), 1e-300)
    converged = (a < 1e-10 and b < 1e-10) or rel <= rel_tol
    return {"sizes": list(sizes), "residual_std": stds, "relative_change": rel,
            "rel_tol": rel_tol, "converged": bool(converged), "value": b}


# Field dump: little-endian binary
#   magic  b"FGRD"   4 bytes
#   version uint32   (1)
#   n       uint32
#   extent  float64  (m)
#   wavelength float64 (m)
#   samples n*n complex128, row-major, samples[iy, ix]
_MAGIC = b"FGRD"
_HEADER = struct.Struct("<4sIIdd")


def dump_field(field: FieldGrid, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, 1, field.n, field.extent, field.wavelength))
        fh.write(np.ascontiguousarray(field.samples, dtype="<c16").tobytes())


def load_field(path) -> FieldGrid:
    raw = Path(path).read_bytes()
    magic, version, n, extent, wavelength = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a version-1 field dump")
    data = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size, count=n * n)
    return FieldGrid(data.reshape(n, n).astype(complex), extent, n, wavelength)
