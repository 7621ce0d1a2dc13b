import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wavegear import gear_optics as go

SMALL = go.GridSpec(256, 8e-3)


def test_atan2_quadrant_example():
    spec = go.GridSpec(8, 4e-3)
    plate = go.SpiralPlate(1, (0.0, 0.0), 0.0)
    mask = go.plate_mask(spec, plate)
    x, y = spec.coords()
    # pick the sample on the +y axis
    iy, ix = np.argwhere((np.isclose(x, 0)) & (y > 0))[0]
    assert np.angle(mask[iy, ix]) == pytest.approx(math.pi / 2, abs=1e-15)


def test_singularity_pixel_has_zero_phase():
    plate = go.SpiralPlate(16, (0.0, 0.0), 0.3)
    mask = go.plate_mask(SMALL, plate)
    assert mask[go.singularity_index(SMALL, plate.center)] == 1.0


@given(ell=st.integers(-20, 20).filter(bool), rot=st.floats(-10, 10))
@settings(max_examples=25, deadline=None)
def test_mask_conserves_power(ell, rot):
    beam = go.make_gaussian(5e-4, (1e-3, -5e-4), SMALL)
    out = go.apply_spiral_plate(beam, go.SpiralPlate(ell, (0.0, 0.0), rot))
    assert abs(out.power() / beam.power() - 1) < 1e-12


def test_propagation_conserves_power():
    beam = go.make_gaussian(5e-4, (2e-3, 0.0))
    vortex = go.apply_spiral_plate(beam, go.SpiralPlate(16, (0.0, 0.0)))
    out = go.propagate_fresnel(vortex, 0.05)
    assert abs(out.power() / vortex.power() - 1) < 1e-9


def test_zero_distance_is_identity():
    beam = go.make_gaussian(5e-4, (2e-3, 0.0), SMALL)
    out = go.propagate_fresnel(beam, 0.0)
    assert np.array_equal(out.samples, beam.samples)


def test_plates_cancel_pointwise():
    beam = go.make_gaussian(5e-4, (2e-3, 0.0), SMALL)
    a = go.apply_spiral_plate(beam, go.SpiralPlate(7, (0.0, 0.0), 0.0))
    b = go.apply_spiral_plate(a, go.SpiralPlate(-7, (0.0, 0.0), 0.0))
    assert np.max(np.abs(b.samples - beam.samples)) < 1e-14 * np.max(np.abs(beam.samples))


@pytest.mark.parametrize("z", [0.5, 1.0])
def test_gaussian_waist_matches_analytic(z):
    w0, lam = 5e-4, 1064e-9
    beam = go.make_gaussian(w0, (0.0, 0.0))
    out = go.propagate_fresnel(beam, z)
    z_r = math.pi * w0**2 / lam
    expect = w0 * math.sqrt(1 + (z / z_r) ** 2)
    assert go.beam_waist(beam) == pytest.approx(w0, rel=1e-6)
    assert go.beam_waist(out) == pytest.approx(expect, rel=5e-3)


def test_boundary_error_near_edge():
    with pytest.raises(go.BoundaryError):
        go.make_gaussian(5e-4, (7.9e-3, 0.0))


def test_chirp_aliasing_error_suggests_larger_grid():
    beam = go.make_gaussian(5e-4, (0.0, 0.0), SMALL)
    with pytest.raises(go.AliasingError) as exc:
        go.propagate_fresnel(beam, 1000.0)
    assert exc.value.suggested_n > SMALL.n


def test_band_aliasing_error_for_coarse_vortex():
    g = go.GearGeometry(ell=16, offset=(1e-3, 0.0), grid=SMALL)
    with pytest.raises(go.AliasingError) as exc:
        go.run_gear(g, 0.0)
    assert exc.value.suggested_n > SMALL.n
    assert exc.value.suggested_n & (exc.value.suggested_n - 1) == 0


def test_zero_intensity_is_degenerate():
    spec = go.GridSpec(16, 1e-3)
    zero = go.FieldGrid(np.zeros((16, 16), complex), spec.extent, spec.n, spec.wavelength)
    with pytest.raises(go.DegenerateInputError):
        go.gear_residual(zero, zero, 0.0, 1)


def test_geometry_mismatch_rejected():
    a = go.make_gaussian(5e-4, (0, 0), go.GridSpec(64, 8e-3))
    b = go.make_gaussian(5e-4, (0, 0), go.GridSpec(128, 8e-3))
    with pytest.raises(go.GeometryError):
        go.gear_residual(a, b, 0.0, 1)


@given(ell=st.integers(-24, 24).filter(bool), theta_deg=st.floats(-180, 180),
       ox=st.floats(-3e-3, 3e-3))
@settings(max_examples=20, deadline=None)
def test_zero_distance_residual_vanishes(ell, theta_deg, ox):
    g = go.GearGeometry(ell=ell, offset=(ox, 1e-3), distance=0.0, grid=SMALL)
    rep, _, _ = go.run_gear(g, math.radians(theta_deg))
    assert rep.residual_std < 1e-10
    assert abs(rep.residual_mean) < 1e-10


def test_unsubtracted_mean_equals_theta_ell():
    g = go.GearGeometry(ell=5, distance=0.0, grid=SMALL)
    for theta in (0.0, 0.2, 1.3, 2.9):
        _, ref, psi2 = go.run_gear(g, theta)
        sing = go.singularity_index(SMALL, (0.0, 0.0))
        raw = go.gear_residual(ref, psi2, 0.0, g.ell, exclude=(sing,))
        assert raw.residual_mean == pytest.approx(go.wrap_phase(theta * 5), abs=1e-10)


def test_flip_symmetry():
    g = go.GearGeometry(ell=16, grid=go.GridSpec(512, 8e-3))
    theta = math.radians(5.0)
    a, _, _ = go.run_gear(g, theta)
    b, _, _ = go.run_gear(replace(g, ell=-16), -theta)
    assert b.residual_std == pytest.approx(a.residual_std, rel=1e-9)
    assert b.residual_mean == pytest.approx(a.residual_mean, abs=1e-9)


def test_offset_doubling_reduces_residual():
    # ell=16 at 1 mm is rejected at 512, so use the sizes both offsets accept
    for ell, sizes in ((1, (512, 1024, 2048)), (16, (1024, 2048))):
        near = go.GearGeometry(ell=ell, offset=(1e-3, 0.0))
        far = go.GearGeometry(ell=ell, offset=(2e-3, 0.0))
        a = go.convergence_study(near, 0.1, sizes)["residual_std"]
        b = go.convergence_study(far, 0.1, sizes)["residual_std"]
        for s_near, s_far in zip(a, b):
            assert s_near > s_far


def test_circular_stats_small_spread_exact():
    d = np.array([1e-9, -1e-9, 2e-9, -2e-9])
    mean, std = go.circular_stats(np.exp(1j * d), np.ones(4))
    assert mean == pytest.approx(0.0, abs=1e-20)
    assert std == pytest.approx(np.sqrt(np.mean(d**2)), rel=1e-6)


def test_circular_stats_across_branch_cut():
    d = np.array([math.pi - 0.01, -math.pi + 0.01])
    mean, std = go.circular_stats(np.exp(1j * d), np.ones(2))
    assert abs(mean) == pytest.approx(math.pi, abs=1e-12)
    assert std == pytest.approx(0.01, rel=1e-4)


def test_field_dump_round_trip(tmp_path):
    beam = go.apply_spiral_plate(go.make_gaussian(5e-4, (2e-3, 0), SMALL),
                                 go.SpiralPlate(3, (0.0, 0.0)))
    path = tmp_path / "f.fgrd"
    go.dump_field(beam, path)
    back = go.load_field(path)
    assert back.n == beam.n and back.extent == beam.extent
    assert back.wavelength == beam.wavelength
    assert np.array_equal(back.samples, beam.samples)
    assert path.stat().st_size == 28 + 16 * beam.n**2


def test_zero_charge_rejected():
    with pytest.raises(go.GeometryError):
        go.run_gear(go.GearGeometry(ell=0, grid=SMALL), 0.0)


def test_gaussian_normalized_and_flat():
    beam = go.make_gaussian(5e-4, (2e-3, 0.0))
    assert abs(beam.power() - 1) < 1e-9
    centred = go.make_gaussian(5e-4, (0.0, 0.0))
    nz = np.abs(centred.samples) > 0
    assert np.all(centred.phase()[nz] == 0.0)
