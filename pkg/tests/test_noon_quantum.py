import math

import numpy as np
import pytest
from scipy.linalg import expm

from wavegear import noon_quantum as nq
from wavegear.estimation.fringe_fit import count_maxima
from wavegear.models import FringeModel


def _fock_ops(n_max):
    """Single-mode annihilation operator on |0>..|n_max>."""
    return np.diag(np.sqrt(np.arange(1, n_max + 1)), 1).astype(complex)


def _expm_beamsplitter(n):
    """Independent splitter: exp(i pi/4 (a^dag b + a b^dag)) on the two-mode tensor space."""
    a1 = _fock_ops(n)
    eye = np.eye(n + 1)
    a = np.kron(a1, eye)
    b = np.kron(eye, a1)
    h = a.conj().T @ b + a @ b.conj().T
    return expm(1j * math.pi / 4 * h)


def _tensor_state(fock: nq.FockVector):
    n = fock.n_total
    psi = np.zeros((n + 1) ** 2, complex)
    for k, amp in enumerate(fock.amplitudes):
        psi[k * (n + 1) + (n - k)] = amp
    return psi


def test_oracle_matches_closed_form_random_phases():
    rng = np.random.default_rng(7)
    for phi in rng.uniform(0, 2 * math.pi, 200):
        out = nq.beamsplitter_oracle(nq.NoonState(2, phi).to_fock())
        assert abs(out.probability(1, 1) - math.cos(phi / 2) ** 2) < 1e-12


@pytest.mark.parametrize("n", [1, 2, 3, 4, 6])
def test_oracle_matches_matrix_exponential(n):
    u = _expm_beamsplitter(n)
    rng = np.random.default_rng(n)
    for _ in range(5):
        amps = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
        amps /= np.linalg.norm(amps)
        fock = nq.FockVector(amps, n)
        got = nq.beamsplitter_oracle(fock).probabilities()
        full = np.abs(u @ _tensor_state(fock)) ** 2
        want = np.array([full[k * (n + 1) + (n - k)] for k in range(n + 1)])
        assert np.max(np.abs(got - want)) < 1e-12


@pytest.mark.parametrize("n", range(1, 11))
def test_unitarity(n):
    rng = np.random.default_rng(100 + n)
    for _ in range(10):
        amps = rng.normal(size=n + 1) + 1j * rng.normal(size=n + 1)
        amps /= np.linalg.norm(amps)
        out = nq.beamsplitter_oracle(nq.FockVector(amps, n))
        assert abs(out.norm() - 1) < 1e-12


def test_oracle_photon_limit():
    amps = np.zeros(12, complex)
    amps[0] = 1
    with pytest.raises(ValueError):
        nq.beamsplitter_oracle(nq.FockVector(amps, 11))


def test_unnormalized_input_rejected():
    with pytest.raises(nq.NormalizationError):
        nq.beamsplitter_oracle(nq.FockVector(np.array([1.0, 1.0, 0.0], complex), 2))


def test_hong_ou_mandel_dip():
    out = nq.beamsplitter_oracle(nq.FockVector.basis(1, 1))
    assert out.probability(1, 1) < 1e-30
    assert out.probability(2, 0) == pytest.approx(0.5, abs=1e-15)


def test_single_photon_splits_evenly():
    out = nq.beamsplitter_oracle(nq.FockVector.basis(1, 0))
    assert out.probability(1, 0) == pytest.approx(0.5, abs=1e-15)


def test_closed_form_refuses_other_n():
    with pytest.raises(nq.UnsupportedClosedFormError):
        nq.coincidence_probability(0.1, 1, n=4)


@pytest.mark.parametrize("ell", [1, 16])
def test_oracle_coincidence_against_rotation_form(ell):
    rng = np.random.default_rng(ell)
    for theta in rng.uniform(0, 2 * math.pi, 50):
        assert abs(nq.oracle_coincidence(theta, ell) - nq.coincidence_probability(theta, ell)) < 1e-12


def test_span_just_under_two_period_bound():
    # ell=16, N=2: period 11.25 deg, so 20.8 deg holds 1.85 periods
    model = FringeModel(1.0, 0.0, 0.0, 2, 16)
    theta = np.linspace(0.0, 20.8, 20001)
    assert count_maxima(nq.fringe_rate(theta, model), periodic=False) == 2
    assert 20.8 / model.period_deg < 2


@pytest.mark.parametrize("N,ell", [(2, 1), (2, 16), (2, 3), (4, 5)])
@pytest.mark.parametrize("C", [0.0, 37.0, -123.4])
def test_maxima_per_turn(N, ell, C):
    model = FringeModel(1.0, 0.1, C, N, ell)
    theta = np.arange(36000) * 0.01
    assert count_maxima(nq.fringe_rate(theta, model), periodic=True) == N * ell


@pytest.mark.parametrize("A,B", [(1.0, 0.0), (4300.0, 97.0), (2.0, 5.0)])
def test_visibility_identity(A, B):
    model = FringeModel(A, B, 12.0, 2, 16)
    theta = model.C / (model.omega * 180 / math.pi) + np.array([0.0, model.period_deg / 2])
    lo, hi = nq.fringe_rate(theta, model)
    assert abs((hi - lo) / (hi + lo) - A / (A + 2 * B)) < 1e-12
    assert abs(model.visibility - A / (A + 2 * B)) < 1e-15


@pytest.mark.parametrize("phi", [0.0, math.pi / 3, math.pi / 2, math.pi])
def test_oracle_listed_phases(phi):
    out = nq.beamsplitter_oracle(nq.NoonState(2, phi).to_fock())
    assert out.probability(1, 1) == pytest.approx(math.cos(phi / 2) ** 2, abs=1e-15)


@pytest.mark.parametrize("ell", [1, 3, 16, -5])
def test_closed_form_endpoints(ell):
    assert nq.coincidence_probability(0.0, ell) == 1.0
    assert nq.coincidence_probability(math.pi / (2 * ell), ell) < 1e-30


def test_fringe_rate_listed_values():
    m = FringeModel(4490.0, 0.0, 0.0, 2, 1)
    assert nq.fringe_rate(90.0, m) == pytest.approx(4490.0, rel=1e-15)
    m = FringeModel(10.0, 2.0, 40.0, 2, 3)
    at_c = 40.0 / (m.omega * 180 / math.pi)
    assert nq.fringe_rate(at_c, m) == pytest.approx(2.0, rel=1e-12)
    assert nq.fringe_rate(at_c + m.period_deg / 2, m) == pytest.approx(12.0, rel=1e-12)
