import math

import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from qomg.hilbert import CAVITY, TruncatedSpace, number
from qomg.model import (HBAR_SI, InitialState, NonzeroDrive, SystemParams, UnitMode, UnitSystem,
                        ZeroFrequency, derive, displaced_oscillator_levels, fig2_params,
                        hamiltonian_driving_free, hamiltonian_full, omega_m_tilde,
                        ordinary_to_angular, params_from_dict, params_to_dict, photon_block,
                        lossy_params)
from qomg.oracles import TOY_UNITS, toy_params


def test_zero_rotation_limits():
    d = derive(fig2_params(omega_rotation=0.0))
    assert d.omega_m_tilde == 62.8e3
    assert d.chi == 0.0


def test_fig2_mechanical_frequency():
    d = derive(fig2_params())
    assert d.omega_m_tilde == pytest.approx(math.sqrt(62800.0**2 + 2000.0**2), rel=1e-15)


def test_centrifugal_coupling_by_formula():
    d = derive(fig2_params())
    wt = math.sqrt(62800.0**2 + 2000.0**2)
    expected = 1e-3 * 2000.0**2 * math.sqrt(1e-7 / (2 * HBAR_SI * wt))
    assert d.chi == pytest.approx(expected, rel=1e-14)
    assert d.chi_tilde == pytest.approx(expected / wt, rel=1e-14)


def test_zero_frequency_raises():
    with pytest.raises(ZeroFrequency):
        derive(fig2_params(omega_m=0.0, omega_rotation=0.0))


def test_kerr_ratio_and_explicit_gnl():
    d = derive(fig2_params(gnl_ratio=0.3))
    assert d.G_NL == pytest.approx(0.3 * d.g0, rel=1e-15)
    # explicit g_NL converts through the zero-point length
    p = fig2_params(g_nl=1e6)
    d = derive(p)
    zpf = math.sqrt(HBAR_SI / (2 * p.mass * d.omega_m_tilde))
    assert d.G_NL == pytest.approx(1e6 * zpf, rel=1e-14)


# rates below ~1e-8 omega_m round omega_m~ to omega_m in double precision
@given(st.one_of(st.just(0.0), st.floats(1.0, 1e4)), st.floats(1.0, 1e5))
@settings(max_examples=40, deadline=None)
def test_derived_invariants(omega, omega_m):
    d = derive(fig2_params(omega_m=omega_m, omega_rotation=omega))
    assert d.omega_m_tilde >= omega_m
    assert (d.omega_m_tilde == omega_m) == (omega == 0.0)
    assert (d.chi == 0.0) == (omega == 0.0)


@pytest.mark.parametrize("omega", [1e2, 1e3, 5e3, 1e4])
def test_mechanical_frequency_derivative(omega):
    p = fig2_params()
    h = 1e-3 * omega
    fd = (omega_m_tilde(p, omega + h) - omega_m_tilde(p, omega - h)) / (2 * h)
    assert fd == pytest.approx(omega / omega_m_tilde(p, omega), rel=1e-6)


def test_dimensionless_lossy_values():
    p = lossy_params()
    units = UnitSystem.dimensionless()
    assert p.omega_c == 1.0
    assert p.omega_m == 62.8e-12
    assert p.omega_rotation == 2e-12
    assert units.hbar == 1.0 and units.frequency_unit == 1e15
    assert units.mode == UnitMode.DIMENSIONLESS


def test_dimensionless_matches_si_scaled():
    # the same physical point in both unit systems gives the same dimensionless couplings
    si = derive(fig2_params(g0_tilde=3.0))
    dl = derive(lossy_params(g0_tilde=3.0), UnitSystem.dimensionless())
    assert dl.omega_m_tilde * 1e15 == pytest.approx(si.omega_m_tilde, rel=1e-12)
    assert dl.chi_tilde == pytest.approx(si.chi_tilde, rel=1e-9)
    assert dl.g0_tilde == pytest.approx(si.g0_tilde, rel=1e-12)


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(mass=0.0)
    with pytest.raises(ValueError):
        SystemParams(kappa=-1.0)


def test_ordinary_to_angular():
    assert ordinary_to_angular(1.0) == pytest.approx(2 * math.pi)


def test_initial_state_populations():
    s = InitialState(math.sqrt(5.0), 1.0)
    assert s.n_cavity == pytest.approx(5.0)
    assert s.n_total == pytest.approx(6.0)
    assert s.ratio == pytest.approx(5.0 / 6.0)


def test_param_dict_roundtrip():
    p = fig2_params(gnl_ratio=0.1, drive_phase=0.4)
    init = InitialState(1 + 2j, 0.5)
    back = params_from_dict(params_to_dict(p, init, UnitSystem.si()))
    assert back[0] == p and back[1] == init
    with pytest.raises(KeyError):
        params_from_dict({"omega_cc": 1.0})


def test_standard_optomechanical_hermitian():
    p = fig2_params(eta0=0.0, gnl_ratio=0.0, omega_rotation=0.0)
    h = hamiltonian_full(p, derive(p), TruncatedSpace(6, 6)).matrix
    assert np.max(np.abs(h - h.conj().T)) <= 1e-10 * np.max(np.abs(h))


def test_vacuum_energy_zero():
    p = fig2_params()
    h = hamiltonian_full(p, derive(p), TruncatedSpace(4, 4)).matrix
    assert h[0, 0] == 0.0


@pytest.mark.parametrize("amplitude,phase", [(0.0, 0.0), (1e-2, 0.0), (5e-2, 0.0), (1e-2, math.pi / 3),
                                             (1e-1, 2.0)])
def test_driven_points_ground_energy(amplitude, phase):
    units = UnitSystem.dimensionless()
    p = lossy_params(g0_tilde=1e4, drive_amplitude=amplitude, drive_phase=phase)
    h = hamiltonian_full(p, derive(p, units), TruncatedSpace(8, 6)).matrix
    assert np.max(np.abs(h - h.conj().T)) <= 1e-10 * np.max(np.abs(h))
    e0 = np.linalg.eigvalsh(h)[0]
    ref, vec = sl.eigh(h, subset_by_index=[0, 0], driver="evx")
    assert e0 == pytest.approx(ref[0], abs=1e-12 * np.max(np.abs(h)))
    assert np.linalg.norm(h @ vec[:, 0] - ref[0] * vec[:, 0]) < 1e-10 * np.max(np.abs(h))


def test_linear_in_drive():
    base = lossy_params(g0_tilde=1e4)
    units = UnitSystem.dimensionless()
    d = derive(base, units)
    space = TruncatedSpace(5, 4)

    def H(eps):
        p = base.replace(drive_amplitude=abs(eps), drive_phase=float(np.angle(eps)))
        return hamiltonian_full(p, d, space).matrix

    e1, e2 = 0.03 + 0.01j, -0.02 + 0.05j
    gap = H(e1 + e2) - H(e1) - H(e2) + H(0)
    assert np.max(np.abs(gap)) < 1e-15


def test_driving_free_matches_full():
    p = fig2_params()
    d = derive(p)
    space = TruncatedSpace(6, 8)
    h1 = hamiltonian_full(p, d, space).matrix
    h2 = hamiltonian_driving_free(p, d, space).matrix
    assert np.max(np.abs(h1 - h2)) <= 1e-10 * np.max(np.abs(h1))


def test_driving_free_rejects_drive():
    p = fig2_params(drive_amplitude=1.0)
    with pytest.raises(NonzeroDrive):
        hamiltonian_driving_free(p, derive(p), TruncatedSpace(3, 3))


def test_block_diagonal_in_photon_number():
    p = fig2_params()
    d = derive(p)
    space = TruncatedSpace(4, 5)
    h = hamiltonian_driving_free(p, d, space).matrix
    n = space.photon_numbers()
    assert np.all(h[n[:, None] != n[None, :]] == 0)
    nc = number(space, CAVITY).matrix
    assert np.max(np.abs(h @ nc - nc @ h)) <= 1e-12 * np.max(np.abs(h))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_photon_block_displaced_oscillator_spectrum(seed):
    p = toy_params(np.random.default_rng(seed))
    d = derive(p, TOY_UNITS)
    for n in (0, 2, 4):
        ev = np.linalg.eigvalsh(photon_block(p, d, TruncatedSpace(5, 80), n))[:6]
        ref = displaced_oscillator_levels(p, d, n, 6)
        assert np.max(np.abs(ev - ref)) < 1e-9
