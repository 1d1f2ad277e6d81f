import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite as npherm

from qomg.hilbert import (CAVITY, MECH, CutoffTooSmall, DensityOperator, DimensionMismatch,
                          LinearOperator, StateVector, TruncatedSpace, annihilation, basis,
                          coherent_state, hermite_values, hermitian_eigendecomposition, identity,
                          lowering_matrix, number, partial_trace_cavity, partial_trace_mech,
                          quadrature_eigenstate, quadrature_wavefunctions, reconstruct, tensor,
                          tensor_states)


def test_space_dimensions_and_ordering():
    s = TruncatedSpace(3, 2)
    assert (s.dim_cavity, s.dim_mech, s.dim) == (4, 3, 12)
    assert s.index(2, 1) == 7
    assert list(s.photon_numbers()[:6]) == [0, 0, 0, 1, 1, 1]
    with pytest.raises(ValueError):
        TruncatedSpace(0, 3)


def test_lowering_matrix_small():
    a = annihilation(TruncatedSpace(2, 1), CAVITY, two_mode=False).matrix
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    expected[1, 2] = math.sqrt(2.0)
    assert np.allclose(a, expected, atol=0)


def test_lowering_on_vacuum_is_zero():
    s = TruncatedSpace(5, 3)
    vac = basis(s, None, 0)
    a = annihilation(s, CAVITY)
    assert np.all(a.matrix @ vac.amplitudes == 0)


@pytest.mark.parametrize("n_max", [1, 4, 17])
def test_truncated_commutator(n_max):
    a = lowering_matrix(n_max + 1)
    comm = a @ a.conj().T - a.conj().T @ a
    expected = np.eye(n_max + 1)
    expected[-1, -1] = -n_max
    assert np.allclose(comm, expected, atol=1e-12)


def test_coherent_vacuum():
    s = TruncatedSpace(10, 1)
    psi = coherent_state(s, CAVITY, 0.0)
    assert np.array_equal(psi.amplitudes, basis(s, CAVITY, 0).amplitudes)


def test_coherent_mean_photon_number():
    s = TruncatedSpace(40, 1)
    psi = coherent_state(s, CAVITY, math.sqrt(5.0))
    n = number(s, CAVITY, two_mode=False)
    assert abs(psi.expect(n).real - 5.0) < 1e-6
    assert abs(psi.norm() ** 2 - 1.0) < 1e-8


def test_coherent_overlap_identity():
    s = TruncatedSpace(40, 1)
    a, b = 1.0, 1j
    got = coherent_state(s, CAVITY, a).inner(coherent_state(s, CAVITY, b))
    ref = np.exp(-abs(a) ** 2 / 2 - abs(b) ** 2 / 2 + np.conj(a) * b)
    assert abs(got - ref) < 1e-6


def test_coherent_cutoff_too_small():
    with pytest.raises(CutoffTooSmall):
        coherent_state(TruncatedSpace(3, 1), CAVITY, 3.0)


@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
@settings(max_examples=25, deadline=None)
def test_coherent_norm_property(re, im):
    psi = coherent_state(TruncatedSpace(45, 1), CAVITY, complex(re, im))
    assert abs(psi.norm() ** 2 - 1.0) < 1e-8


def test_quadrature_parity_at_origin():
    amps = quadrature_eigenstate(TruncatedSpace(12, 1), 0.0, 0.0).amplitudes
    assert np.allclose(amps[1::2], 0.0, atol=1e-15)


def test_vacuum_wavefunction():
    x = np.linspace(-4, 4, 17)
    w = quadrature_wavefunctions(x, 6)
    assert np.allclose(w[:, 0], np.pi ** -0.25 * np.exp(-x * x / 2), atol=1e-15)
    ket = quadrature_eigenstate(TruncatedSpace(6, 1), 0.7, 0.3)
    vac = basis(TruncatedSpace(6, 1), CAVITY, 0)
    assert abs(np.vdot(ket.amplitudes, vac.amplitudes) - np.pi ** -0.25 * np.exp(-0.245)) < 1e-14


def test_coherent_quadrature_density_normalized():
    s = TruncatedSpace(30, 1)
    psi = coherent_state(s, CAVITY, 1.0).amplitudes
    x = np.linspace(-10, 10, 2001)
    dens = np.abs(quadrature_wavefunctions(x, 30) @ psi) ** 2
    assert abs(np.trapezoid(dens, x) - 1.0) < 1e-6


def test_hermite_low_orders():
    for x in (-1.3, 0.0, 0.4, 2.5):
        h = hermite_values(x, 1)
        assert h[0] == 1.0 and h[1] == 2 * x
    assert hermite_values(1.0, 2)[2] == 2.0


def test_hermite_h10_matches_expansion():
    coef = np.zeros(11)
    coef[10] = 1.0
    ref = npherm.hermval(0.5, coef)
    # explicit coefficients of H_10
    poly = [-30240, 0, 302400, 0, -403200, 0, 161280, 0, -23040, 0, 1024]
    direct = sum(c * 0.5 ** k for k, c in enumerate(poly))
    got = hermite_values(0.5, 10)[10]
    assert got == pytest.approx(direct, rel=1e-12)
    assert got == pytest.approx(ref, rel=1e-12)


def test_hermite_scaled_matches_unscaled():
    x = 1.7
    raw = hermite_values(x, 20)
    scaled = hermite_values(x, 20, scaled=True)
    norms = np.array([math.sqrt(2.0 ** m * math.factorial(m)) for m in range(21)])
    assert np.allclose(scaled, raw / norms, rtol=1e-12)


def test_hermite_overflow_guard():
    with pytest.raises(OverflowError):
        hermite_values(30.0, 200)


def test_tensor_identities():
    s = TruncatedSpace(3, 2)
    eye = tensor(identity(s, CAVITY), identity(s, MECH))
    assert np.array_equal(eye.matrix, np.eye(s.dim))
    nc = tensor(number(s, CAVITY, two_mode=False), identity(s, MECH))
    ket = tensor_states(basis(s, CAVITY, 2), basis(s, MECH, 0))
    assert np.allclose(nc.matrix @ ket.amplitudes, 2 * ket.amplitudes)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_tensor_trace_product(seed):
    rng = np.random.default_rng(seed)
    s = TruncatedSpace(3, 2)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    B = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    k = tensor(LinearOperator(s, A, CAVITY), LinearOperator(s, B, MECH))
    assert abs(np.trace(k.matrix) - np.trace(A) * np.trace(B)) < 1e-10


def test_tensor_rejects_wrong_modes():
    s = TruncatedSpace(3, 2)
    with pytest.raises(DimensionMismatch):
        tensor(identity(s, MECH), identity(s, CAVITY))
    with pytest.raises(DimensionMismatch):
        StateVector(s, np.ones(5))


def _product_rho(s, a, b):
    psi = tensor_states(coherent_state(s, CAVITY, a), coherent_state(s, MECH, b))
    return psi.projector()


def test_partial_trace_product_state():
    s = TruncatedSpace(30, 25)
    rho = _product_rho(s, 1.2 - 0.4j, 0.9j)
    red = partial_trace_mech(rho).matrix
    c = coherent_state(s, CAVITY, 1.2 - 0.4j).amplitudes
    assert np.max(np.abs(red - np.outer(c, c.conj()))) < 1e-8
    assert abs(np.trace(red) - rho.trace()) < 1e-10
    m = coherent_state(s, MECH, 0.9j).amplitudes
    assert np.max(np.abs(partial_trace_cavity(rho).matrix - np.outer(m, m.conj()))) < 1e-8


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_partial_trace_linear_and_trace_preserving(seed):
    rng = np.random.default_rng(seed)
    s = TruncatedSpace(3, 3)
    mats = []
    for _ in range(2):
        g = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        r = g @ g.conj().T
        mats.append(r / np.trace(r))
    w = rng.uniform()
    mix = DensityOperator(s, w * mats[0] + (1 - w) * mats[1])
    lhs = partial_trace_mech(mix).matrix
    rhs = w * partial_trace_mech(DensityOperator(s, mats[0])).matrix + \
        (1 - w) * partial_trace_mech(DensityOperator(s, mats[1])).matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    assert abs(np.trace(lhs) - 1.0) < 1e-10


def test_eigendecomposition_pure_projector():
    s = TruncatedSpace(20, 1)
    rho = coherent_state(s, CAVITY, 1 + 1j).projector()
    vals, vecs = hermitian_eigendecomposition(rho)
    assert abs(vals[-1] - 1.0) < 1e-8
    assert np.max(np.abs(vals[:-1])) < 1e-8
    assert np.linalg.norm(reconstruct(vals, vecs) - rho.matrix) < 1e-8


def test_eigendecomposition_diagonal_sorted():
    s = TruncatedSpace(4, 1)
    d = np.array([0.3, 0.1, 0.0, 0.4, 0.2])
    vals, _ = hermitian_eigendecomposition(DensityOperator(s, np.diag(d).astype(complex), CAVITY))
    assert np.allclose(vals, np.sort(d), atol=1e-15)


def test_eigendecomposition_rejects_non_hermitian():
    s = TruncatedSpace(2, 1)
    m = np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]], dtype=complex)
    with pytest.raises(ValueError):
        hermitian_eigendecomposition(LinearOperator(s, m, CAVITY))


def test_density_operator_validation():
    s = TruncatedSpace(2, 1)
    rho = DensityOperator(s, np.diag([0.5, 0.5, 0.0]).astype(complex), CAVITY)
    rho.validate()
    bad = DensityOperator(s, np.diag([0.7, 0.5, 0.0]).astype(complex), CAVITY)
    with pytest.raises(ValueError):
        bad.validate()


def test_state_vector_immutable_and_normalized():
    s = TruncatedSpace(2, 1)
    v = StateVector(s, np.array([3.0, 4.0, 0.0]), CAVITY)
    assert v.normalized().norm() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        v.amplitudes[0] = 1.0
