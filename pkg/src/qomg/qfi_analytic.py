"""Closed-form QFI of the driving-free gyroscope for coherent inputs.

The generator of Omega translations is written as

    H_gen = -(Omega / 2 w~^3) (H1 + H2 + H3 + H4 + H5)

with photon-number blocks H1 = R1 n^4, H2 = R2 n^3, H3 = (R3 b + R3* b^dag + R4) n^2,
H4 = (R5 b + R5* b^dag + R6) n and H5 = R7 b^dag b + R8 b + R8* b^dag.  For a
product coherent state the variances and covariances of the blocks are
polynomials in N_c (Poisson moments) and sqrt(N_m).

The 4 w~^2 / Omega^2 terms of R4, R6, R8 always multiply chi = c Omega^2, so
they are evaluated as 4 w~^2 c with no division; Omega = 0 gives F = 0.

``linear_r7=True`` switches to the variant R7 = 2 w~ t, kept only for comparison.
That form is dimensionally inconsistent with the other blocks and disagrees
with the brute-force generator; the default uses R7 = 2 w~^2 t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .hilbert import LinearOperator, TruncatedSpace, lowering_matrix
from .model import DerivedParams, InitialState, NonzeroDrive, SystemParams, UnitSystem, derive


class ComplexBeta(ValueError):
    """The closed-form moment tables assume a real, non-negative mechanical amplitude."""


@dataclass(frozen=True)
class GeneratorCoefficients:
    C1: float
    C2: complex
    R1: float
    R2: float
    R3: complex
    R4: float
    R5: complex
    R6: float
    R7: float
    R8: complex

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True)
class MomentTable:
    variances: np.ndarray
    covariances: np.ndarray

    def total(self) -> float:
        """Var(sum H_i): variances plus every ordered off-diagonal covariance."""
        return float(np.sum(self.variances) + np.sum(self.covariances))


def coefficients(derived: DerivedParams, t: float, linear_r7: bool = False) -> GeneratorCoefficients:
    wt = derived.omega_m_tilde
    if wt <= 0:
        raise ValueError("w_m~ must be positive")
    th = wt * t
    C1 = th - math.sin(th)
    C2 = complex(C1, 1.0 - math.cos(th))
    g0, G = derived.g0, derived.G_NL
    chi = derived.chi
    # 4 w~^2 / Omega^2 * chi, without dividing by Omega
    k_chi = 4.0 * wt * wt * derived.chi_per_omega2
    R1 = 6.0 * G * G / wt * C1
    R2 = 12.0 * G / wt * (g0 - G) * C1
    R3 = 3.0 * G * C2 - G * th
    R4 = 2.0 * C1 / wt * (3.0 * (g0 - G) ** 2 + (k_chi - 6.0 * chi) * G)
    R5 = (g0 - G) * (3.0 * C2 - th)
    R6 = (g0 - G) * (2.0 * k_chi / wt - 12.0 * chi / wt) * C1
    R7 = 2.0 * th if linear_r7 else 2.0 * wt * th
    R8 = k_chi * (C2 - th) - (3.0 * C2 - th) * chi
    return GeneratorCoefficients(C1, C2, R1, R2, R3, R4, R5, R6, R7, R8)


def _poly(coeffs, x: float) -> float:
    """coeffs in ascending order, starting at x^1."""
    return sum(c * x ** (i + 1) for i, c in enumerate(coeffs))


def moment_table(coeffs: GeneratorCoefficients, init: InitialState) -> MomentTable:
    beta = complex(init.beta)
    if beta.imag != 0 or beta.real < 0:
        raise ComplexBeta("closed-form moments need real beta >= 0; use the numerical path")
    Nc = init.n_cavity
    Nm = init.n_mech
    sm = math.sqrt(Nm)
    c = coeffs
    R3r = 2.0 * c.R3.real  # R3 + R3*
    R5r = 2.0 * c.R5.real
    R8r = 2.0 * c.R8.real
    A3 = R3r * sm + c.R4  # <R3 b + R3* b^dag + R4>
    A5 = R5r * sm + c.R6

    var = np.zeros(5)
    var[0] = c.R1**2 * _poly([1, 126, 952, 1640, 964, 216, 16], Nc)
    var[1] = c.R2**2 * _poly([1, 30, 84, 54, 9], Nc)
    var[2] = A3**2 * _poly([1, 6, 4], Nc) + abs(c.R3) ** 2 * _poly([1, 7, 6, 1], Nc)
    var[3] = (A5**2 + abs(c.R5) ** 2) * Nc + abs(c.R5) ** 2 * Nc**2
    var[4] = c.R7**2 * Nm + c.R7 * R8r * sm + abs(c.R8) ** 2

    cov = np.zeros((5, 5))
    cov[0, 1] = c.R1 * c.R2 * _poly([1, 62, 291, 322, 114, 12], Nc)
    cov[0, 2] = c.R1 * A3 * _poly([1, 30, 82, 52, 8], Nc)
    cov[0, 3] = c.R1 * A5 * _poly([1, 14, 18, 4], Nc)
    cov[1, 2] = c.R2 * A3 * _poly([1, 14, 21, 6], Nc)
    cov[1, 3] = c.R2 * A5 * _poly([1, 6, 3], Nc)
    cov[2, 3] = (R3r * R5r * Nm + c.R6 * R3r * sm + c.R4 * R5r * sm + c.R4 * c.R6) * _poly([1, 2], Nc) \
        + 0.5 * 2.0 * (c.R3 * c.R5.conjugate()).real * _poly([1, 3, 1], Nc)
    cov[2, 4] = 0.5 * (R3r * c.R7 * sm + 2.0 * (c.R3 * c.R8.conjugate()).real) * _poly([1, 1], Nc)
    cov[3, 4] = 0.5 * Nc * (R5r * c.R7 * sm + 2.0 * (c.R5 * c.R8.conjugate()).real)
    cov = cov + cov.T
    return MomentTable(var, cov)


def qfi_closed_form(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                    linear_r7: bool = False) -> float:
    if params.drive_amplitude != 0:
        raise NonzeroDrive("the closed form holds only without driving")
    om = derived.omega
    if om == 0:
        return 0.0
    table = moment_table(coefficients(derived, t, linear_r7), init)
    wt = derived.omega_m_tilde
    return om * om / wt**6 * table.total()


def _block_arrays(coeffs: GeneratorCoefficients, space: TruncatedSpace) -> list[sps.csr_matrix]:
    """H1..H5 as explicit sparse two-mode matrices (cavity-major ordering)."""
    n = space.photon_numbers().astype(float)
    b = sps.kron(sps.identity(space.dim_cavity), sps.csr_matrix(lowering_matrix(space.dim_mech)), "csr")
    bd = b.conj().T.tocsr()
    eye = sps.identity(space.dim, dtype=complex, format="csr")
    n2 = n * n
    c = coeffs
    # photon-number factors are diagonal, applied on the right as column scalings
    scale = lambda f: sps.diags(f.astype(complex))  # noqa: E731
    mats = [
        scale(c.R1 * n2 * n2),
        scale(c.R2 * n2 * n),
        (c.R3 * b + np.conj(c.R3) * bd + c.R4 * eye) @ scale(n2),
        (c.R5 * b + np.conj(c.R5) * bd + c.R6 * eye) @ scale(n),
        c.R7 * scale(space.phonon_numbers().astype(float)) + c.R8 * b + np.conj(c.R8) * bd,
    ]
    return [sps.csr_matrix(m) for m in mats]


def block_matrices(coeffs: GeneratorCoefficients, space: TruncatedSpace) -> list[LinearOperator]:
    """H1..H5 as explicit dense two-mode matrices."""
    return [LinearOperator(space, m.toarray()) for m in _block_arrays(coeffs, space)]


def generator_matrix(derived: DerivedParams, t: float, space: TruncatedSpace,
                     linear_r7: bool = False) -> LinearOperator:
    wt = derived.omega_m_tilde
    blocks = block_matrices(coefficients(derived, t, linear_r7), space)
    total = sum(blk.matrix for blk in blocks)
    return LinearOperator(space, -(derived.omega / (2.0 * wt**3)) * total)


def brute_force_moments(coeffs: GeneratorCoefficients, psi: np.ndarray,
                        space: TruncatedSpace) -> MomentTable:
    """Variances / symmetrised covariances of H1..H5 by direct matrix algebra.

    Centred vectors (H_i - <H_i>)|psi> are formed first so large, nearly
    constant blocks do not cancel catastrophically.
    """
    centred = []
    for blk in _block_arrays(coeffs, space):
        v = blk @ psi
        centred.append(v - np.vdot(psi, v) * psi)
    var = np.array([np.vdot(v, v).real for v in centred])
    cov = np.zeros((5, 5))
    for i in range(5):
        for j in range(5):
            if i != j:
                cov[i, j] = np.vdot(centred[i], centred[j]).real
    return MomentTable(var, cov)


def qfi_closed_form_at(params: SystemParams, init: InitialState, theta: float,
                       units: UnitSystem | None = None, linear_r7: bool = False) -> float:
    """Convenience: closed-form QFI at w~ t = theta."""
    d = derive(params, units)
    return qfi_closed_form(params, d, init, theta / d.omega_m_tilde, linear_r7)
