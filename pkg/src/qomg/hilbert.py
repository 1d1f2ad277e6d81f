"""Truncated Fock-space linear algebra.

Two-mode objects use cavity-major ordering: the basis vector |n, m> (cavity
photon number n, mechanical phonon number m) sits at index
``n * (n_max_mech + 1) + m``.  Every module in the package relies on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln

CAVITY = "cavity"
MECH = "mechanical"

#: Poisson tail mass allowed beyond a cutoff when building coherent states.
TAIL_TOLERANCE = 1e-10

#: |x| above which Hermite values are returned scaled (see ``hermite_values``).
HERMITE_DIRECT_LIMIT = 1e100


class CutoffTooSmall(ValueError):
    """A coherent amplitude does not fit inside the requested Fock cutoff."""


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedSpace:
    n_max_cavity: int
    n_max_mech: int = 1

    def __post_init__(self):
        if self.n_max_cavity < 1 or self.n_max_mech < 1:
            raise ValueError("Fock cutoffs must be >= 1")

    @property
    def dim_cavity(self) -> int:
        return self.n_max_cavity + 1

    @property
    def dim_mech(self) -> int:
        return self.n_max_mech + 1

    @property
    def dim(self) -> int:
        return self.dim_cavity * self.dim_mech

    def mode_dim(self, which: str | None) -> int:
        if which is None:
            return self.dim
        if which == CAVITY:
            return self.dim_cavity
        if which == MECH:
            return self.dim_mech
        raise ValueError(f"unknown mode selector {which!r}")

    def index(self, n: int, m: int) -> int:
        return n * self.dim_mech + m

    def photon_numbers(self) -> np.ndarray:
        """Cavity photon number of every two-mode basis index."""
        return np.repeat(np.arange(self.dim_cavity), self.dim_mech)

    def phonon_numbers(self) -> np.ndarray:
        return np.tile(np.arange(self.dim_mech), self.dim_cavity)


def default_cutoff(amplitude: complex) -> int:
    """Cutoff rule max(30, ceil(|a|^2 + 8|a| + 10))."""
    r = abs(amplitude)
    return max(30, math.ceil(r * r + 8 * r + 10))


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes on one mode (``mode`` set) or on the two-mode space."""

    space: TruncatedSpace
    amplitudes: np.ndarray
    mode: str | None = None

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.space.mode_dim(self.mode),):
            raise DimensionMismatch(
                f"amplitude vector of shape {amps.shape} on a space of dimension "
                f"{self.space.mode_dim(self.mode)}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> StateVector:
        return StateVector(self.space, self.amplitudes / self.norm(), self.mode)

    def inner(self, other: StateVector) -> complex:
        _check_same(self, other)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def projector(self) -> DensityOperator:
        psi = self.amplitudes
        return DensityOperator(self.space, np.outer(psi, psi.conj()), self.mode)

    def expect(self, op: LinearOperator) -> complex:
        _check_same(self, op)
        psi = self.amplitudes
        return complex(np.vdot(psi, op.matrix @ psi))


@dataclass(frozen=True, eq=False)
class DensityOperator:
    space: TruncatedSpace
    matrix: np.ndarray
    mode: str | None = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.space.mode_dim(self.mode)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"matrix of shape {mat.shape}, expected {(d, d)}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.conj().T, self.matrix)))

    def expect(self, op: LinearOperator) -> complex:
        _check_same(self, op)
        return complex(np.trace(op.matrix @ self.matrix))

    def validate(self, trace_tol: float = 1e-8, herm_tol: float = 1e-10,
                 eig_tol: float = 1e-8) -> None:
        if self.hermiticity_error() > herm_tol:
            raise ValueError("density operator is not Hermitian")
        if abs(self.trace() - 1) > trace_tol:
            raise ValueError(f"density operator trace {self.trace()} != 1")
        if np.linalg.eigvalsh(self.matrix).min() < -eig_tol:
            raise ValueError("density operator has negative eigenvalues")


@dataclass(frozen=True, eq=False)
class LinearOperator:
    space: TruncatedSpace
    matrix: np.ndarray
    mode: str | None = None

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.space.mode_dim(self.mode)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"matrix of shape {mat.shape}, expected {(d, d)}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    def dag(self) -> LinearOperator:
        return LinearOperator(self.space, self.matrix.conj().T, self.mode)

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            _check_same(self, other)
            return LinearOperator(self.space, self.matrix @ other.matrix, self.mode)
        if isinstance(other, StateVector):
            _check_same(self, other)
            return StateVector(self.space, self.matrix @ other.amplitudes, self.mode)
        return NotImplemented

    def __add__(self, other: LinearOperator) -> LinearOperator:
        _check_same(self, other)
        return LinearOperator(self.space, self.matrix + other.matrix, self.mode)

    def __sub__(self, other: LinearOperator) -> LinearOperator:
        _check_same(self, other)
        return LinearOperator(self.space, self.matrix - other.matrix, self.mode)

    def __mul__(self, c) -> LinearOperator:
        return LinearOperator(self.space, c * self.matrix, self.mode)

    __rmul__ = __mul__

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))


def _check_same(a, b) -> None:
    if a.space != b.space or a.mode != b.mode:
        raise DimensionMismatch("objects live on different spaces")


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def lowering_matrix(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def identity(space: TruncatedSpace, which_mode: str | None = None) -> LinearOperator:
    return LinearOperator(space, np.eye(space.mode_dim(which_mode)), which_mode)


def annihilation(space: TruncatedSpace, which_mode: str, two_mode: bool = True) -> LinearOperator:
    """Lowering operator <n-1|a|n> = sqrt(n).

    With ``two_mode`` the matrix is embedded in the two-mode space (identity on
    the other factor); otherwise it acts on the single selected mode.
    """
    single = LinearOperator(space, lowering_matrix(space.mode_dim(which_mode)), which_mode)
    if not two_mode:
        return single
    if which_mode == CAVITY:
        return tensor(single, identity(space, MECH))
    return tensor(identity(space, CAVITY), single)


def number(space: TruncatedSpace, which_mode: str, two_mode: bool = True) -> LinearOperator:
    a = annihilation(space, which_mode, two_mode)
    return a.dag() @ a


def tensor(op_a: LinearOperator, op_b: LinearOperator) -> LinearOperator:
    """Cavity (first factor) x mechanical (second factor) Kronecker product."""
    if op_a.space != op_b.space:
        raise DimensionMismatch("factors belong to different spaces")
    if op_a.mode != CAVITY or op_b.mode != MECH:
        raise DimensionMismatch("tensor expects a cavity operator and a mechanical operator")
    return LinearOperator(op_a.space, np.kron(op_a.matrix, op_b.matrix))


def tensor_states(psi_c: StateVector, psi_m: StateVector) -> StateVector:
    if psi_c.mode != CAVITY or psi_m.mode != MECH or psi_c.space != psi_m.space:
        raise DimensionMismatch("tensor_states expects a cavity and a mechanical state")
    return StateVector(psi_c.space, np.kron(psi_c.amplitudes, psi_m.amplitudes))


def basis(space: TruncatedSpace, which_mode: str | None, n: int) -> StateVector:
    v = np.zeros(space.mode_dim(which_mode), dtype=complex)
    v[n] = 1.0
    return StateVector(space, v, which_mode)


# ---------------------------------------------------------------------------
# coherent and quadrature states
# ---------------------------------------------------------------------------


def poisson_tail(mean: float, cutoff: int) -> float:
    """P(N > cutoff) for N ~ Poisson(mean)."""
    if mean <= 0:
        return 0.0
    from scipy.stats import poisson

    return float(poisson.sf(float(cutoff), mean))


def coherent_amplitudes(amplitude: complex, dim: int) -> np.ndarray:
    """Raw (untruncated-normalization) coherent amplitudes e^{-|a|^2/2} a^n / sqrt(n!)."""
    n = np.arange(dim)
    if amplitude == 0:
        out = np.zeros(dim, dtype=complex)
        out[0] = 1.0
        return out
    r = abs(amplitude)
    phase = amplitude / r
    log_mag = -0.5 * r * r + n * math.log(r) - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * phase**n


def coherent_state(space: TruncatedSpace, which_mode: str, amplitude: complex,
                   tail_tol: float = TAIL_TOLERANCE) -> StateVector:
    dim = space.mode_dim(which_mode)
    tail = poisson_tail(abs(amplitude) ** 2, dim - 1)
    if tail >= tail_tol:
        raise CutoffTooSmall(
            f"coherent amplitude {amplitude} leaves Poisson tail {tail:.3g} beyond n_max={dim - 1}"
        )
    amps = coherent_amplitudes(amplitude, dim)
    return StateVector(space, amps / np.linalg.norm(amps), which_mode)


def hermite_values(x: float, up_to: int, scaled: bool = False) -> np.ndarray:
    """Physicists' Hermite polynomials H_0..H_up_to at ``x``.

    Uses H_{m+1} = 2x H_m - 2m H_{m-1}.  With ``scaled`` the normalized values
    H_m(x) / sqrt(2^m m!) are returned instead, which stay O(e^{x^2/2}) for all
    m.  Raises OverflowError when an unscaled value would exceed
    ``HERMITE_DIRECT_LIMIT``.
    """
    if up_to < 0:
        raise ValueError("up_to must be >= 0")
    out = np.empty(up_to + 1)
    if scaled:
        out[0] = 1.0
        if up_to >= 1:
            out[1] = math.sqrt(2.0) * x
        for m in range(1, up_to):
            out[m + 1] = math.sqrt(2.0 / (m + 1)) * x * out[m] - math.sqrt(m / (m + 1)) * out[m - 1]
        return out
    out[0] = 1.0
    if up_to >= 1:
        out[1] = 2.0 * x
    for m in range(1, up_to):
        out[m + 1] = 2.0 * x * out[m] - 2.0 * m * out[m - 1]
        if abs(out[m + 1]) > HERMITE_DIRECT_LIMIT:
            raise OverflowError(f"H_{m + 1}({x}) exceeds {HERMITE_DIRECT_LIMIT:g}; use scaled=True")
    return out


def quadrature_wavefunctions(x: np.ndarray, n_max: int) -> np.ndarray:
    """Fock wavefunctions <x|m> for m = 0..n_max on a grid, shape (len(x), n_max+1).

    Vectorised version of the scaled Hermite recurrence with the Gaussian
    prefactor folded in, so no intermediate overflows.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((x.size, n_max + 1))
    out[:, 0] = np.pi ** -0.25 * np.exp(-0.5 * x * x)
    if n_max >= 1:
        out[:, 1] = math.sqrt(2.0) * x * out[:, 0]
    for m in range(1, n_max):
        out[:, m + 1] = math.sqrt(2.0 / (m + 1)) * x * out[:, m] - math.sqrt(m / (m + 1)) * out[:, m - 1]
    return out


def quadrature_eigenstate(space: TruncatedSpace, x: float, phi: float) -> StateVector:
    """Cavity amplitudes of the X_phi eigenvector |x>_phi (continuum normalized).

    Component m is e^{-x^2/2} pi^{-1/4} H_m(x) / sqrt(2^m m!) e^{-i m phi}, i.e.
    the ket coefficients; <x|psi> is ``np.vdot(result, psi)``.
    """
    n_max = space.n_max_cavity
    wf = quadrature_wavefunctions(np.array([x]), n_max)[0]
    phases = np.exp(-1j * phi * np.arange(n_max + 1))
    return StateVector(space, wf * phases, CAVITY)


# ---------------------------------------------------------------------------
# reductions and spectra
# ---------------------------------------------------------------------------


def partial_trace_mech(rho: DensityOperator) -> DensityOperator:
    if rho.mode is not None:
        raise DimensionMismatch("partial trace needs a two-mode density operator")
    dc, dm = rho.space.dim_cavity, rho.space.dim_mech
    r = rho.matrix.reshape(dc, dm, dc, dm)
    return DensityOperator(rho.space, np.einsum("imjm->ij", r), CAVITY)


def partial_trace_cavity(rho: DensityOperator) -> DensityOperator:
    if rho.mode is not None:
        raise DimensionMismatch("partial trace needs a two-mode density operator")
    dc, dm = rho.space.dim_cavity, rho.space.dim_mech
    r = rho.matrix.reshape(dc, dm, dc, dm)
    return DensityOperator(rho.space, np.einsum("ninj->ij", r), MECH)


class EigenDecompositionError(RuntimeError):
    pass


def hermitian_eigendecomposition(rho: DensityOperator | LinearOperator,
                                 herm_tol: float = 1e-8) -> tuple[np.ndarray, list[StateVector]]:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""
    mat = rho.matrix
    scale = max(1.0, float(np.max(np.abs(mat), initial=0.0)))
    if np.max(np.abs(mat - mat.conj().T), initial=0.0) > herm_tol * scale:
        raise ValueError("input is not Hermitian")
    vals, vecs = _eigh(mat)
    return vals, [StateVector(rho.space, vecs[:, i], rho.mode) for i in range(vals.size)]


def _eigh(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    herm = 0.5 * (mat + mat.conj().T)
    try:
        vals, vecs = np.linalg.eigh(herm)
    except np.linalg.LinAlgError as exc:
        raise EigenDecompositionError(str(exc)) from exc
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(vecs))):
        raise EigenDecompositionError("eigensolver returned non-finite values")
    return vals, vecs


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    diff = 0.5 * ((a - b) + (a - b).conj().T)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def reconstruct(values: Sequence[float], vectors: Sequence[StateVector]) -> np.ndarray:
    mat = np.column_stack([v.amplitudes for v in vectors])
    return (mat * np.asarray(values)) @ mat.conj().T
