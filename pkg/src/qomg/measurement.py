"""Homodyne quadrature statistics and their classical Fisher information.

The measured state is the reduced cavity state of the driving-free
evolution, taken in the frame that co-rotates with the free cavity field (a
local oscillator locked to the cavity).  Quadrature eigenstates follow the
ket convention of ``hilbert.quadrature_eigenstate``, so

    P(x) = sum_{n,n'} w_n(x) w_n'(x) e^{i(n - n') phi} rho_{n n'}.

dP/dOmega is obtained with the chain rule from the branch derivatives of the
evolution module, never by differencing P itself: at the closed-system
parameter point the cavity phases move by ~1e16 rad across a finite-difference
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolution import (RICHARDSON_TOL, BranchDerivative, StepTooLarge, _family, _overlaps,
                        branch_derivative, cavity_cutoff, default_delta, reduced_cavity_matrix,
                        evolved_terms)
from .hilbert import DensityOperator, TruncatedSpace, quadrature_eigenstate, quadrature_wavefunctions
from .model import DerivedParams, InitialState, NonzeroDrive, SystemParams
from .scan import ScanResult

NORMALIZATION_TOL = 1e-6
#: points with P below this fraction of max P are dropped from the CFI integrand
PROBABILITY_FLOOR = 1e-14
MAX_REFINEMENTS = 8
INITIAL_POINTS = 257


class GridInadequate(RuntimeError):
    """The quadrature grid failed to normalize P(x) after the allowed refinements."""


@dataclass(frozen=True)
class QuadratureGrid:
    phi: float
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3 or self.x_max <= self.x_min:
            raise ValueError("grid needs x_max > x_min and at least 3 points")

    @classmethod
    def symmetric(cls, n_max: int, phi: float = 0.0, n_points: int = INITIAL_POINTS) -> QuadratureGrid:
        x_max = math.sqrt(2 * n_max) + 5.0
        return cls(phi, -x_max, x_max, n_points)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def weights(self) -> np.ndarray:
        h = (self.x_max - self.x_min) / (self.n_points - 1)
        w = np.full(self.n_points, h)
        w[0] = w[-1] = 0.5 * h
        return w

    def refined(self) -> QuadratureGrid:
        return QuadratureGrid(self.phi, self.x_min, self.x_max, 2 * self.n_points - 1)


@dataclass(frozen=True)
class ProbabilityCurve:
    grid: QuadratureGrid
    values: np.ndarray

    def __post_init__(self):
        if np.min(self.values) < -1e-12:
            raise ValueError(f"negative probability density {np.min(self.values):.3g}")

    @property
    def normalization(self) -> float:
        return float(np.dot(self.grid.weights, self.values))


def _lo_vectors(grid: QuadratureGrid, n_max: int) -> np.ndarray:
    """Rows w_m(x) e^{i m phi}: the bras <x|_phi in the Fock basis."""
    w = quadrature_wavefunctions(grid.x, n_max)
    return w * np.exp(1j * grid.phi * np.arange(n_max + 1))


def density_on_grid(rho: np.ndarray, grid: QuadratureGrid) -> np.ndarray:
    """<x|rho|x> on the grid by the explicit double sum."""
    v = _lo_vectors(grid, rho.shape[0] - 1)
    return np.einsum("xn,nm,xm->x", v, rho, v.conj()).real


def density_by_sandwich(rho: DensityOperator, grid: QuadratureGrid) -> np.ndarray:
    """<x|rho|x> from explicit quadrature eigenstates, one point at a time."""
    out = np.empty(grid.n_points)
    for i, x in enumerate(grid.x):
        ket = quadrature_eigenstate(rho.space, float(x), grid.phi).amplitudes
        out[i] = np.vdot(ket, rho.matrix @ ket).real
    return out


def _adequate_grid(rho: np.ndarray, grid: QuadratureGrid) -> tuple[QuadratureGrid, np.ndarray]:
    for _ in range(MAX_REFINEMENTS + 1):
        p = density_on_grid(rho, grid)
        norm = float(np.dot(grid.weights, p))
        if abs(norm - 1.0) <= NORMALIZATION_TOL:
            return grid, p
        grid = grid.refined()
    raise GridInadequate(f"P(x) normalization {norm:.10g} after {MAX_REFINEMENTS} refinements")


def _cavity_rho(params, derived, init, t, n_max, lab_frame=False) -> np.ndarray:
    if params.drive_amplitude != 0:
        raise NonzeroDrive("quadrature statistics use the zero-drive reduced state")
    return reduced_cavity_matrix(evolved_terms(params, derived, init, t, n_max), lab_frame)


def quadrature_distribution(params: SystemParams, derived: DerivedParams, init: InitialState,
                            t: float, grid: QuadratureGrid | None = None,
                            n_max_cavity: int | None = None, check_paths: bool = True) -> ProbabilityCurve:
    """P(x|Omega), with the grid refined until it integrates to 1.

    ``check_paths`` also evaluates the quadrature-eigenstate sandwich and
    raises if it disagrees with the double sum by more than 1e-8 anywhere.
    """
    n_max = n_max_cavity if n_max_cavity is not None else cavity_cutoff(init, None)
    if grid is None:
        grid = QuadratureGrid.symmetric(n_max)
    rho = _cavity_rho(params, derived, init, t, n_max)
    grid, p = _adequate_grid(rho, grid)
    if check_paths:
        space = TruncatedSpace(n_max, 1)
        alt = density_by_sandwich(DensityOperator(space, rho, "cavity"), grid)
        gap = float(np.max(np.abs(alt - p)))
        if gap > 1e-8:
            raise RuntimeError(f"double-sum and sandwich densities differ by {gap:.3g}")
    return ProbabilityCurve(grid, np.clip(p, 0.0, None))


def cavity_rho_derivative(bd: BranchDerivative) -> tuple[np.ndarray, np.ndarray]:
    """rho_c and d rho_c / dOmega from branch data.

    With rho_{nn'} = A_n A_n'^* <mu_n'|mu_n>, the log-derivative is
    i(phi'_n - phi'_n') - Re(mu_n^* mu'_n) - Re(mu_n'^* mu'_n') + mu'_n'^* mu_n + mu_n'^* mu'_n.
    """
    terms = bd.terms
    c = terms.weights / np.linalg.norm(terms.weights)
    amp = c * np.exp(1j * terms.rel_phase)
    rho = np.outer(amp, amp.conj()) * _overlaps(bd.mu)
    mu, dmu = bd.mu, bd.dmu
    a = np.real(np.conj(mu) * dmu)
    log_d = (1j * (bd.dphase[:, None] - bd.dphase[None, :]) - a[:, None] - a[None, :]
             + np.conj(dmu)[None, :] * mu[:, None] + np.conj(mu)[None, :] * dmu[:, None])
    return rho, rho * log_d


def _cfi_from(rho, drho, grid) -> float:
    v = _lo_vectors(grid, rho.shape[0] - 1)
    p = np.einsum("xn,nm,xm->x", v, rho, v.conj()).real
    dp = np.einsum("xn,nm,xm->x", v, drho, v.conj()).real
    keep = p >= PROBABILITY_FLOOR * np.max(p)
    integrand = np.zeros_like(p)
    integrand[keep] = dp[keep] ** 2 / p[keep]
    return float(np.dot(grid.weights, integrand))


def cfi(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
        grid: QuadratureGrid | None = None, delta_omega: float | None = None,
        frozen: bool = False, n_max_cavity: int | None = None) -> float:
    """Classical Fisher information of the quadrature measurement at ``grid.phi``."""
    if params.drive_amplitude != 0:
        raise NonzeroDrive("CFI uses the zero-drive reduced state")
    n_max = n_max_cavity if n_max_cavity is not None else cavity_cutoff(init, None)
    if grid is None:
        grid = QuadratureGrid.symmetric(n_max)
    delta = delta_omega if delta_omega is not None else default_delta(params)
    family = _family(params, derived, frozen)

    def at(h):
        rho, drho = cavity_rho_derivative(branch_derivative(params, init, t, n_max, family, h))
        return rho, drho

    rho, drho = at(delta)
    grid, _ = _adequate_grid(rho, grid)
    coarse = _cfi_from(rho, drho, grid)
    fine = _cfi_from(*at(0.5 * delta), grid)
    scale = max(abs(coarse), abs(fine))
    if scale > 0 and abs(coarse - fine) > RICHARDSON_TOL * scale:
        raise StepTooLarge(f"CFI changed from {coarse:.10g} to {fine:.10g} when halving delta")
    return fine


def cfi_phase_scan(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                   phi_list, delta_omega: float | None = None) -> ScanResult:
    """CFI for each local-oscillator phase; ``metadata['argmax']`` holds the best phase."""
    phis = list(phi_list)
    if not phis:
        raise ValueError("phase list must not be empty")
    n_max = cavity_cutoff(init, None)
    rows = []
    for phi in phis:
        value = cfi(params, derived, init, t, QuadratureGrid.symmetric(n_max, float(phi)), delta_omega)
        rows.append((float(phi), value))
    best = max(rows, key=lambda r: r[1])
    return ScanResult("cfi_phase_scan", ["quadrature_phase", "cfi"], rows,
                      {"argmax": best[0], "max_cfi": best[1], "n_max_cavity": n_max})
