"""Exact driving-free evolution, reduced cavity state and pure-state QFI.

For a coherent input |alpha>|beta> the zero-drive dynamics keeps the state in
the branch form

    |psi(t)> = sum_n c_n e^{i phi_n(t)} |n> |mu_n(t)>,

so everything is carried as per-photon-number scalars (``EvolvedStateTerms``)
and only projected onto a truncated mechanical Fock basis on request.  This
matters at the closed-system parameter point, where the centripetal term
displaces the mirror by ~1e10 phonon amplitudes between revivals.

The Omega-derivative used by the QFI is assembled with the chain rule from
central differences of the primitive model quantities (w~, g0~, G_NL~, chi~);
phases of order 1e20 rad are never differenced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .hilbert import (CAVITY, CutoffTooSmall, DensityOperator, DimensionMismatch, StateVector, TruncatedSpace,
                      coherent_amplitudes, default_cutoff, partial_trace_mech, poisson_tail)
from .model import DerivedParams, InitialState, NonzeroDrive, SystemParams, derive

#: tolerated norm lost to truncation before renormalising an evolved state
NORM_DEFICIT_TOL = 1e-8
#: relative agreement required between the delta and delta/2 derivative estimates
RICHARDSON_TOL = 1e-4


class StepTooLarge(RuntimeError):
    """Finite-difference results at delta and delta/2 disagree."""


@dataclass(frozen=True)
class EvolvedStateTerms:
    n: np.ndarray
    #: c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!) on the retained photon numbers
    weights: np.ndarray
    E: np.ndarray
    mu: np.ndarray
    tau: float
    beta_tilde: float
    #: phi_n - phi_0, computed without forming E_n^2 (see ``evolved_terms``)
    rel_phase: np.ndarray
    base_phase: float
    #: free cavity phase -(w_c - eta0) n t - eta0 n^2 t; only used in the lab frame
    free_phase: np.ndarray

    def phases(self, lab_frame: bool = False) -> np.ndarray:
        """Per-branch phases without the global phase (see ``global_phase``)."""
        return self.rel_phase + self.free_phase if lab_frame else self.rel_phase

    def global_phase(self) -> complex:
        # base_phase can reach ~1e20 rad, so it is kept out of the per-branch sums
        return complex(np.exp(1j * math.remainder(self.base_phase, 2 * math.pi)))

    def probabilities(self) -> np.ndarray:
        p = np.abs(self.weights) ** 2
        return p / p.sum()


@dataclass(frozen=True)
class _Primitives:
    wt: float
    g: float  # g0~ - G_NL~
    G: float  # G_NL~
    chi: float  # chi~

    @classmethod
    def of(cls, d: DerivedParams) -> _Primitives:
        return cls(d.omega_m_tilde, d.g0_tilde - d.G_NL_tilde, d.G_NL_tilde, d.chi_tilde)


def cavity_cutoff(init: InitialState, space: TruncatedSpace | None) -> int:
    return space.n_max_cavity if space is not None else default_cutoff(init.alpha)


def _terms_from(prim: _Primitives, params: SystemParams, init: InitialState, t: float,
                n_max: int) -> EvolvedStateTerms:
    n = np.arange(n_max + 1, dtype=float)
    th = prim.wt * t
    lam = 1.0 - np.exp(-1j * th)
    beta = complex(init.beta)
    P = prim.g * n + prim.G * n * n  # E_n + chi~
    E = P - prim.chi
    mu = beta * np.exp(-1j * th) - E * lam
    tau = th - math.sin(th)
    bt = beta.real * math.sin(th) + beta.imag * (1.0 - math.cos(th))
    # E_n^2 - E_0^2 = P_n (P_n - 2 chi~)
    rel = P * (P - 2.0 * prim.chi) * tau - P * bt
    base = prim.chi**2 * tau + prim.chi * bt
    lin = params.omega_c - params.eta0 if params.detuning is None else params.detuning
    free = -(lin * n + params.eta0 * n * n) * t
    weights = coherent_amplitudes(complex(init.alpha), n_max + 1)
    return EvolvedStateTerms(n, weights, E, mu, tau, bt, rel, base, free)


def evolved_terms(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                  n_max_cavity: int | None = None) -> EvolvedStateTerms:
    if params.drive_amplitude != 0:
        raise NonzeroDrive("exact evolution needs zero drive")
    n_max = n_max_cavity if n_max_cavity is not None else default_cutoff(init.alpha)
    return _terms_from(_Primitives.of(derived), params, init, t, n_max)


def comoving_displacement(derived: DerivedParams, t: float) -> complex:
    """Mirror displacement chi~ (1 - e^{-i w~ t}) driven by the centripetal force alone."""
    return derived.chi_tilde * (1.0 - np.exp(-1j * derived.omega_m_tilde * t))


def evolve_exact(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                 space: TruncatedSpace, lab_frame: bool = False,
                 comoving: bool = False) -> StateVector:
    """Evolved state projected on ``space``.

    By default the free cavity rotation exp(-i t[(w_c - eta0) n + eta0 n^2]) is
    left out (interaction picture); ``lab_frame`` puts it back.  ``comoving``
    returns the state in the mechanical frame displaced by
    ``comoving_displacement`` (amplitudes mu_n - d, with the displacement phase).
    """
    terms = evolved_terms(params, derived, init, t, space.n_max_cavity)
    mu = terms.mu
    phase = terms.phases(lab_frame)
    if comoving:
        d = comoving_displacement(derived, t)
        # D(-d)|mu> = e^{i Im(d* mu)} |mu - d>
        phase = phase + np.imag(np.conj(d) * mu)
        mu = mu - d
    dm = space.dim_mech
    p = terms.probabilities()
    deficit = float(np.sum(p * np.array([poisson_tail(abs(m) ** 2, dm - 1) for m in mu])))
    cav_deficit = 1.0 - float(np.sum(np.abs(terms.weights) ** 2))
    if deficit > NORM_DEFICIT_TOL or cav_deficit > NORM_DEFICIT_TOL:
        raise CutoffTooSmall(
            f"truncation loses norm {max(deficit, cav_deficit):.3g} "
            f"(max |mu_n| = {np.max(np.abs(mu)):.3g}, n_max_mech = {dm - 1})"
        )
    psi = np.empty((space.dim_cavity, dm), dtype=complex)
    for k in range(space.dim_cavity):
        psi[k] = terms.weights[k] * np.exp(1j * phase[k]) * coherent_amplitudes(complex(mu[k]), dm)
    psi = psi.reshape(-1) * terms.global_phase()
    return StateVector(space, psi / np.linalg.norm(psi))


def mech_cutoff_for(params: SystemParams, derived: DerivedParams, init: InitialState,
                    t: float, n_max_cavity: int) -> int:
    """Mechanical cutoff rule ceil(m^2 + 8 m + 10), m the largest retained |mu_n|."""
    terms = evolved_terms(params, derived, init, t, n_max_cavity)
    m = float(np.max(np.abs(terms.mu)))
    return max(1, math.ceil(m * m + 8 * m + 10))


def path_mech_cutoff(params: SystemParams, derived: DerivedParams, init: InitialState,
                     t: float, n_max_cavity: int, samples: int = 17) -> int:
    """Mechanical cutoff large enough for every time in [0, t].

    A dense propagator needs room for the branches along the whole path, and
    near a revival the final amplitudes understate how far they travelled.
    """
    times = np.linspace(0.0, t, samples)
    return max(mech_cutoff_for(params, derived, init, float(s), n_max_cavity) for s in times)


def _overlaps(mu: np.ndarray) -> np.ndarray:
    """<mu_j|mu_i> for all pairs, written to avoid exp(-|mu|^2) underflow."""
    diff = mu[:, None] - mu[None, :]
    mu0 = mu[0]
    dmu = mu - mu0
    # Im(mu_j^* mu_i) with the common |mu_0|^2 removed
    im = np.imag(np.conj(mu0) * dmu[:, None] + np.conj(dmu)[None, :] * mu0
                 + np.conj(dmu)[None, :] * dmu[:, None])
    return np.exp(-0.5 * np.abs(diff) ** 2 + 1j * im)


def reduced_cavity_matrix(terms: EvolvedStateTerms, lab_frame: bool = False) -> np.ndarray:
    c = terms.weights / np.linalg.norm(terms.weights)
    ph = terms.rel_phase + (terms.free_phase if lab_frame else 0.0)
    amp = c * np.exp(1j * ph)
    return np.outer(amp, amp.conj()) * _overlaps(terms.mu)


def reduced_cavity_state(params: SystemParams, derived: DerivedParams, init: InitialState,
                         t: float, space: TruncatedSpace, lab_frame: bool = False) -> DensityOperator:
    terms = evolved_terms(params, derived, init, t, space.n_max_cavity)
    return DensityOperator(space, reduced_cavity_matrix(terms, lab_frame), CAVITY)


def fidelity(a, b) -> float:
    """|<a|b>|^2 for state vectors, Uhlmann fidelity (squared form) for density operators."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return min(1.0, abs(a.inner(b)) ** 2)
    ma = a.projector().matrix if isinstance(a, StateVector) else a.matrix
    mb = b.projector().matrix if isinstance(b, StateVector) else b.matrix
    if ma.shape != mb.shape:
        raise DimensionMismatch("fidelity between different spaces")
    w, v = np.linalg.eigh(0.5 * (ma + ma.conj().T))
    sa = (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    inner = sa @ mb @ sa
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    f = float(np.sum(np.sqrt(np.clip(ev, 0, None)))) ** 2
    return min(1.0, max(0.0, f))


# ---------------------------------------------------------------------------
# QFI
# ---------------------------------------------------------------------------


def default_delta(params: SystemParams) -> float:
    return 1e-6 * max(abs(params.omega_rotation), params.omega_m)


def primitive_derivatives(family: Callable[[float], DerivedParams], omega: float,
                          delta: float) -> tuple[_Primitives, _Primitives]:
    """Values and central-difference derivatives of w~, g0~-G_NL~, G_NL~, chi~."""
    p0 = _Primitives.of(family(omega))
    pp = _Primitives.of(family(omega + delta))
    pm = _Primitives.of(family(omega - delta))
    dp = _Primitives(*((a - b) / (2 * delta) for a, b in
                       zip(vars(pp).values(), vars(pm).values())))
    return p0, dp


@dataclass(frozen=True)
class BranchDerivative:
    """Per-branch data needed for Fisher information."""

    p: np.ndarray
    mu: np.ndarray
    dmu: np.ndarray
    #: d(phi_n)/dOmega
    dphase: np.ndarray
    terms: EvolvedStateTerms


def branch_derivative(params: SystemParams, init: InitialState, t: float, n_max: int,
                      family: Callable[[float], DerivedParams], delta: float) -> BranchDerivative:
    prim, dprim = primitive_derivatives(family, params.omega_rotation, delta)
    terms = _terms_from(prim, params, init, t, n_max)
    n = terms.n
    th = prim.wt * t
    dth = dprim.wt * t
    e = np.exp(-1j * th)
    lam = 1.0 - e
    dlam = 1j * e * dth
    beta = complex(init.beta)
    E = terms.E
    dE = dprim.g * n + dprim.G * n * n - dprim.chi
    dmu = -1j * dth * beta * e - dE * lam - E * dlam
    dtau = (1.0 - math.cos(th)) * dth
    dbt = (beta.real * math.cos(th) + beta.imag * math.sin(th)) * dth
    dphase = 2.0 * E * dE * terms.tau + E * E * dtau - dE * terms.beta_tilde - E * dbt
    return BranchDerivative(terms.probabilities(), terms.mu, dmu, dphase, terms)


def _qfi_from_branches(bd: BranchDerivative) -> float:
    # d|psi_n> = e^{i phi}[ i v_n + dmu (b^dag - mu^*) ] |mu_n>,  v_n = phi' + Im(dmu mu^*)
    v = bd.dphase + np.imag(bd.dmu * np.conj(bd.mu))
    mean = np.sum(bd.p * v)
    var = np.sum(bd.p * (v - mean) ** 2)
    return float(4.0 * (np.sum(bd.p * np.abs(bd.dmu) ** 2) + var))


def richardson(fn: Callable[[float], float], delta: float, tol: float = RICHARDSON_TOL) -> float:
    """Evaluate at delta and delta/2; raise StepTooLarge unless they agree."""
    coarse = fn(delta)
    fine = fn(0.5 * delta)
    scale = max(abs(coarse), abs(fine))
    if scale > 0 and abs(coarse - fine) > tol * scale:
        raise StepTooLarge(f"derivative estimate changed from {coarse:.10g} to {fine:.10g} when halving delta")
    return fine


def qfi_pure_numeric(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                     space: TruncatedSpace | None = None, delta_omega: float | None = None,
                     frozen: bool = False, method: str = "branches") -> float:
    """Pure-state QFI 4[<d psi|d psi> - |<psi|d psi>|^2] of the evolved state.

    ``method="branches"`` differentiates the branch representation (works at
    any coupling strength); ``method="state"`` differences full Fock-space state
    vectors from ``evolve_exact`` and needs a ``space`` that holds them.
    """
    if params.drive_amplitude != 0:
        raise NonzeroDrive("pure numeric QFI uses the zero-drive solution")
    delta = delta_omega if delta_omega is not None else default_delta(params)
    family = _family(params, derived, frozen)
    if method == "branches":
        n_max = cavity_cutoff(init, space)
        return richardson(lambda h: _qfi_from_branches(
            branch_derivative(params, init, t, n_max, family, h)), delta)
    if method == "state":
        if space is None:
            raise ValueError("method='state' needs an explicit space")
        return richardson(lambda h: _qfi_state_fd(params, init, t, space, family, h), delta)
    raise ValueError(f"unknown method {method!r}")


def _family(params: SystemParams, derived: DerivedParams, frozen: bool):
    if frozen:
        return lambda omega: derived
    return lambda omega: derive(params, derived.units, omega)


def _qfi_state_fd(params, init, t, space, family, h) -> float:
    om = params.omega_rotation
    psi = evolve_exact(params, family(om), init, t, space).amplitudes
    plus = evolve_exact(params, family(om + h), init, t, space).amplitudes
    minus = evolve_exact(params, family(om - h), init, t, space).amplitudes
    dpsi = (plus - minus) / (2 * h)
    return pure_qfi(psi, dpsi)


def pure_qfi(psi: np.ndarray, dpsi: np.ndarray) -> float:
    """4[<dpsi|dpsi> - |<psi|dpsi>|^2] with the parallel part removed first."""
    ov = np.vdot(psi, dpsi)
    perp = dpsi - ov * psi
    # <dpsi|dpsi> - |<psi|dpsi>|^2 = |perp|^2 for normalised psi
    return float(4.0 * np.vdot(perp, perp).real)


def qfi_pure_numeric_at(params: SystemParams, init: InitialState, theta: float, units=None,
                        **kw) -> float:
    d = derive(params, units)
    return qfi_pure_numeric(params, d, init, theta / d.omega_m_tilde, **kw)


def partial_trace_check(params, derived, init, t, space) -> float:
    """Max elementwise gap between ptr(evolve_exact) and the closed-form reduced state."""
    psi = evolve_exact(params, derived, init, t, space)
    num = partial_trace_mech(psi.projector()).matrix
    ana = reduced_cavity_state(params, derived, init, t, space).matrix
    return float(np.max(np.abs(num - ana)))
