"""Brute-force cross-check suites run by ``qomg oracle``.

Each suite compares a fast path against an independent slow one (dense
matrices, matrix exponentials, explicit sandwiches) or checks a conservation
law, and reports one ``Check`` per comparison.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sl

from .evolution import (evolve_exact, path_mech_cutoff, partial_trace_check, qfi_pure_numeric,
                        reduced_cavity_state)
from .hilbert import (CAVITY, MECH, DensityOperator, LinearOperator, TruncatedSpace, annihilation, coherent_state,
                      hermitian_eigendecomposition, number, partial_trace_mech,
                      quadrature_wavefunctions, reconstruct, tensor_states, trace_distance)
from .measurement import QuadratureGrid, cfi, quadrature_distribution
from .model import (InitialState, SystemParams, UnitMode, UnitSystem, derive, fig2_params,
                    hamiltonian_driving_free, hamiltonian_full, displaced_oscillator_levels,
                    photon_block, lossy_params)
from .open_system import LindbladConfig, lindblad_evolve, qfi_mixed
from .qfi_analytic import (GeneratorCoefficients, brute_force_moments, coefficients, moment_table,
                           qfi_closed_form)


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _check(name: str, value: float, tol: float, what: str = "error") -> Check:
    ok = bool(np.isfinite(value) and value <= tol)
    return Check(name, ok, f"{what} {value:.3g} (tolerance {tol:.3g})")


#: unit system with frequencies already dimensionless and hbar = 1, used for small-coupling oracles
TOY_UNITS = UnitSystem(UnitMode.DIMENSIONLESS, 1.0, 1.0)


def toy_params(rng: np.random.Generator) -> SystemParams:
    """Random couplings small enough that dense matrices in modest spaces are converged."""
    return SystemParams(omega_c=rng.uniform(0.5, 2.0), eta0=rng.uniform(0.0, 0.05), omega_m=1.0,
                        omega_rotation=rng.uniform(0.1, 1.0), g0_tilde=rng.uniform(0.02, 0.15),
                        gnl_ratio=rng.uniform(0.0, 0.3), distance_D=1e-14)


def _product_state(space, init, tail_tol=1e-6):
    return tensor_states(coherent_state(space, CAVITY, init.alpha, tail_tol),
                         coherent_state(space, MECH, init.beta, tail_tol))


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def hilbert_suite() -> list[Check]:
    out = []
    space = TruncatedSpace(40, 20)
    for amp in (math.sqrt(5.0), 1.0 + 1.0j):
        psi = _product_state(space, InitialState(amp, 1.0), 1e-10)
        out.append(_check(f"coherent product norm, alpha={amp}", abs(psi.norm() - 1.0), 1e-10))
    a = annihilation(space, CAVITY, two_mode=False).matrix
    comm = a @ a.conj().T - a.conj().T @ a
    out.append(_check("[a, a^dag] = 1 below the cutoff", float(np.max(np.abs(comm[:-1, :-1] - np.eye(40)))), 1e-12))
    psi_c = coherent_state(space, CAVITY, 1.5 - 0.5j).amplitudes
    psi_m = coherent_state(space, MECH, 0.7).amplitudes
    rho = DensityOperator(space, np.kron(np.outer(psi_c, psi_c.conj()), np.outer(psi_m, psi_m.conj())))
    red = partial_trace_mech(rho)
    gap = float(np.max(np.abs(red.matrix - np.outer(psi_c, psi_c.conj()) * np.vdot(psi_m, psi_m).real)))
    out.append(_check("partial trace of a product state", gap, 1e-12))
    out.append(_check("density operator trace", abs(rho.trace() - 1.0), 1e-8))
    x = np.linspace(-14.0, 14.0, 4001)
    w = quadrature_wavefunctions(x, 30)
    gram = (w * (x[1] - x[0])).T @ w
    out.append(_check("quadrature wavefunctions orthonormal (n <= 30)", float(np.max(np.abs(gram - np.eye(31)))), 1e-8))
    rng = np.random.default_rng(11)
    m = rng.normal(size=(60, 60)) + 1j * rng.normal(size=(60, 60))
    m = m + m.conj().T
    vals, vecs = hermitian_eigendecomposition(LinearOperator(TruncatedSpace(59, 1), m, CAVITY))
    out.append(_check("eigendecomposition reconstructs a random Hermitian matrix",
                      float(np.max(np.abs(reconstruct(vals, vecs) - m))) / float(np.max(np.abs(m))), 1e-12))
    return out


def model_suite() -> list[Check]:
    out = []
    rng = np.random.default_rng(3)
    for k in range(3):
        p = toy_params(rng)
        d = derive(p, TOY_UNITS)
        space = TruncatedSpace(8, 30)
        h1 = hamiltonian_full(p, d, space).matrix
        h2 = hamiltonian_driving_free(p, d, space).matrix
        scale = float(np.max(np.abs(h1)))
        out.append(_check(f"full (eps=0) vs scaled driving-free Hamiltonian #{k}",
                          float(np.max(np.abs(h1 - h2))) / scale, 1e-12, "relative gap"))
        out.append(_check(f"Hamiltonian Hermitian #{k}", float(np.max(np.abs(h1 - h1.conj().T))) / scale, 1e-14))
        nc = number(space, CAVITY).matrix
        out.append(_check(f"[H, a^dag a] = 0 (photon number conserved) #{k}",
                          float(np.max(np.abs(h2 @ nc - nc @ h2))) / scale, 1e-12))
        n = 3
        block = photon_block(p, d, TruncatedSpace(8, 80), n)
        ev = np.linalg.eigvalsh(block)[:5]
        ref = displaced_oscillator_levels(p, d, n, 5)
        out.append(_check(f"photon block spectrum vs displaced oscillator #{k}",
                          float(np.max(np.abs(ev - ref))) / max(1.0, float(np.max(np.abs(ref)))), 1e-9))
    driven = toy_params(rng).replace(drive_amplitude=0.3, drive_phase=0.7)
    h = hamiltonian_full(driven, derive(driven, TOY_UNITS), TruncatedSpace(8, 10)).matrix
    out.append(_check("driven Hamiltonian Hermitian", float(np.max(np.abs(h - h.conj().T))), 1e-12))
    return out


VANISHING_ENTRY = 1e-9


def random_coefficients(rng: np.random.Generator) -> GeneratorCoefficients:
    """O(1) coefficients: the moment polynomials are identities in the coefficients,
    and unit-scale values keep the matrix path free of cancellation."""
    cplx = lambda: complex(*rng.normal(size=2))  # noqa: E731
    return GeneratorCoefficients(0.0, 0j, rng.normal(), rng.normal(), cplx(), rng.normal(), cplx(),
                                 rng.normal(), rng.normal(), cplx())


def moment_errors(c: GeneratorCoefficients, init: InitialState, space: TruncatedSpace) -> tuple[float, float]:
    """(max entrywise relative error, relative error of the total variance)."""
    psi = _product_state(space, init, 1e-10).amplitudes
    bf = brute_force_moments(c, psi, space)
    an = moment_table(c, init)
    num = np.concatenate([an.variances, an.covariances.ravel()])
    ref = np.concatenate([bf.variances, bf.covariances.ravel()])
    # entries that vanish identically are compared at a small fraction of their
    # Cauchy-Schwarz bound sqrt(Var_i Var_j) instead of at zero
    bound = np.sqrt(np.outer(bf.variances, bf.variances))
    floor = np.concatenate([bf.variances, bound.ravel()]) * VANISHING_ENTRY
    scale = np.maximum(np.abs(ref), floor)
    entry = float(np.max(np.where(scale > 0, np.abs(num - ref) / np.where(scale > 0, scale, 1.0), 0.0)))
    return entry, abs(an.total() - bf.total()) / abs(bf.total())


def qfi_analytic_suite() -> list[Check]:
    out = []
    space = TruncatedSpace(40, 40)
    rng = np.random.default_rng(5)
    coeff_sets = [("random #0", random_coefficients(rng)), ("random #1", random_coefficients(rng))]
    p = fig2_params()
    d = derive(p)
    phys = [(f"closed-system point theta={th:.4g}", coefficients(d, th / d.omega_m_tilde)) for th in (math.pi / 2, 2 * math.pi)]
    for Nc in (1, 2, 4):
        for Nm in (0, 1):
            init = InitialState(math.sqrt(Nc), math.sqrt(Nm))
            for label, c in coeff_sets:
                entry, _ = moment_errors(c, init, space)
                out.append(_check(f"moment table vs matrix moments, {label}, Nc={Nc}, Nm={Nm}",
                                  entry, 1e-6, "max entrywise relative error"))
            for label, c in phys:
                _, total = moment_errors(c, init, space)
                out.append(_check(f"total generator variance, {label}, Nc={Nc}, Nm={Nm}",
                                  total, 1e-6, "relative error"))
    init = InitialState()
    for theta in (math.pi / 2, math.pi, 2 * math.pi):
        t = theta / d.omega_m_tilde
        a = qfi_closed_form(p, d, init, t)
        n = qfi_pure_numeric(p, d, init, t)
        out.append(_check(f"closed-form vs numeric QFI, theta={theta:.4g}", abs(a - n) / abs(n), 1e-4,
                          "relative error"))
    return out


def expm_points(count: int = 10, seed: int = 7):
    """Random (params, t) points paired with spaces whose dense propagators are converged."""
    rng = np.random.default_rng(seed)
    init = InitialState(0.8 + 0.3j, 0.5)
    for _ in range(count):
        p = toy_params(rng)
        d = derive(p, TOY_UNITS)
        t = float(rng.uniform(0.0, 2 * math.pi))
        nm = min(60, path_mech_cutoff(p, d, init, t, 12))
        yield p, d, init, t, TruncatedSpace(12, nm)


def expm_fidelity(p, d, init, t, space) -> float:
    h = hamiltonian_driving_free(p, d, space).matrix
    ref = sl.expm(-1j * t * h) @ _product_state(space, init).amplitudes
    ref /= np.linalg.norm(ref)
    psi = evolve_exact(p, d, init, t, space, lab_frame=True).amplitudes
    return abs(np.vdot(ref, psi)) ** 2


def evolution_suite() -> list[Check]:
    out = []
    for k, (p, d, init, t, space) in enumerate(expm_points()):
        f = expm_fidelity(p, d, init, t, space)
        out.append(_check(f"evolve_exact vs matrix exponential #{k} (t={t:.3g})", 1.0 - f, 1e-6, "infidelity"))
    p, d, init, t, space = next(iter(expm_points(1, seed=19)))
    psi = evolve_exact(p, d, init, t, space)
    out.append(_check("evolved state norm (reduced couplings)", abs(psi.norm() - 1.0), 1e-8))
    out.append(_check("partial trace of evolved state vs closed-form reduced state",
                      partial_trace_check(p, d, init, t, space), 1e-8))
    p = fig2_params()
    d = derive(p)
    init = InitialState()
    t = math.pi / d.omega_m_tilde
    space = TruncatedSpace(33, 1)
    red = reduced_cavity_state(p, d, init, t, space)
    out.append(_check("reduced cavity state trace", abs(red.trace() - 1.0), 1e-8))
    pn = np.real(np.diag(red.matrix))
    p0 = np.abs(coherent_state(space, CAVITY, init.alpha, 1e-8).amplitudes) ** 2
    out.append(_check("photon-number distribution conserved", float(np.max(np.abs(pn - p0))), 1e-8))
    return out


def measurement_suite() -> list[Check]:
    out = []
    p = fig2_params()
    d = derive(p)
    init = InitialState(math.sqrt(5.4), math.sqrt(0.6))
    for theta in (math.pi / 2, 2 * math.pi):
        t = theta / d.omega_m_tilde
        for phi in (0.0, 1.0, 2.0):
            curve = quadrature_distribution(p, d, init, t, QuadratureGrid.symmetric(33, phi))
            out.append(_check(f"P(x) normalization, theta={theta:.4g}, phi={phi}",
                              abs(curve.normalization - 1.0), 1e-6))
        q = qfi_pure_numeric(p, d, init, t)
        c = cfi(p, d, init, t)
        out.append(Check(f"CFI <= QFI, theta={theta:.4g}", c <= q * (1 + 1e-6), f"CFI {c:.6g}, QFI {q:.6g}"))
    return out


def open_system_suite() -> list[Check]:
    out = []
    units = UnitSystem.dimensionless()
    p = lossy_params(g0_tilde=1e4)
    d = derive(p, units)
    init = InitialState()
    space = TruncatedSpace(20, 12)
    rho = lindblad_evolve(p, d, init, LindbladConfig(kappa=0.0), space)
    big = TruncatedSpace(40, 12)
    psi = evolve_exact(p, d, init, 2 * math.pi, big, lab_frame=True, comoving=True).amplitudes
    psi = psi.reshape(41, 13)[:21].reshape(-1)
    psi = psi / np.linalg.norm(psi)
    out.append(_check("unitary limit: Lindblad (kappa=0) vs exact evolution",
                      trace_distance(rho.matrix, np.outer(psi, psi.conj())), 1e-6, "trace distance"))
    out.append(_check("Lindblad trace", abs(rho.trace() - 1.0), 1e-6))
    kappa = 0.3
    small = TruncatedSpace(22, 1)
    decay = lindblad_evolve(p, d, InitialState(init.alpha, 0.0),
                            LindbladConfig(kappa=kappa, zero_hamiltonian=True), small)
    n_mean = float(np.real(np.trace(number(small, CAVITY).matrix @ decay.matrix)))
    ref = init.n_cavity * math.exp(-kappa * 2 * math.pi)
    out.append(_check("pure photon decay <n>(t) = N_c exp(-kappa t)", abs(n_mean - ref) / ref, 1e-6,
                      "relative error"))
    out.append(_check("pure decay trace", abs(decay.trace() - 1.0), 1e-6))
    tiny = TruncatedSpace(12, 8)
    cfg = LindbladConfig(kappa=0.1, h=2 * math.pi / 250, tail_tol=1e-2)
    ft = qfi_mixed(p, d, init, cfg, tiny, check_step=False)
    ff = qfi_mixed(p, d, init, cfg, tiny, method="fd", check_step=False)
    out.append(_check("mixed QFI: tangent equation vs finite differences", abs(ft - ff) / abs(ff), 1e-6,
                      "relative gap"))
    return out


def experiments_suite() -> list[Check]:
    from .experiments import get_scenario, reference_curves, run_scenario

    out = []
    s = get_scenario("fig4")
    a, b = run_scenario(s), run_scenario(s)
    out.append(Check("fig4 rerun is byte-identical", a.csv_text() == b.csv_text(), "CSV bodies compared"))
    c = run_scenario(s, jobs=2)
    out.append(Check("fig4 with two workers matches one worker", a.csv_text() == c.csv_text(),
                     "CSV bodies compared"))
    ref = reference_curves([1, 10])
    out.append(Check("SQL/HL reference curves", ref.rows == [(1.0, 1.0, 1.0), (10.0, 10.0, 100.0)],
                     f"rows {ref.rows}"))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "hilbert": hilbert_suite,
    "model": model_suite,
    "qfi-analytic": qfi_analytic_suite,
    "evolution": evolution_suite,
    "measurement": measurement_suite,
    "open-system": open_system_suite,
    "experiments": experiments_suite,
}


def run_suites(names) -> tuple[list[Check], dict[str, float]]:
    """Run the named suites in order; a suite that raises becomes one failing check."""
    checks, timing = [], {}
    for name in names:
        start = time.perf_counter()
        try:
            checks += SUITES[name]()
        except Exception as exc:
            checks.append(Check(f"{name} suite", False, f"raised {type(exc).__name__}: {exc}"))
        timing[name] = time.perf_counter() - start
    return checks, timing
