"""Driven and dissipative dynamics, mixed-state QFI.

The master equation dρ/dt = -i[H, ρ] + κ(a ρ a† - {a†a, ρ}/2) is integrated
with fixed-step RK4 in a frame chosen so that small Fock cutoffs suffice:

* the mechanical mode is displaced by d(t) = χ~(1 - e^{-i w~ t}), the
  trajectory driven by the centripetal force alone, which removes the
  dominant O(χ~ w~ t) displacement;
* the cavity diagonal c_n = (w_c - η0) n + η0 n² is moved into an interaction
  picture, which removes the fast optical rotation and does not depend on Ω.

In that frame the Hamiltonian is

    V(t) = w~ b†b + P_n (b + b†) + 2 Re d(t) P_n + ε a_I†(t) + ε* a_I(t),

with P_n = (g0 - G_NL) n + G_NL n².  Density operators are stored as
(N_c, N_m, N_c, N_m) tensors, so every term is a slice operation and no d²×d²
superoperator is ever formed.

The Ω-derivative of ρ is obtained from the tangent equation

    dX/dt = L(X) - i[∂_Ω V, ρ],

with ∂_Ω V assembled from central differences of the model primitives; the
frame displacement contributes [∂d b† - ∂d* b, ρ] at the end.  A literal
central difference of whole trajectories is available as ``method="fd"``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evolution import RICHARDSON_TOL, StepTooLarge, default_delta
from .hilbert import (CutoffTooSmall, DensityOperator, TruncatedSpace,
                      coherent_amplitudes, hermitian_eigendecomposition, poisson_tail)
from .model import DerivedParams, InitialState, SystemParams, UnitMode, _cavity_diag, derive

#: spectral support cutoff for the SLD double sum
EPS_SPEC = 1e-10
TRACE_TOL = 1e-6
NEGATIVITY_TOL = 1e-6
#: the cavity cutoff is raised under drive until the top two Fock populations are below this
DRIVE_TOP_POPULATION = 1e-8
CUTOFF_RAISE = 10
MAX_RAISES = 4
#: halving the step must change qfi_mixed by less than this
STEP_CHECK_TOL = 1e-3


class StepUnstable(RuntimeError):
    """Trace drift or negativity beyond tolerance; retry with a smaller step."""


@dataclass(frozen=True)
class LindbladConfig:
    kappa: float = 0.0
    t_final: float = 2 * math.pi
    #: RK4 step; None picks 2π/4000 (dimensionless units) or (2π/w~)/400
    h: float | None = None
    #: Poisson tail allowed when the initial coherent states are truncated
    tail_tol: float = 1e-6
    #: drop the Hamiltonian entirely (pure-decay checks)
    zero_hamiltonian: bool = False
    auto_cutoff: bool = True

    def __post_init__(self):
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.t_final < 0:
            raise ValueError("t_final must be non-negative")
        if self.h is not None and self.h <= 0:
            raise ValueError("h must be positive")

    def step(self, derived: DerivedParams) -> float:
        if self.h is not None:
            return self.h
        if derived.units.mode == UnitMode.DIMENSIONLESS:
            return 2 * math.pi / 4000
        return 2 * math.pi / derived.omega_m_tilde / 400

    def n_steps(self, derived: DerivedParams) -> int:
        if self.t_final == 0:
            return 0
        return max(1, math.ceil(self.t_final / self.step(derived) - 1e-9))

    def halved(self, derived: DerivedParams) -> LindbladConfig:
        return LindbladConfig(self.kappa, self.t_final, self.t_final / (2 * self.n_steps(derived)),
                              self.tail_tol, self.zero_hamiltonian, self.auto_cutoff)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenstates: list
    eps_spec: float = EPS_SPEC

    def __post_init__(self):
        if np.min(self.eigenvalues) < -1e-8:
            raise StepUnstable(f"negative eigenvalue {np.min(self.eigenvalues):.3g}")
        if abs(np.sum(self.eigenvalues) - 1) > 1e-6:
            raise StepUnstable(f"eigenvalues sum to {np.sum(self.eigenvalues):.10g}")

    @property
    def vectors(self) -> np.ndarray:
        return np.stack([s.amplitudes for s in self.eigenstates], axis=1)


def spectral_decomposition(rho: DensityOperator, eps_spec: float = EPS_SPEC) -> SpectralDecomposition:
    vals, states = hermitian_eigendecomposition(rho)
    return SpectralDecomposition(vals, states, eps_spec)


# ---------------------------------------------------------------------------
# frame coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Coefficients:
    """Ω-dependent scalars of the frame Hamiltonian, one row per batch member."""

    wt: np.ndarray  # (K,)
    P: np.ndarray  # (K, Nc), unscaled P_n
    chi_t: np.ndarray  # (K,) χ / w~

    @classmethod
    def stack(cls, ds: list[DerivedParams], n: np.ndarray) -> _Coefficients:
        wt = np.array([d.omega_m_tilde for d in ds])
        P = np.array([(d.g0 - d.G_NL) * n + d.G_NL * n * n for d in ds])
        chi_t = np.array([d.chi / d.omega_m_tilde for d in ds])
        return cls(wt, P, chi_t)

    def displacement(self, t: float) -> np.ndarray:
        return self.chi_t * (1.0 - np.exp(-1j * self.wt * t))

    def re_d(self, t: float) -> np.ndarray:
        return self.chi_t * (1.0 - np.cos(self.wt * t))

    def zero(self) -> _Coefficients:
        return _Coefficients(0 * self.wt, 0 * self.P, 0 * self.chi_t)


@dataclass(frozen=True)
class _Tangent:
    """Derivatives of the primitive coefficients with respect to Ω."""

    dwt: float
    dP: np.ndarray  # (Nc,)
    dchi_t: float


def _primitive_derivative(params: SystemParams, derived: DerivedParams, n: np.ndarray,
                          delta: float, frozen: bool) -> _Tangent:
    """Central differences at δ and δ/2, checked against each other."""
    if frozen:
        return _Tangent(0.0, np.zeros_like(n), 0.0)
    om = derived.omega

    def at(h):
        c = _Coefficients.stack([derive(params, derived.units, om + h),
                                 derive(params, derived.units, om - h)], n)
        return np.concatenate([[c.wt[0] - c.wt[1]], c.P[0] - c.P[1],
                               [c.chi_t[0] - c.chi_t[1]]]) / (2 * h)

    coarse, fine = at(delta), at(0.5 * delta)
    scale = np.maximum(np.abs(fine), 1e-300)
    bad = np.abs(coarse - fine) > RICHARDSON_TOL * scale
    bad &= np.abs(fine) > 1e-12 * np.max(np.abs(fine))
    if np.any(bad):
        raise StepTooLarge("primitive derivatives change when halving delta")
    return _Tangent(float(fine[0]), fine[1:-1], float(fine[-1]))


# ---------------------------------------------------------------------------
# kernels; R has shape (K, d, d) with d = N_c N_m, cavity-major
# ---------------------------------------------------------------------------


class _Kernels:
    """Master-equation right-hand sides built from per-photon-number blocks.

    Every generator here maps Hermitian R to Hermitian output, so the
    commutator and anticommutator parts are written as M + M† with a single
    left multiplication M.
    """

    def __init__(self, space: TruncatedSpace, params: SystemParams, kappa: float, zero_h: bool):
        nc, nm = space.dim_cavity, space.dim_mech
        self.nc, self.nm, self.d = nc, nm, nc * nm
        self.n = np.arange(nc, dtype=float)
        m = np.arange(nm, dtype=float)
        self.sq_m = np.sqrt(m[1:])
        self.sq_n = np.sqrt(self.n[1:])
        b = np.diag(self.sq_m, 1)
        self.num_m = np.diag(m)
        self.x = b + b.T
        self.b = b
        self.eye_m = np.eye(nm)
        self.c = np.zeros(nc) if zero_h else _cavity_diag(params, self.n)
        self.psi = np.diff(self.c)
        self.kappa = kappa
        self.eps = 0j if zero_h else params.drive
        self.zero_h = zero_h

    def blocks(self, w, P, s):
        """(K, Nc, Nm, Nm) blocks of w b†b + P_n (b + b†) + s_n."""
        return (w[:, None, None, None] * self.num_m + P[:, :, None, None] * self.x
                + s[:, :, None, None] * self.eye_m)

    def left(self, A, R, out=None):
        K = R.shape[0]
        shape = (K, self.nc, self.nm, self.d)
        if out is None:
            return np.matmul(A, R.reshape(shape)).reshape(K, self.d, self.d)
        np.matmul(A, R.reshape(shape), out=out.reshape(shape))
        return out

    def drive_left(self, R, t):
        """-i(ε a_I† + ε* a_I) R."""
        K = R.shape[0]
        R3 = R.reshape(K, self.nc, self.nm * self.d)
        out = np.zeros_like(R3)
        ph = (self.sq_n * np.exp(1j * self.psi * t))[:, None]
        out[:, 1:] += self.eps * ph * R3[:, :-1]
        out[:, :-1] += np.conj(self.eps) * np.conj(ph) * R3[:, 1:]
        return (-1j * out).reshape(R.shape)

    def jump_weights(self, t):
        """κ u u† with u_n = sqrt(n+1) e^{-i ψ_n t}, n < N_c - 1, repeated over the mechanical index."""
        u = np.repeat(self.sq_n * np.exp(-1j * self.psi * t), self.nm)
        return self.kappa * np.outer(u, np.conj(u))

    def jump(self, R, t):
        """κ a_I R a_I†; one photon is one block of N_m rows in the cavity-major layout."""
        nm = self.nm
        out = np.zeros_like(R)
        out[:, :-nm, :-nm] = R[:, nm:, nm:] * self.jump_weights(t)
        return out

    def generator_blocks(self, t, coef: _Coefficients):
        """Blocks of -i V_mech(t) - κ n / 2 acting from the left."""
        K = coef.wt.shape[0]
        damp = (0.5 * self.kappa * self.n)[None, :, None, None] * self.eye_m
        if self.zero_h:
            return np.broadcast_to(-damp, (K, self.nc, self.nm, self.nm))
        s = 2.0 * coef.re_d(t)[:, None] * coef.P
        return -1j * self.blocks(coef.wt, coef.P, s) - damp

    def rhs(self, R, t, A, extra=None, out=None, work=None, jw=None):
        """Generator applied to R; ``out`` and ``work`` are optional scratch arrays shaped like R."""
        M = self.left(A, R, work)
        if self.eps != 0:
            M += self.drive_left(R, t)
        if extra is not None:
            M += extra
        if out is None:
            out = np.empty_like(R)
        np.conjugate(M.swapaxes(-1, -2), out=out)
        out += M
        if self.kappa:
            nm = self.nm
            if jw is None:
                jw = self.jump_weights(t)
            tmp = M[:, :-nm, :-nm]
            np.multiply(R[:, nm:, nm:], jw, out=tmp)
            out[:, :-nm, :-nm] += tmp
        return out

    def source_blocks(self, t, coef: _Coefficients, tan: _Tangent):
        """Blocks of -i ∂_Ω V_mech(t) for a single batch member."""
        wt, chi_t = coef.wt[0], coef.chi_t[0]
        red = coef.re_d(t)[0]
        dred = tan.dchi_t * (1 - math.cos(wt * t)) + chi_t * math.sin(wt * t) * t * tan.dwt
        ds = 2.0 * (dred * coef.P[0] + red * tan.dP)
        return -1j * self.blocks(np.array([tan.dwt]), tan.dP[None], ds[None])

    @staticmethod
    def hermitize(R):
        return 0.5 * (R + np.conj(R.swapaxes(-1, -2)))

    def to_schrodinger(self, R, t):
        """Undo the cavity interaction picture: R e^{-i(c_n - c_n')t}."""
        ph = np.repeat(np.exp(-1j * self.c * t), self.nm)
        return R * ph[:, None] * np.conj(ph)[None, :]


def _initial(space: TruncatedSpace, init: InitialState, tail_tol: float) -> np.ndarray:
    for amp, dim in ((init.alpha, space.dim_cavity), (init.beta, space.dim_mech)):
        tail = poisson_tail(abs(amp) ** 2, dim - 1)
        if tail >= tail_tol:
            raise CutoffTooSmall(f"initial amplitude {amp} leaves Poisson tail {tail:.3g} at cutoff {dim - 1}")
    a = coherent_amplitudes(complex(init.alpha), space.dim_cavity)
    b = coherent_amplitudes(complex(init.beta), space.dim_mech)
    psi = np.kron(a / np.linalg.norm(a), b / np.linalg.norm(b))
    return np.outer(psi, psi.conj())


#: steps between explicit re-symmetrizations of the RK4 iterates
HERMITIZE_EVERY = 16


class _Buffers:
    """Scratch arrays for one RK4 state: stage input, stage slope, running sum, matmul work."""

    def __init__(self, like: np.ndarray):
        self.y = np.empty_like(like)
        self.k = np.empty_like(like)
        self.acc = np.empty_like(like)
        self.work = np.empty_like(like)


def _integrate(kern: _Kernels, R0: np.ndarray, coef: _Coefficients, config: LindbladConfig,
               steps: int, tangent: _Tangent | None = None):
    """RK4 on R (K, d, d) and, when ``tangent`` is given, on X = ∂_Ω R (batch of one)."""
    h = config.t_final / steps if steps else 0.0
    R = np.array(R0, dtype=complex)
    X = np.zeros_like(R) if tangent is not None else None
    br = _Buffers(R)
    bx = _Buffers(X) if X is not None else None
    src = np.empty_like(R) if X is not None else None

    def slopes(t, yr, yx):
        """Write the slopes at (yr, yx) into br.k and bx.k."""
        A = kern.generator_blocks(t, coef)
        jw = kern.jump_weights(t) if kern.kappa else None
        kern.rhs(yr, t, A, out=br.k, work=br.work, jw=jw)
        if yx is not None:
            kern.left(kern.source_blocks(t, coef, tangent), yr, src)
            kern.rhs(yx, t, A, extra=src, out=bx.k, work=bx.work, jw=jw)

    def advance(y, b, c, weight, first=False):
        """acc += weight k, then b.y = y + c k for the next stage."""
        if first:
            np.copyto(b.acc, b.k)
        else:
            b.acc += np.multiply(b.k, weight, out=b.work) if weight != 1 else b.k
        if c is not None:
            np.multiply(b.k, c, out=b.y)
            b.y += y

    check_every = max(1, steps // 20)
    for i in range(steps):
        t = i * h
        slopes(t, R, X)
        advance(R, br, h / 2, 1, True)
        if X is not None:
            advance(X, bx, h / 2, 1, True)
        slopes(t + h / 2, br.y, bx.y if X is not None else None)
        advance(R, br, h / 2, 2)
        if X is not None:
            advance(X, bx, h / 2, 2)
        slopes(t + h / 2, br.y, bx.y if X is not None else None)
        advance(R, br, h, 2)
        if X is not None:
            advance(X, bx, h, 2)
        slopes(t + h, br.y, bx.y if X is not None else None)
        advance(R, br, None, 1)
        br.acc *= h / 6
        R += br.acc
        if X is not None:
            advance(X, bx, None, 1)
            bx.acc *= h / 6
            X += bx.acc
        if (i + 1) % HERMITIZE_EVERY == 0 or i + 1 == steps:
            R = kern.hermitize(R)
            if X is not None:
                X = kern.hermitize(X)
        if (i + 1) % check_every == 0 or i + 1 == steps:
            _check_trace(R, (i + 1) * h)
    return R, X


def _check_trace(R, t):
    tr = np.trace(R, axis1=-2, axis2=-1).real
    drift = float(np.max(np.abs(tr - 1)))
    if drift > TRACE_TOL or not np.all(np.isfinite(tr)):
        raise StepUnstable(f"trace drift {drift:.3g} at t = {t:.6g}; use a smaller step")


def _check_positive(rho: np.ndarray):
    ev = np.linalg.eigvalsh(rho)
    if ev[0] < -NEGATIVITY_TOL:
        raise StepUnstable(f"density operator eigenvalue {ev[0]:.3g}; use a smaller step")


def _top_population(R: np.ndarray, nm: int) -> float:
    pops = np.diagonal(R).real.reshape(-1, nm).sum(axis=1)
    return float(pops[-1] + pops[-2])


def _run(params, derived_list, init, config, space, tangent=None):
    kern = _Kernels(space, params, config.kappa, config.zero_hamiltonian)
    coef = _Coefficients.stack(derived_list, kern.n)
    if config.zero_hamiltonian:
        coef = coef.zero()
    R0 = np.broadcast_to(_initial(space, init, config.tail_tol),
                         (len(derived_list), space.dim, space.dim))
    steps = config.n_steps(derived_list[0])
    R, X = _integrate(kern, R0, coef, config, steps, tangent)
    return kern, coef, R, X


def _with_cutoff(params, config, space, runner):
    """Raise the cavity cutoff under drive until the top Fock populations are negligible."""
    for _ in range(MAX_RAISES + 1):
        out = runner(space)
        R = out[2]
        if params.drive_amplitude == 0 or not config.auto_cutoff:
            return space, out
        if _top_population(R[0], space.dim_mech) < DRIVE_TOP_POPULATION:
            return space, out
        space = TruncatedSpace(space.n_max_cavity + CUTOFF_RAISE, space.n_max_mech)
    raise CutoffTooSmall(f"cavity populations still reach n_max = {space.n_max_cavity} under drive")


def lindblad_evolve(params: SystemParams, derived: DerivedParams, init: InitialState,
                    config: LindbladConfig, space: TruncatedSpace) -> DensityOperator:
    """ρ(t_final) in the comoving mechanical frame (see ``comoving_displacement``).

    The cavity is in the Schrödinger picture; the mechanical mode is displaced
    by -d(t_final).  Under drive the returned operator may live on a larger
    cavity space than requested.
    """
    space, (kern, coef, R, _) = _with_cutoff(
        params, config, space, lambda sp: _run(params, [derived], init, config, sp))
    rho = kern.to_schrodinger(R[0], config.t_final)
    rho = 0.5 * (rho + rho.conj().T)
    _check_positive(rho)
    return DensityOperator(space, rho)


def frame_displacement(derived: DerivedParams, t: float, zero_hamiltonian: bool = False) -> complex:
    if zero_hamiltonian:
        return 0j
    return derived.chi_tilde * (1.0 - np.exp(-1j * derived.omega_m_tilde * t))


def _displacement_commutator(R: np.ndarray, dd: complex, nm: int) -> np.ndarray:
    """[∂d b† - ∂d* b, R] for R of shape (d, d)."""
    b = np.diag(np.sqrt(np.arange(1, nm)), 1)
    g = dd * b.T - np.conj(dd) * b
    d = R.shape[0]
    gr = np.matmul(g, R.reshape(-1, nm, d)).reshape(d, d)
    rg = np.matmul(R.reshape(d, -1, nm), g).reshape(d, d)
    return gr - rg


def sld_qfi(rho: np.ndarray, drho: np.ndarray, eps_spec: float = EPS_SPEC) -> float:
    """2 Σ |<i|∂ρ|j>|² / (p_i + p_j) over pairs with p_i + p_j above ``eps_spec``."""
    p, v = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    p = np.clip(p, 0.0, None)
    m = v.conj().T @ drho @ v
    s = p[:, None] + p[None, :]
    mask = s > eps_spec
    return float(2.0 * np.sum(np.abs(m[mask]) ** 2 / s[mask]))


def _derivative_of_d(params, derived, t, delta, frozen) -> complex:
    if frozen:
        return 0j
    om = derived.omega

    def at(h):
        dp = frame_displacement(derive(params, derived.units, om + h), t)
        dm = frame_displacement(derive(params, derived.units, om - h), t)
        return (dp - dm) / (2 * h)

    coarse, fine = at(delta), at(0.5 * delta)
    if abs(coarse - fine) > RICHARDSON_TOL * abs(fine):
        raise StepTooLarge("frame displacement derivative changes when halving delta")
    return fine


def qfi_mixed(params: SystemParams, derived: DerivedParams, init: InitialState,
              config: LindbladConfig, space: TruncatedSpace, delta_omega: float | None = None,
              method: str = "tangent", frozen: bool = False, check_step: bool = True) -> float:
    """Mixed-state QFI of ρ(t_final) with respect to Ω via the SLD double sum.

    ``check_step`` repeats the run with half the RK4 step and raises
    StepUnstable if the two results differ by more than 1e-3 relative.
    """
    f = _qfi_mixed_once(params, derived, init, config, space, delta_omega, method, frozen)
    if check_step:
        f2 = _qfi_mixed_once(params, derived, init, config.halved(derived), space,
                             delta_omega, method, frozen)
        if abs(f - f2) > STEP_CHECK_TOL * max(abs(f), abs(f2)):
            raise StepUnstable(f"halving h changed the QFI from {f:.10g} to {f2:.10g}")
        return f2
    return f


def _qfi_mixed_once(params, derived, init, config, space, delta_omega, method, frozen):
    delta = delta_omega if delta_omega is not None else default_delta(params)
    t = config.t_final
    dd = 0j if config.zero_hamiltonian else _derivative_of_d(params, derived, t, delta, frozen)
    if method == "tangent":
        def runner(sp):
            n = np.arange(sp.dim_cavity, dtype=float)
            tan = _primitive_derivative(params, derived, n, delta, frozen or config.zero_hamiltonian)
            return _run(params, [derived], init, config, sp, tan)

        space, (kern, coef, R, X) = _with_cutoff(params, config, space, runner)
        R, X = R[0], X[0]
        return sld_qfi(R, X + _displacement_commutator(R, dd, space.dim_mech))
    if method == "fd":
        return _qfi_mixed_fd(params, derived, init, config, space, delta, frozen, dd)
    raise ValueError(f"unknown method {method!r}")


def _batch(params, derived, delta, frozen):
    om = derived.omega
    offsets = [0.0, delta, -delta, 0.5 * delta, -0.5 * delta]
    if frozen:
        return offsets, [derived] * 5
    return offsets, [derived if o == 0 else derive(params, derived.units, om + o) for o in offsets]


def _qfi_mixed_fd(params, derived, init, config, space, delta, frozen, dd) -> float:
    _, ds = _batch(params, derived, delta, frozen)
    space, (kern, coef, R, _) = _with_cutoff(params, config, space,
                                             lambda sp: _run(params, ds, init, config, sp))
    rho = R[0]
    comm = _displacement_commutator(rho, dd, space.dim_mech)

    def at(i_plus, i_minus, h):
        return sld_qfi(rho, (R[i_plus] - R[i_minus]) / (2 * h) + comm)

    coarse, fine = at(1, 2, delta), at(3, 4, 0.5 * delta)
    if abs(coarse - fine) > RICHARDSON_TOL * max(abs(coarse), abs(fine), 1e-300):
        raise StepTooLarge(f"mixed QFI changed from {coarse:.10g} to {fine:.10g} when halving delta")
    return fine


# ---------------------------------------------------------------------------
# driven pure-state QFI
# ---------------------------------------------------------------------------


def _vector_rhs(kern: _Kernels, psi, t, coef: _Coefficients):
    """-i V(t) ψ for ψ of shape (K, Nc, Nm)."""
    s = 2.0 * coef.re_d(t)[:, None] * coef.P
    m = np.arange(kern.nm, dtype=float)
    out = (coef.wt[:, None, None] * m + s[:, :, None]) * psi
    x = np.zeros_like(psi)
    x[:, :, :-1] += kern.sq_m * psi[:, :, 1:]
    x[:, :, 1:] += kern.sq_m * psi[:, :, :-1]
    out += coef.P[:, :, None] * x
    if kern.eps != 0:
        ph = (kern.sq_n * np.exp(1j * kern.psi * t))[:, None]
        out[:, 1:] += kern.eps * ph * psi[:, :-1]
        out[:, :-1] += np.conj(kern.eps) * np.conj(ph) * psi[:, 1:]
    return -1j * out


def evolve_driven(params: SystemParams, derived_list: list[DerivedParams], init: InitialState,
                  t: float, space: TruncatedSpace, h: float, tail_tol: float = 1e-6) -> np.ndarray:
    """State vectors (K, Nc, Nm) at time t, comoving frame, cavity interaction picture."""
    kern = _Kernels(space, params, 0.0, False)
    coef = _Coefficients.stack(derived_list, kern.n)
    a = coherent_amplitudes(complex(init.alpha), space.dim_cavity)
    b = coherent_amplitudes(complex(init.beta), space.dim_mech)
    for amp, dim in ((init.alpha, space.dim_cavity), (init.beta, space.dim_mech)):
        if poisson_tail(abs(amp) ** 2, dim - 1) >= tail_tol:
            raise CutoffTooSmall(f"initial amplitude {amp} does not fit cutoff {dim - 1}")
    psi = np.broadcast_to(np.outer(a / np.linalg.norm(a), b / np.linalg.norm(b)),
                          (len(derived_list), space.dim_cavity, space.dim_mech)).copy()
    steps = max(1, math.ceil(t / h - 1e-9)) if t > 0 else 0
    hh = t / steps if steps else 0.0
    for k in range(steps):
        tk = k * hh
        k1 = _vector_rhs(kern, psi, tk, coef)
        k2 = _vector_rhs(kern, psi + hh / 2 * k1, tk + hh / 2, coef)
        k3 = _vector_rhs(kern, psi + hh / 2 * k2, tk + hh / 2, coef)
        k4 = _vector_rhs(kern, psi + hh * k3, tk + hh, coef)
        psi = psi + hh / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    norms = np.sqrt(np.sum(np.abs(psi) ** 2, axis=(1, 2)))
    if np.max(np.abs(norms - 1)) > TRACE_TOL:
        raise StepUnstable(f"state norm drifted to {norms}; use a smaller step")
    return psi / norms[:, None, None]


def qfi_driven_pure(params: SystemParams, derived: DerivedParams, init: InitialState, t: float,
                    space: TruncatedSpace, delta_omega: float | None = None, h: float | None = None,
                    frozen: bool = False) -> float:
    """Pure-state QFI under the full driven Hamiltonian (κ = 0), central differences in Ω."""
    delta = delta_omega if delta_omega is not None else default_delta(params)
    if h is None:
        h = LindbladConfig(t_final=t).step(derived)
    _, ds = _batch(params, derived, delta, frozen)
    dd_all = np.array([frame_displacement(d, t) for d in ds])
    for _ in range(MAX_RAISES + 1):
        psi = evolve_driven(params, ds, init, t, space, h)
        pops = np.sum(np.abs(psi[0]) ** 2, axis=1)
        if params.drive_amplitude == 0 or pops[-1] + pops[-2] < DRIVE_TOP_POPULATION:
            break
        space = TruncatedSpace(space.n_max_cavity + CUTOFF_RAISE, space.n_max_mech)
    else:
        raise CutoffTooSmall(f"cavity populations still reach n_max = {space.n_max_cavity} under drive")
    sq = np.sqrt(np.arange(1, space.dim_mech))
    p0 = psi[0]

    def at(ip, im, hd):
        dpsi = (psi[ip] - psi[im]) / (2 * hd)
        dd = (dd_all[ip] - dd_all[im]) / (2 * hd)
        # (∂d b† - ∂d* b) ψ
        g = np.zeros_like(p0)
        g[:, 1:] += dd * sq * p0[:, :-1]
        g[:, :-1] -= np.conj(dd) * sq * p0[:, 1:]
        y = (dpsi + g).reshape(-1)
        v = p0.reshape(-1)
        perp = y - np.vdot(v, y) * v
        return float(4.0 * np.vdot(perp, perp).real)

    coarse, fine = at(1, 2, delta), at(3, 4, 0.5 * delta)
    if abs(coarse - fine) > RICHARDSON_TOL * max(abs(coarse), abs(fine), 1e-300):
        raise StepTooLarge(f"driven QFI changed from {coarse:.10g} to {fine:.10g} when halving delta")
    return fine


def comoving_mech_cutoff(params: SystemParams, derived: DerivedParams, init: InitialState,
                         t: float, n_max_cavity: int, tol: float = 1e-8, floor: int = 4) -> int:
    """Smallest mechanical cutoff whose photon-weighted Poisson tail in the comoving frame is below ``tol``."""
    from .evolution import evolved_terms

    terms = evolved_terms(params.replace(drive_amplitude=0.0), derived, init, t, n_max_cavity)
    # |mu_n(s) - d(s)| <= |beta| + |P~_n| max_s |1 - e^{-i w~ s}| along the whole path
    reach = 2.0 * abs(math.sin(min(derived.omega_m_tilde * t, math.pi) / 2))
    means = (abs(complex(init.beta)) + np.abs(derived.photon_shift(terms.n)) * reach) ** 2
    p = terms.probabilities()
    nm = floor
    while np.sum(p * np.array([poisson_tail(m, nm) for m in means])) >= tol:
        nm += 1
    return nm
