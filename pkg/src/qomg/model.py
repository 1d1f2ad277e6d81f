"""Physical parameters, unit systems and Hamiltonian builders.

Hamiltonians are returned divided by hbar, i.e. in angular-frequency units,
so that ``expm(-1j * H * t)`` is the propagator in either unit system.

Rotation-rate dependence
------------------------
The optomechanical coupling is specified through ``g0_tilde = g0 / w_m~``
*at the configured rotation rate*.  Internally it is converted to the
Omega-independent combination ``g0 * sqrt(w_m~)`` (equivalently the bare
coupling G times the zero-point prefactor), so evaluating the model at a
shifted rotation rate keeps G fixed, as required for derivatives in Omega.
The centripetal term is always computed from D and m; in dimensionless mode
all frequencies are in units of ``UnitSystem.frequency_unit`` (rad/s).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from typing import Callable

import numpy as np

from .hilbert import CAVITY, MECH, LinearOperator, TruncatedSpace, annihilation, number

HBAR_SI = 1.0545718e-34


class ZeroFrequency(ValueError):
    pass


class NonzeroDrive(ValueError):
    pass


class UnitMode(str, Enum):
    SI = "SI"
    DIMENSIONLESS = "dimensionless"


@dataclass(frozen=True)
class UnitSystem:
    mode: UnitMode = UnitMode.SI
    hbar: float = HBAR_SI
    frequency_unit: float = 1.0

    @classmethod
    def si(cls) -> UnitSystem:
        return cls(UnitMode.SI, HBAR_SI, 1.0)

    @classmethod
    def dimensionless(cls, omega_c_si: float = 1e15) -> UnitSystem:
        return cls(UnitMode.DIMENSIONLESS, 1.0, omega_c_si)


def ordinary_to_angular(f: float) -> float:
    """Convert an ordinary frequency (Hz) to rad/s.

    Caption values such as "w_m = 62.8 kHz" are read as angular frequencies
    (62.8e3 rad/s) throughout; use this when the other reading is wanted.
    """
    return 2.0 * math.pi * f


@dataclass(frozen=True)
class SystemParams:
    omega_c: float = 1e15
    omega_m: float = 62.8e3
    mass: float = 1e-7
    distance_D: float = 1e-3
    length_L0: float = 1e-4
    eta0: float = 0.0
    gnl_ratio: float = 0.3
    g0_tilde: float = 1.0
    omega_rotation: float = 2e3
    drive_amplitude: float = 0.0
    drive_phase: float = 0.0
    kappa: float = 0.0
    #: explicit nonlinear coupling g_NL (1/(m s)); overrides ``gnl_ratio`` when set
    g_nl: float | None = None
    #: replaces the (w_c - eta0) coefficient of a^dag a when set
    detuning: float | None = None

    def __post_init__(self):
        for name in ("omega_c", "omega_m", "mass", "distance_D", "length_L0",
                     "eta0", "drive_amplitude", "kappa", "omega_rotation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.mass <= 0 or self.length_L0 <= 0:
            raise ValueError("mass and length_L0 must be positive")

    @property
    def drive(self) -> complex:
        return self.drive_amplitude * complex(math.cos(self.drive_phase), math.sin(self.drive_phase))

    def replace(self, **changes) -> SystemParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class InitialState:
    alpha: complex = math.sqrt(5.0)
    beta: complex = 1.0

    @property
    def n_cavity(self) -> float:
        return abs(self.alpha) ** 2

    @property
    def n_mech(self) -> float:
        return abs(self.beta) ** 2

    @property
    def n_total(self) -> float:
        return self.n_cavity + self.n_mech

    @property
    def ratio(self) -> float:
        return self.n_cavity / self.n_total if self.n_total > 0 else float("nan")


@dataclass(frozen=True)
class DerivedParams:
    omega: float
    omega_m_tilde: float
    g0: float
    G_NL: float
    chi: float
    #: chi / Omega^2, finite at Omega = 0
    chi_per_omega2: float
    units: UnitSystem = UnitSystem()

    @property
    def g0_tilde(self) -> float:
        return self.g0 / self.omega_m_tilde

    @property
    def G_NL_tilde(self) -> float:
        return self.G_NL / self.omega_m_tilde

    @property
    def chi_tilde(self) -> float:
        return self.chi / self.omega_m_tilde

    def energy_shift(self, n) -> np.ndarray:
        """E_n = (g0~ - G_NL~) n + G_NL~ n^2 - chi~."""
        n = np.asarray(n, dtype=float)
        return self.photon_shift(n) - self.chi_tilde

    def photon_shift(self, n) -> np.ndarray:
        """The photon-number dependent part of E_n (no centripetal offset)."""
        n = np.asarray(n, dtype=float)
        return (self.g0_tilde - self.G_NL_tilde) * n + self.G_NL_tilde * n * n


def omega_m_tilde(params: SystemParams, omega: float | None = None) -> float:
    om = params.omega_rotation if omega is None else omega
    return math.hypot(params.omega_m, om)


def derive(params: SystemParams, units: UnitSystem | None = None,
           omega: float | None = None) -> DerivedParams:
    """Omega-dependent quantities at rotation rate ``omega`` (default: the configured one)."""
    units = units or UnitSystem.si()
    om = params.omega_rotation if omega is None else float(omega)
    wt = omega_m_tilde(params, om)
    if wt == 0:
        raise ZeroFrequency("w_m~ = sqrt(w_m^2 + Omega^2) vanishes")
    w_ref = omega_m_tilde(params)
    if w_ref == 0:
        raise ZeroFrequency("w_m~ vanishes at the reference rotation rate")
    # g0 scales as w_m~^{-1/2} at fixed G
    g0 = params.g0_tilde * w_ref * math.sqrt(w_ref / wt)
    if params.g_nl is not None:
        # zero-point length in metres; frequencies converted back to the unit system
        zpf = math.sqrt(HBAR_SI / (2 * params.mass * wt * units.frequency_unit))
        G_NL = params.g_nl * zpf / units.frequency_unit
    else:
        G_NL = params.gnl_ratio * g0
    cpo2 = params.distance_D * math.sqrt(params.mass * units.frequency_unit / (2 * HBAR_SI * wt))
    return DerivedParams(omega=om, omega_m_tilde=wt, g0=g0, G_NL=G_NL,
                         chi=cpo2 * om * om, chi_per_omega2=cpo2, units=units)


def derived_family(params: SystemParams, units: UnitSystem | None = None,
                   frozen: bool = False) -> Callable[[float], DerivedParams]:
    """Omega -> DerivedParams.  ``frozen`` pins everything at the configured Omega."""
    if frozen:
        fixed = derive(params, units)
        return lambda omega: fixed
    return lambda omega: derive(params, units, omega)


# ---------------------------------------------------------------------------
# Hamiltonians (divided by hbar)
# ---------------------------------------------------------------------------


def _cavity_diag(params: SystemParams, n: np.ndarray) -> np.ndarray:
    lin = params.omega_c - params.eta0 if params.detuning is None else params.detuning
    return lin * n + params.eta0 * n * n


def hamiltonian_full(params: SystemParams, derived: DerivedParams,
                     space: TruncatedSpace) -> LinearOperator:
    """Driven Hamiltonian in the drive frame, assembled term by term."""
    nc = number(space, CAVITY, two_mode=False).matrix
    ic = np.eye(space.dim_cavity)
    im = np.eye(space.dim_mech)
    a_c = annihilation(space, CAVITY, two_mode=False).matrix
    b = annihilation(space, MECH, two_mode=False).matrix
    x = b + b.conj().T
    lin = params.omega_c - params.eta0 if params.detuning is None else params.detuning
    eps = params.drive
    h = lin * np.kron(nc, im)
    h = h + params.eta0 * np.kron(nc @ nc, im)
    h = h + derived.omega_m_tilde * np.kron(ic, b.conj().T @ b)
    force = (derived.g0 - derived.G_NL) * nc + derived.G_NL * (nc @ nc) - derived.chi * ic
    h = h + np.kron(force, x)
    h = h + eps * np.kron(a_c.conj().T, im) + np.conj(eps) * np.kron(a_c, im)
    return LinearOperator(space, h)


def hamiltonian_driving_free(params: SystemParams, derived: DerivedParams,
                             space: TruncatedSpace) -> LinearOperator:
    """Zero-drive Hamiltonian written with the scaled couplings g0~, G_NL~, chi~."""
    if params.drive_amplitude != 0:
        raise NonzeroDrive("driving-free Hamiltonian requested with nonzero drive")
    n = np.arange(space.dim_cavity, dtype=float)
    wt = derived.omega_m_tilde
    b = annihilation(space, MECH, two_mode=False).matrix
    x = b + b.conj().T
    diag_c = _cavity_diag(params, n)
    e_n = derived.energy_shift(n)
    blocks = []
    for k in range(space.dim_cavity):
        blocks.append(diag_c[k] * np.eye(space.dim_mech) + wt * (b.conj().T @ b) + wt * e_n[k] * x)
    from scipy.linalg import block_diag

    return LinearOperator(space, block_diag(*blocks))


def photon_block(params: SystemParams, derived: DerivedParams, space: TruncatedSpace,
                 n: int) -> np.ndarray:
    """Mechanical block <n,.|H|n,.> of the driving-free Hamiltonian."""
    h = hamiltonian_driving_free(params.replace(drive_amplitude=0.0), derived, space).matrix
    s = slice(n * space.dim_mech, (n + 1) * space.dim_mech)
    return h[s, s]


def displaced_oscillator_levels(params: SystemParams, derived: DerivedParams, n: int,
                                count: int) -> np.ndarray:
    """Exact spectrum of the photon-number-n block: cavity part + w~(k - E_n^2)."""
    e = float(derived.energy_shift(n))
    base = float(_cavity_diag(params, np.array([float(n)]))[0])
    return base + derived.omega_m_tilde * (np.arange(count) - e * e)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def fig2_params(**changes) -> SystemParams:
    """The closed-system parameter point (SI, angular frequencies)."""
    return SystemParams(**changes)


def lossy_params(**changes) -> SystemParams:
    """The driven/dissipative parameter point, frequencies in units of w_c."""
    base = dict(omega_c=1.0, omega_m=62.8e-12, omega_rotation=2e-12, kappa=0.0)
    base.update(changes)
    return SystemParams(**base)


PARAM_KEYS = (
    "omega_c", "omega_m", "mass", "distance_D", "length_L0", "eta0", "gnl_ratio",
    "g0_tilde", "omega_rotation", "drive_amplitude", "drive_phase", "kappa",
    "alpha_re", "alpha_im", "beta_re", "beta_im", "units",
)
EXTRA_KEYS = ("g_nl", "detuning", "frequency_unit")


def params_to_dict(params: SystemParams, init: InitialState, units: UnitSystem) -> dict:
    d = {k: v for k, v in asdict(params).items()}
    d.update(alpha_re=complex(init.alpha).real, alpha_im=complex(init.alpha).imag,
             beta_re=complex(init.beta).real, beta_im=complex(init.beta).imag,
             units=units.mode.value, frequency_unit=units.frequency_unit)
    return d


def params_from_dict(values: dict) -> tuple[SystemParams, InitialState, UnitSystem]:
    """Inverse of ``params_to_dict``; unknown keys raise KeyError."""
    allowed = set(PARAM_KEYS) | set(EXTRA_KEYS)
    unknown = sorted(set(values) - allowed)
    if unknown:
        raise KeyError(f"unknown parameter keys: {', '.join(unknown)}")
    units_name = str(values.get("units", "SI"))
    if units_name.lower() == "si":
        units = UnitSystem.si()
    elif units_name.lower() == "dimensionless":
        units = UnitSystem.dimensionless(float(values.get("frequency_unit", 1e15)))
    else:
        raise ValueError(f"units must be SI or dimensionless, got {units_name!r}")
    base = lossy_params() if units.mode == UnitMode.DIMENSIONLESS else fig2_params()
    kw = {}
    for f in fields(SystemParams):
        if f.name in values and values[f.name] is not None:
            kw[f.name] = float(values[f.name])
    params = replace(base, **kw)
    if units.mode == UnitMode.DIMENSIONLESS and params.omega_c != 1.0:
        raise ValueError("dimensionless units require omega_c = 1")
    init = InitialState(
        alpha=complex(float(values.get("alpha_re", math.sqrt(5.0))), float(values.get("alpha_im", 0.0))),
        beta=complex(float(values.get("beta_re", 1.0)), float(values.get("beta_im", 0.0))),
    )
    return params, init, units

