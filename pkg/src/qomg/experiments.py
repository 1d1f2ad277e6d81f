"""Scenario definitions and the sweep runner behind the ``qomg`` CLI.

A scenario fixes a parameter point, one swept key and a list of series.
Each series is a set of overrides that yields one or more output columns
(for example one QFI column per nonlinear coupling).  Every sweep point is
evaluated independently, so points can run in worker processes; results are
always collected in sweep order.
"""

from __future__ import annotations

import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from .evolution import cavity_cutoff, default_delta, qfi_pure_numeric
from .hilbert import TruncatedSpace, poisson_tail
from .measurement import QuadratureGrid, cfi
from .model import (PARAM_KEYS, InitialState, SystemParams, UnitMode, UnitSystem,
                    derive, fig2_params, params_to_dict, lossy_params)
from .open_system import LindbladConfig, comoving_mech_cutoff, qfi_driven_pure, qfi_mixed
from .qfi_analytic import qfi_closed_form
from .scan import ERROR_MARKER, ScanResult

ENGINES = ("analytic", "exact", "cfi", "lindblad", "driven")
#: sweep variables that are not model parameters
CONTROL_KEYS = ("theta", "time", "N", "ratio", "quadrature_phase")
SWEEP_KEYS = tuple(k for k in PARAM_KEYS if k != "units") + ("g_nl", "detuning") + CONTROL_KEYS
#: g0_tilde used by the driven and dissipative scenarios (see README, "Coupling scale")
LOSSY_G0_TILDE = 1e4
#: Poisson tail allowed when truncating initial coherent states in the RK4 engines
RK4_TAIL = 1e-6


class ScenarioError(ValueError):
    """The scenario itself is malformed (unknown key, incompatible engine, bad domain)."""


def population_split(N: float, u: float) -> tuple[float, float]:
    """(N_c, N_m) = (uN, (1-u)N)."""
    if not (N >= 0 and math.isfinite(N)):
        raise ValueError(f"total number must be finite and non-negative, got {N}")
    if not 0.0 <= u <= 1.0:
        raise ValueError(f"population ratio must lie in [0, 1], got {u}")
    return u * N, (1.0 - u) * N


def split_state(N: float, u: float) -> InitialState:
    """Coherent product state with real amplitudes sqrt(uN), sqrt((1-u)N)."""
    nc, nm = population_split(N, u)
    return InitialState(alpha=math.sqrt(nc), beta=math.sqrt(nm))


def reference_curves(N_list) -> ScanResult:
    """SQL = N and HL = N^2 with unit proportionality constants."""
    values = [float(n) for n in N_list]
    if any(not n > 0 for n in values):
        raise ValueError("reference curves need positive N")
    return ScanResult("reference", ["N", "SQL", "HL"], [(n, n, n * n) for n in values],
                      {"constants": {"SQL": 1.0, "HL": 1.0}})


@dataclass(frozen=True)
class Series:
    label: str
    overrides: tuple[tuple[str, float], ...] = ()

    @classmethod
    def of(cls, label: str, **overrides) -> Series:
        return cls(label, tuple(overrides.items()))


@dataclass(frozen=True)
class Scenario:
    name: str
    engine: str
    params: SystemParams
    init: InitialState
    units: UnitSystem
    sweep: str
    values: tuple[float, ...]
    series: tuple[Series, ...] = (Series("qfi"),)
    #: w~_m t; ignored when ``time`` is set
    theta: float = 2 * math.pi
    time: float | None = None
    #: total number and population ratio; when N is set the initial state is split from it
    N: float | None = None
    ratio: float | None = None
    quadrature_phase: float = 0.0
    n_max_cavity: int | None = None
    n_max_mech: int | None = None
    step: float | None = None
    delta_omega: float | None = None
    check_step: bool = True
    reference: bool = False
    description: str = ""

    def replace(self, **changes) -> Scenario:
        return replace(self, **changes)

    def validate(self) -> None:
        """Static checks; raises ScenarioError."""
        if self.engine not in ENGINES:
            raise ScenarioError(f"unknown engine {self.engine!r}; choose from {', '.join(ENGINES)}")
        if self.sweep not in SWEEP_KEYS:
            raise ScenarioError(f"sweep key {self.sweep!r} is not a recognized config key")
        for s in self.series:
            for k, _ in s.overrides:
                if k not in SWEEP_KEYS:
                    raise ScenarioError(f"series {s.label!r} overrides unknown key {k!r}")
        if self.reference and self.sweep != "N":
            raise ScenarioError("SQL/HL reference columns need an N sweep")
        # checked even when every series overrides them
        if self.ratio is not None and not 0.0 <= self.ratio <= 1.0:
            raise ScenarioError(f"population ratio {self.ratio} outside [0, 1]")
        if self.N is not None and self.N < 0:
            raise ScenarioError(f"total number {self.N} is negative")
        labels = [s.label for s in self.series]
        if len(set(labels)) != len(labels):
            raise ScenarioError("series labels must be unique")
        for v in self.values:
            for s in self.series:
                st = self.settings(v, s)
                eps = st.get("drive_amplitude", self.params.drive_amplitude)
                kappa = st.get("kappa", self.params.kappa)
                if self.engine in ("analytic", "exact", "cfi") and (eps != 0 or kappa != 0):
                    raise ScenarioError(f"engine {self.engine} requires drive_amplitude = 0 and kappa = 0")
                if self.engine == "driven" and kappa != 0:
                    raise ScenarioError("engine driven requires kappa = 0; use lindblad for losses")
                if self.engine == "lindblad" and eps != 0:
                    raise ScenarioError("engine lindblad covers the zero-drive channel; use driven for drive")
                u = st.get("ratio", self.ratio)
                if u is not None and not 0.0 <= u <= 1.0:
                    raise ScenarioError(f"population ratio {u} outside [0, 1]")
                N = st.get("N", self.N)
                if N is not None and N < 0:
                    raise ScenarioError(f"total number {N} is negative")
                if ("N" in st or self.N is not None) and u is None:
                    raise ScenarioError("an N value needs a population ratio")

    def settings(self, value: float, series: Series) -> dict:
        st = {self.sweep: float(value)}
        st.update(dict(series.overrides))
        return st

    def point(self, value: float, series: Series):
        """Resolved (params, init, derived, t, quadrature phase) for one cell."""
        st = self.settings(value, series)
        pkw = {k: v for k, v in st.items() if k in SystemParams.__dataclass_fields__}
        params = self.params.replace(**pkw) if pkw else self.params
        init = self.init
        a = complex(st.get("alpha_re", complex(init.alpha).real), st.get("alpha_im", complex(init.alpha).imag))
        b = complex(st.get("beta_re", complex(init.beta).real), st.get("beta_im", complex(init.beta).imag))
        init = InitialState(a, b)
        N = st.get("N", self.N)
        if N is not None:
            init = split_state(N, st.get("ratio", self.ratio))
        derived = derive(params, self.units)
        if "time" in st or self.time is not None:
            t = st.get("time", self.time)
        else:
            t = st.get("theta", self.theta) / derived.omega_m_tilde
        return params, init, derived, float(t), float(st.get("quadrature_phase", self.quadrature_phase))


def rk4_space(params, derived, init, t, n_max_cavity=None, n_max_mech=None) -> TruncatedSpace:
    """Truncation for the RK4 engines: Poisson tails below RK4_TAIL in both modes."""
    nc = n_max_cavity
    if nc is None:
        nc = 1
        while poisson_tail(init.n_cavity, nc) >= RK4_TAIL:
            nc += 1
    nm = n_max_mech
    if nm is None:
        nm = comoving_mech_cutoff(params, derived, init, t, nc, tol=RK4_TAIL)
    return TruncatedSpace(nc, nm)


def _evaluate(s: Scenario, value: float, series: Series) -> tuple[dict, dict]:
    """Column values and bookkeeping for one (sweep value, series) cell."""
    params, init, derived, t, phi = s.point(value, series)
    delta = s.delta_omega if s.delta_omega is not None else default_delta(params)
    info = {"delta_omega": delta, "t": t}
    if s.engine == "analytic":
        info["truncation"] = "none"
        return {"qfi": qfi_closed_form(params, derived, init, t)}, info
    if s.engine in ("exact", "cfi"):
        nc = s.n_max_cavity if s.n_max_cavity is not None else cavity_cutoff(init, None)
        info["truncation"] = {"n_max_cavity": nc}
        q = qfi_pure_numeric(params, derived, init, t, TruncatedSpace(nc, 1), delta)
        if s.engine == "exact":
            return {"qfi": q}, info
        c = cfi(params, derived, init, t, QuadratureGrid.symmetric(nc, phi), delta, n_max_cavity=nc)
        return {"cfi": c, "qfi": q, "ratio": c / q if q else math.nan}, info
    space = rk4_space(params, derived, init, t, s.n_max_cavity, s.n_max_mech)
    info["truncation"] = {"n_max_cavity": space.n_max_cavity, "n_max_mech": space.n_max_mech}
    config = LindbladConfig(kappa=params.kappa, t_final=t, h=s.step, tail_tol=RK4_TAIL)
    info["step"] = config.step(derived)
    if s.engine == "lindblad":
        return {"qfi": qfi_mixed(params, derived, init, config, space, delta,
                                 check_step=s.check_step)}, info
    return {"qfi": qfi_driven_pure(params, derived, init, t, space, delta, config.step(derived))}, info


QUANTITIES = {"analytic": ("qfi",), "exact": ("qfi",), "cfi": ("cfi", "qfi", "ratio"),
              "lindblad": ("qfi",), "driven": ("qfi",)}


def _columns(s: Scenario) -> list[tuple[Series, str, str]]:
    cols = []
    qs = QUANTITIES[s.engine]
    for ser in s.series:
        for q in qs:
            name = ser.label if len(qs) == 1 else (q if len(s.series) == 1 else f"{ser.label}_{q}")
            cols.append((ser, q, name))
    return cols


def _run_point(args) -> tuple[list, list, list]:
    s, value = args
    out, infos, errors = {}, [], []
    for ser in s.series:
        try:
            vals, info = _evaluate(s, value, ser)
            out[ser.label] = vals
            infos.append({"series": ser.label, **info})
        except Exception as exc:  # recorded in-row, never aborts the sweep
            out[ser.label] = None
            errors.append({"value": value, "series": ser.label, "error": f"{type(exc).__name__}: {exc}"})
    row = [float(value)]
    for ser, q, _ in _columns(s):
        vals = out[ser.label]
        row.append(ERROR_MARKER if vals is None else float(vals[q]))
    if s.reference:
        row += [float(value), float(value) ** 2]
    return row, infos, errors


def run_scenario(s: Scenario, jobs: int = 1) -> ScanResult:
    """Evaluate every sweep point; rows follow the sweep order regardless of ``jobs``."""
    s.validate()
    headers = [s.sweep] + [name for _, _, name in _columns(s)]
    if s.reference:
        headers += ["SQL", "HL"]
    start = time.perf_counter()
    tasks = [(s, v) for v in s.values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_point, tasks))
    else:
        results = [_run_point(t) for t in tasks]
    rows = [tuple(r[0]) for r in results]
    meta = {
        "scenario": s.name,
        "description": s.description,
        "engine": s.engine,
        "sweep": {"key": s.sweep, "values": [float(v) for v in s.values]},
        "series": [{"label": ser.label, "overrides": dict(ser.overrides)} for ser in s.series],
        "params": params_to_dict(s.params, s.init, s.units),
        "controls": {"theta": s.theta, "time": s.time, "N": s.N, "ratio": s.ratio,
                     "quadrature_phase": s.quadrature_phase},
        "points": [{"value": float(v), "cells": r[1]} for v, r in zip(s.values, results)],
        "errors": [e for r in results for e in r[2]],
        "integrator_step": s.step,
        "delta_omega": s.delta_omega,
        "code_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "jobs": jobs,
        "wall_time_s": time.perf_counter() - start,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    return ScanResult(s.name, headers, rows, meta)


def _fig_point(**changes) -> SystemParams:
    return fig2_params(**changes)


def _s5_point(**changes) -> SystemParams:
    return lossy_params(g0_tilde=LOSSY_G0_TILDE, **changes)


def _label(x: float) -> str:
    return f"{x:g}"


def scenarios() -> dict[str, Scenario]:
    """Built-in scenarios keyed by name."""
    si, dl = UnitSystem.si(), UnitSystem.dimensionless()
    closed = InitialState()
    gnl = (0.0, 0.1, 0.3)
    kap = (0.0, 0.1, 0.3)
    out = {}
    out["fig2"] = Scenario(
        "fig2", "analytic", _fig_point(), closed, si, "theta",
        tuple(np.linspace(0.0, 4 * math.pi, 41)),
        tuple(Series.of(f"qfi_omega{_label(om)}_gnl{_label(r)}", omega_rotation=om, gnl_ratio=r)
              for om in (2e3, 4e3) for r in gnl),
        description="QFI versus w~_m t for two rotation rates and three Kerr couplings")
    out["fig3"] = Scenario(
        "fig3", "analytic", _fig_point(), closed, si, "omega_rotation",
        tuple(np.geomspace(1e2, 1e4, 50)),
        tuple(Series.of(f"qfi_gnl{_label(r)}", gnl_ratio=r) for r in gnl),
        description="QFI versus rotation rate at w~_m t = 2 pi")
    out["fig4"] = Scenario(
        "fig4", "analytic", _fig_point(), closed, si, "N", tuple(float(n) for n in range(1, 11)),
        tuple(Series.of(f"qfi_u{_label(u)}", ratio=u) for u in (0.1, 0.5, 0.9)),
        ratio=0.9, reference=True,
        description="QFI versus total particle number for three population ratios")
    out["fig5"] = Scenario(
        "fig5", "cfi", _fig_point(), closed, si, "N", tuple(float(n) for n in range(1, 11)),
        (Series("u0.9"),), ratio=0.9,
        description="Homodyne CFI and QFI versus total particle number, u = 0.9")
    out["fig6a"] = Scenario(
        "fig6a", "driven", _s5_point(), closed, dl, "drive_amplitude",
        tuple(np.linspace(0.0, 0.1, 11)), time=2 * math.pi,
        description="Pure-state QFI versus drive amplitude at drive phase 0")
    out["fig6b"] = Scenario(
        "fig6b", "driven", _s5_point(drive_amplitude=1e-2), closed, dl, "drive_phase",
        tuple(np.linspace(0.0, 2 * math.pi, 13)), time=2 * math.pi,
        description="Pure-state QFI versus drive phase at amplitude 1e-2")
    out["fig7"] = Scenario(
        "fig7", "lindblad", _s5_point(kappa=0.1), closed, dl, "time",
        tuple(k * math.pi / 4 for k in range(1, 9)),
        tuple(Series.of(f"qfi_gnl{_label(r)}", gnl_ratio=r) for r in gnl),
        description="Mixed-state QFI versus T at kappa = 0.1 for three Kerr couplings")
    out["fig8"] = Scenario(
        "fig8", "lindblad", _s5_point(), closed, dl, "time",
        tuple(k * math.pi / 4 for k in range(1, 9)),
        tuple(Series.of(f"qfi_kappa{_label(k)}", kappa=k) for k in kap),
        description="Mixed-state QFI versus T for three loss rates")
    out["fig9"] = Scenario(
        "fig9", "lindblad", _s5_point(), closed, dl, "omega_rotation",
        tuple(np.geomspace(2e-14, 2e-11, 7)),
        tuple(Series.of(f"qfi_kappa{_label(k)}", kappa=k) for k in kap), time=2 * math.pi,
        description="Mixed-state QFI versus rotation rate at T = 2 pi for three loss rates")
    out["fig10"] = Scenario(
        "fig10", "lindblad", _s5_point(), closed, dl, "N", tuple(float(n) for n in range(1, 11)),
        tuple(Series.of(f"qfi_kappa{_label(k)}", kappa=k) for k in kap),
        time=2 * math.pi, ratio=0.9, reference=True,
        description="Mixed-state QFI versus total particle number, u = 0.9, three loss rates")
    return out


SCENARIO_NAMES = ("fig2", "fig3", "fig4", "fig5", "fig6a", "fig6b", "fig7", "fig8", "fig9",
                  "fig10", "custom")


def get_scenario(name: str) -> Scenario:
    table = scenarios()
    if name == "custom":
        return Scenario("custom", "analytic", fig2_params(), InitialState(), UnitSystem.si(),
                        "theta", (2 * math.pi,), description="user-defined sweep")
    if name not in table:
        raise ScenarioError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIO_NAMES)}")
    return table[name]


def base_for_units(units: UnitSystem) -> SystemParams:
    return _s5_point() if units.mode == UnitMode.DIMENSIONLESS else _fig_point()


__all__ = [
    "ENGINES", "SWEEP_KEYS", "LOSSY_G0_TILDE", "Scenario", "ScenarioError", "Series",
    "population_split", "split_state", "reference_curves", "run_scenario", "scenarios",
    "get_scenario", "rk4_space", "SCENARIO_NAMES",
]
