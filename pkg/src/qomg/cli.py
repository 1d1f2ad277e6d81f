"""Command-line entry point: ``qomg run | list | validate | oracle``.

Config files are INI files with two optional sections:

    [params]            model keys (omega_rotation, gnl_ratio, g0_tilde, kappa, ...)
    [scenario]          name, engine, sweep, values, series and the run controls

``values`` accepts a comma list or ``linspace(a, b, n)`` / ``geomspace(a, b, n)``.
``series`` is ``label: key=value, key=value; label2: key=value``.
Unknown sections or keys are a configuration error (exit code 1).
"""

from __future__ import annotations

import argparse
import configparser
import math
import re
import sys

import numpy as np

from .experiments import (ENGINES, SCENARIO_NAMES, Scenario, ScenarioError, Series, base_for_units,
                          get_scenario, rk4_space, run_scenario)
from .model import EXTRA_KEYS, PARAM_KEYS, params_from_dict, params_to_dict
from .oracles import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_PARTIAL = 0, 1, 2, 3

SCENARIO_FLOATS = ("theta", "time", "N", "ratio", "quadrature_phase", "step", "delta_omega")
SCENARIO_INTS = ("n_max_cavity", "n_max_mech")
SCENARIO_BOOLS = ("check_step", "reference")
SCENARIO_KEYS = ("name", "engine", "sweep", "values", "series", "description") \
    + SCENARIO_FLOATS + SCENARIO_INTS + SCENARIO_BOOLS
PARAM_FILE_KEYS = tuple(PARAM_KEYS) + tuple(EXTRA_KEYS)


class ConfigError(ValueError):
    pass


def _number(text: str, key: str) -> float:
    try:
        value = float(eval_constant(text))
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot read {text!r} as a number") from exc
    return value


def eval_constant(text: str) -> float:
    """A float literal, optionally written with ``pi`` (``2*pi``, ``pi/4``)."""
    t = text.strip().replace(" ", "")
    m = re.fullmatch(r"([-+]?[0-9.eE+-]*)\*?pi(?:/([0-9.eE+-]+))?", t)
    if m:
        coef = float(m.group(1)) if m.group(1) not in ("", "+", "-") else (-1.0 if m.group(1) == "-" else 1.0)
        div = float(m.group(2)) if m.group(2) else 1.0
        return coef * math.pi / div
    return float(t)


def parse_values(text: str) -> tuple[float, ...]:
    t = text.strip()
    if not t:
        return ()
    m = re.fullmatch(r"(linspace|geomspace)\(([^,]+),([^,]+),([^,]+)\)", t.replace(" ", ""))
    if m:
        a, b = _number(m.group(2), "values"), _number(m.group(3), "values")
        n = int(_number(m.group(4), "values"))
        if n < 0:
            raise ConfigError("values: point count must be non-negative")
        fn = np.linspace if m.group(1) == "linspace" else np.geomspace
        return tuple(float(v) for v in fn(a, b, n))
    return tuple(_number(v, "values") for v in t.split(",") if v.strip())


def parse_series(text: str) -> tuple[Series, ...]:
    out = []
    for chunk in text.split(";"):
        if not chunk.strip():
            continue
        if ":" not in chunk:
            raise ConfigError(f"series entry {chunk.strip()!r} needs 'label: key=value, ...'")
        label, body = chunk.split(":", 1)
        overrides = []
        for item in body.split(","):
            if not item.strip():
                continue
            if "=" not in item:
                raise ConfigError(f"series {label.strip()!r}: expected key=value, got {item.strip()!r}")
            k, v = item.split("=", 1)
            overrides.append((k.strip(), _number(v, k.strip())))
        out.append(Series(label.strip(), tuple(overrides)))
    if not out:
        raise ConfigError("series is empty")
    return tuple(out)


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def read_config(path: str | None) -> tuple[dict, dict]:
    """(params, scenario) key-value dictionaries; unknown sections or keys raise ConfigError."""
    if path is None:
        return {}, {}
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown = [s for s in parser.sections() if s not in ("params", "scenario")]
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    params = dict(parser["params"]) if parser.has_section("params") else {}
    scen = dict(parser["scenario"]) if parser.has_section("scenario") else {}
    for k in params:
        if k not in PARAM_FILE_KEYS:
            raise ConfigError(f"unknown parameter key {k!r}")
    for k in scen:
        if k not in SCENARIO_KEYS:
            raise ConfigError(f"unknown scenario key {k!r}")
    return params, scen


def split_overrides(items) -> tuple[dict, dict]:
    """--param key=value pairs, routed to the params or scenario dictionary."""
    params, scen = {}, {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        k, v = (s.strip() for s in item.split("=", 1))
        if k in PARAM_FILE_KEYS:
            params[k] = v
        elif k in SCENARIO_KEYS and k != "name":
            scen[k] = v
        else:
            raise ConfigError(f"unknown parameter key {k!r}")
    return params, scen


def build_scenario(name: str | None, params: dict, scen: dict) -> Scenario:
    cfg_name = scen.get("name")
    if name is not None and cfg_name is not None and cfg_name != name:
        raise ConfigError(f"config names scenario {cfg_name!r} but {name!r} was requested")
    name = name or cfg_name or "custom"
    if name not in SCENARIO_NAMES:
        raise ConfigError(f"unknown scenario {name!r}; run 'qomg list'")
    s = get_scenario(name)
    if params:
        merged = params_to_dict(s.params, s.init, s.units)
        if "units" in params and params["units"].strip().lower() != s.units.mode.value.lower():
            if name != "custom":
                raise ConfigError("units cannot be changed for a built-in scenario; use the custom scenario")
            try:
                units = params_from_dict({"units": params["units"].strip()})[2]
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            merged = params_to_dict(base_for_units(units), s.init, units)
        merged.update(params)
        try:
            p, init, units = params_from_dict(
                {k: (v if k == "units" else (None if v is None else _number(str(v), k)))
                 for k, v in merged.items()})
        except (KeyError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        s = s.replace(params=p, init=init, units=units)
    changes = {}
    for k, v in scen.items():
        if k == "name":
            continue
        if k == "engine":
            if v.strip() not in ENGINES:
                raise ConfigError(f"unknown engine {v.strip()!r}")
            changes[k] = v.strip()
        elif k == "sweep":
            changes[k] = v.strip()
        elif k == "values":
            changes[k] = parse_values(v)
        elif k == "series":
            changes[k] = parse_series(v)
        elif k == "description":
            changes[k] = v.strip()
        elif k in SCENARIO_FLOATS:
            changes[k] = _number(v, k)
        elif k in SCENARIO_INTS:
            changes[k] = int(_number(v, k))
        elif k in SCENARIO_BOOLS:
            changes[k] = _bool(v, k)
    s = s.replace(**changes)
    if "sweep" in changes and "series" not in changes and name != "custom":
        for ser in s.series:
            if any(k == s.sweep for k, _ in ser.overrides):
                raise ConfigError(f"built-in series already set {s.sweep!r}; give a series list too")
    try:
        s.validate()
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc
    return s


def precheck(s: Scenario) -> list[str]:
    """Dry run: resolve every cell and its truncation without running an engine."""
    problems = []
    for v in s.values:
        for ser in s.series:
            try:
                params, init, derived, t, _ = s.point(v, ser)
                if not (math.isfinite(t) and t >= 0):
                    raise ValueError(f"evolution time {t} is not a non-negative number")
                if s.engine in ("lindblad", "driven"):
                    rk4_space(params, derived, init, t, s.n_max_cavity, s.n_max_mech)
                if s.engine == "analytic" and complex(init.beta).imag != 0:
                    raise ValueError("the analytic engine needs a real mechanical amplitude")
            except Exception as exc:
                problems.append(f"{s.sweep}={v:g}, series {ser.label}: {type(exc).__name__}: {exc}")
    return problems


def _cmd_list(_args) -> int:
    table = {n: get_scenario(n) for n in SCENARIO_NAMES}
    for name, s in table.items():
        print(f"{name:8s} engine={s.engine:9s} sweep={s.sweep:16s} points={len(s.values):3d}  {s.description}")
    return EXIT_OK


def _load(args, name):
    p1, s1 = read_config(getattr(args, "config", None))
    p2, s2 = split_overrides(getattr(args, "param", None))
    p1.update(p2)
    s1.update(s2)
    return build_scenario(name, p1, s1)


def _cmd_run(args) -> int:
    try:
        s = _load(args, args.scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    result = run_scenario(s, jobs=args.jobs)
    csv_path, meta_path = result.write(args.out)
    cells = len(s.values) * len(s.series)
    errors = len(result.metadata["errors"])
    print(f"wrote {csv_path} and {meta_path} ({len(result.rows)} rows, {errors} failed cells)")
    for e in result.metadata["errors"]:
        print(f"  {s.sweep}={e['value']:g} [{e['series']}]: {e['error']}", file=sys.stderr)
    if errors == 0:
        return EXIT_OK
    return EXIT_NUMERICAL if errors == cells else EXIT_PARTIAL


def _cmd_validate(args) -> int:
    try:
        s = _load(args, None)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    problems = precheck(s)
    if problems:
        for p in problems:
            print(f"precondition failed: {p}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"scenario {s.name}: engine {s.engine}, sweep {s.sweep} over {len(s.values)} points, "
          f"{len(s.series)} series; all preconditions hold")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    names = list(SUITES) if args.module == "all" else [args.module]
    if any(n not in SUITES for n in names):
        print(f"unknown module {args.module!r}; choose from all, {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_CONFIG
    checks, timing = run_suites(names)
    for c in checks:
        print(c.line())
    failed = sum(1 for c in checks if not c.passed)
    total = sum(timing.values())
    print(f"{len(checks) - failed}/{len(checks)} checks passed in {total:.1f} s")
    return EXIT_OK if failed == 0 else EXIT_NUMERICAL


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qomg", description="Optomechanical gyroscope sensitivity scenarios.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV plus JSON metadata")
    run.add_argument("scenario", choices=SCENARIO_NAMES)
    run.add_argument("--config", help="INI file with [params] and [scenario] sections")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    run.add_argument("--param", action="append", metavar="KEY=VALUE", help="override one key; repeatable")
    run.set_defaults(func=_cmd_run)
    ls = sub.add_parser("list", help="list the built-in scenarios")
    ls.set_defaults(func=_cmd_list)
    val = sub.add_parser("validate", help="check a config and every sweep point without running engines")
    val.add_argument("--config", required=True)
    val.add_argument("--param", action="append", metavar="KEY=VALUE")
    val.set_defaults(func=_cmd_validate)
    orc = sub.add_parser("oracle", help="run brute-force cross-check suites")
    orc.add_argument("module", help=f"all, {', '.join(SUITES)}")
    orc.set_defaults(func=_cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
