"""Command-line entry point.

Subcommands::

    switchcert run SCENARIO [--out DIR] [--horizon H] [--seed N]
    switchcert simulate SCENARIO [--out DIR] [--horizon H] [--seed N]
    switchcert omega SCENARIO [--out DIR] [--horizon H] [--seed N]
    switchcert validate SIGNAL_FILE TAU_D N0

SCENARIO is either a built-in id (see ``scenarios/``) or the path of an
INI scenario file; the commented reference files under ``scenarios/``
document the schema.  Scientific outcomes are data, not process
failures: ``run`` exits 0 even when the verdict is negative.  Exit code
2 marks an unreadable or schema-invalid input (nothing is written), 3 a
simulation blow-up.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .invariance import omega_limit, omega_sharp, project_states
from .lyapunov import check_class_k_bounds, check_strict_decrease
from .scenarios import (
    FeedbackSource,
    FileSource,
    GeneratedSource,
    Scenario,
    builtin_scenario,
    polar_grid,
    scenario_names,
)
from .signals import AdtClass, SignalFormatError, load_signal, save_signal, validate_adt
from .stability import fit_uniform_envelope, guas_report, simulate_batch
from .systems import FiniteEscapeError, write_trajectory_csv


class SchemaError(ValueError):
    """Scenario file violates the documented schema."""


_SCENARIO_KEYS = {"system", "horizon", "output", "seed"}
_IC_KEYS = {"radii", "angles", "points"}
_SIGNAL_KEYS = {"source", "tau_d", "n0", "count", "paths"}
_TOL_FLOAT_KEYS = {
    "rtol", "atol", "event_tol", "max_dx", "bound",
    "cluster_tol", "lasalle_tol", "tail_fraction", "compliance_tol",
    "monotonicity_tol", "attraction_eps", "attraction_radius", "probe_delta",
}
_TOL_INT_KEYS = {"max_switches"}


def _locate(text: str, token: str) -> int:
    """1-based line number of the first line defining or naming ``token``."""
    for i, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(f"[{token}]") or stripped.split("=")[0].strip() == token:
            return i
    return 0


def _fail_schema(path: str, text: str, token: str, message: str) -> None:
    line = _locate(text, token)
    raise SchemaError(f"{path}:{line}: {message}")


def load_scenario_file(path: str) -> tuple[Scenario, str | None]:
    """Parse an INI scenario file into (Scenario, output dir or None)."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise SchemaError(str(exc))

    known = {"scenario": _SCENARIO_KEYS, "initial_conditions": _IC_KEYS,
             "signal": _SIGNAL_KEYS, "tolerances": _TOL_FLOAT_KEYS | _TOL_INT_KEYS}
    for section in parser.sections():
        if section not in known:
            _fail_schema(path, text, section, f"unknown section [{section}]")
        for key in parser[section]:
            if key not in known[section]:
                _fail_schema(path, text, key, f"unknown key {key!r} in [{section}]")

    if "scenario" not in parser or "system" not in parser["scenario"]:
        raise SchemaError(f"{path}:1: missing [scenario] section with a 'system' key")
    sec = parser["scenario"]
    system_id = sec["system"].strip()
    try:
        scenario = builtin_scenario(system_id)
    except ValueError as exc:
        _fail_schema(path, text, "system", str(exc))

    overrides: dict = {}
    if "horizon" in sec:
        overrides["horizon"] = _parse_float(path, text, "horizon", sec["horizon"])

    if "initial_conditions" in parser:
        ic = parser["initial_conditions"]
        if "points" in ic:
            try:
                pts = [[float(v) for v in chunk.split()]
                       for chunk in ic["points"].split(",") if chunk.strip()]
                overrides["initial_states"] = np.array(pts)
            except ValueError:
                _fail_schema(path, text, "points", "points must be ','-separated coordinate lists")
        elif "radii" in ic:
            radii = [_parse_float(path, text, "radii", v) for v in ic["radii"].split()]
            n_angles = _parse_int(path, text, "angles", ic.get("angles", "4"))
            overrides["initial_states"] = polar_grid(radii, n_angles)

    if "signal" in parser:
        sig = parser["signal"]
        kind = sig.get("source", "").strip()
        if kind == "feedback":
            if not isinstance(scenario.source, FeedbackSource):
                _fail_schema(path, text, "source",
                             f"system {system_id!r} does not define a feedback rule")
        elif kind == "generate":
            tau_d = _parse_float(path, text, "tau_d", sig.get("tau_d", ""))
            n0 = _parse_int(path, text, "n0", sig.get("n0", ""))
            count = _parse_int(path, text, "count", sig.get("count", "8"))
            base = _parse_int(path, text, "seed", sec.get("seed", "0"))
            overrides["source"] = GeneratedSource(
                AdtClass(tau_d, n0), seeds=tuple(range(base, base + count))
            )
        elif kind == "file":
            if "paths" not in sig:
                _fail_schema(path, text, "paths", "file source requires 'paths'")
            root = Path(path).parent
            paths = tuple(str((root / p)) for p in sig["paths"].split())
            overrides["source"] = FileSource(paths)
        elif kind:
            _fail_schema(path, text, "source",
                         f"unknown signal source {kind!r} (feedback | generate | file)")

    if "tolerances" in parser:
        tol = parser["tolerances"]
        int_opts, opt_kwargs, chk_kwargs = {}, {}, {}
        for key in tol:
            if key in _TOL_INT_KEYS:
                int_opts[key] = _parse_int(path, text, key, tol[key])
            else:
                value = _parse_float(path, text, key, tol[key])
                if key in {"rtol", "atol", "event_tol", "max_dx", "bound"}:
                    opt_kwargs[key] = value
                else:
                    chk_kwargs[key] = value
        if opt_kwargs or int_opts:
            overrides["integrator"] = replace(scenario.integrator, **opt_kwargs, **int_opts)
        if chk_kwargs:
            overrides["checks"] = replace(scenario.checks, **chk_kwargs)

    try:
        scenario = replace(scenario, **overrides) if overrides else scenario
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")
    out = sec.get("output", "").strip()
    return scenario, out or None


def _parse_float(path: str, text: str, key: str, raw: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        _fail_schema(path, text, key, f"{key} must be a number, got {raw!r}")
    if math.isnan(value):
        _fail_schema(path, text, key, f"{key} must not be NaN")
    return value


def _parse_int(path: str, text: str, key: str, raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        _fail_schema(path, text, key, f"{key} must be an integer, got {raw!r}")


def _resolve_scenario(args) -> tuple[Scenario, Path]:
    """Scenario plus output directory from CLI arguments."""
    name = args.scenario
    if Path(name).is_file():
        scenario, out = load_scenario_file(name)
    elif name in scenario_names():
        scenario, out = builtin_scenario(name), None
    else:
        raise SchemaError(
            f"{name}: not a readable file and not a built-in scenario "
            f"(built-ins: {', '.join(scenario_names())})"
        )
    overrides = {}
    if args.horizon is not None:
        overrides["horizon"] = args.horizon
    if args.seed is not None and isinstance(scenario.source, GeneratedSource):
        src = scenario.source
        overrides["source"] = GeneratedSource(
            src.adt, seeds=tuple(args.seed + i for i in range(len(src.seeds)))
        )
    if overrides:
        scenario = replace(scenario, **overrides)
    out_dir = Path(args.out) if args.out else Path(out or f"artifacts_{scenario.name}")
    return scenario, out_dir


def _write_batch_artifacts(scenario: Scenario, batch, out: Path, with_estimates: bool) -> list[str]:
    files: list[str] = []
    for k, traj in enumerate(batch.trajectories):
        tname = f"trajectory_{k:03d}.csv"
        write_trajectory_csv(traj, out / tname, V=scenario.V)
        files.append(tname)
        sname = f"signal_{k:03d}.txt"
        save_signal(traj.signal, scenario.system.modes, out / sname)
        files.append(sname)
        if with_estimates:
            est = omega_limit(traj, scenario.checks.tail_fraction, scenario.checks.cluster_tol)
            est.to_csv(out / f"omega_{k:03d}.csv")
            files.append(f"omega_{k:03d}.csv")
            sharp = omega_sharp(traj, scenario.checks.tail_fraction, scenario.checks.cluster_tol)
            sharp.to_csv(out / f"omega_sharp_{k:03d}.csv")
            files.append(f"omega_sharp_{k:03d}.csv")
    return files


def cmd_run(args) -> int:
    scenario, out = _resolve_scenario(args)
    try:
        batch = simulate_batch(scenario)
    except FiniteEscapeError as exc:
        print(f"simulation blow-up: {exc}", file=sys.stderr)
        return 3
    out.mkdir(parents=True, exist_ok=True)
    files = _write_batch_artifacts(scenario, batch, out, with_estimates=True)

    classk = check_class_k_bounds(scenario.V, scenario.system, scenario.region)
    classk.to_csv(out / "classk_envelope.csv")
    files.append("classk_envelope.csv")
    strict = check_strict_decrease(scenario.V, scenario.system, scenario.region)
    strict.to_csv(out / "strict_decrease.csv")
    files.append("strict_decrease.csv")
    envelope = fit_uniform_envelope(batch, n_bins=scenario.checks.n_radius_bins,
                                    bin_slack=scenario.checks.bin_slack)
    envelope.to_csv(out / "uniform_envelope.csv")
    files.append("uniform_envelope.csv")

    report = guas_report(scenario, batch)
    body = report.to_text()
    body += "\nartifacts:\n" + "".join(f"  {f}\n" for f in sorted(files))
    (out / "guas_report.txt").write_text(body)
    (out / "guas_report.kv").write_text("\n".join(report.to_records()) + "\n")
    print(body, end="")
    print(f"report written to {out}/guas_report.txt")
    return 0


def cmd_simulate(args) -> int:
    scenario, out = _resolve_scenario(args)
    try:
        batch = simulate_batch(scenario)
    except FiniteEscapeError as exc:
        print(f"simulation blow-up: {exc}", file=sys.stderr)
        return 3
    out.mkdir(parents=True, exist_ok=True)
    files = _write_batch_artifacts(scenario, batch, out, with_estimates=False)
    print(f"{len(batch)} trajectories written to {out} ({len(files)} files)")
    return 0


def cmd_omega(args) -> int:
    scenario, out = _resolve_scenario(args)
    try:
        batch = simulate_batch(scenario)
    except FiniteEscapeError as exc:
        print(f"simulation blow-up: {exc}", file=sys.stderr)
        return 3
    out.mkdir(parents=True, exist_ok=True)
    for k, traj in enumerate(batch.trajectories):
        est = omega_limit(traj, scenario.checks.tail_fraction, scenario.checks.cluster_tol)
        est.to_csv(out / f"omega_{k:03d}.csv")
        sharp = omega_sharp(traj, scenario.checks.tail_fraction, scenario.checks.cluster_tol)
        sharp.to_csv(out / f"omega_sharp_{k:03d}.csv")
        proj = project_states(sharp)
        print(
            f"trajectory {k:03d}: {est.points.shape[0]} limit points, "
            f"{sharp.modes.size} state-mode pairs, {proj.shape[0]} projected states"
        )
    print(f"estimates written to {out}")
    return 0


def cmd_validate(args) -> int:
    try:
        signal, _modes = load_signal(args.signal_file)
        adt = AdtClass(args.tau_d, args.n0)
    except (SignalFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    verdict = validate_adt(signal, adt)
    if verdict.valid:
        print(f"valid: {signal.n_switches} switches within "
              f"class(tau_d={adt.tau_d:g}, n0={adt.n0})")
        return 0
    a, b, count, bound = verdict.witness
    print(f"invalid: interval ({a:.17g}, {b:.17g}) contains {count} switches, "
          f"bound is {bound:.17g}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="switchcert",
        description="Simulate and certify switched systems under dwell-time switching.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_args(p):
        p.add_argument("scenario", help="built-in id or scenario .ini path")
        p.add_argument("--out", help="artifact directory")
        p.add_argument("--horizon", type=float, default=None, help="override horizon")
        p.add_argument("--seed", type=int, default=None,
                       help="override base seed for generated signals")

    p_run = sub.add_parser("run", help="simulate, estimate, certify; write all artifacts")
    add_scenario_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("simulate", help="trajectories and realized signals only")
    add_scenario_args(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_om = sub.add_parser("omega", help="limit-set estimates only")
    add_scenario_args(p_om)
    p_om.set_defaults(func=cmd_omega)

    p_val = sub.add_parser("validate", help="check a signal file against an ADT class")
    p_val.add_argument("signal_file")
    p_val.add_argument("tau_d", type=float)
    p_val.add_argument("n0", type=int)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except SignalFormatError as exc:
        print(f"signal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
