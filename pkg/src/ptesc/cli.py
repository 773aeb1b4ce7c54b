"""Scenario configuration and command-line entry points.

A scenario is one INI-style file with flat sections (plant, params,
integrator, run, outputs, analysis).  Unknown sections and keys are
rejected so that a typo in one of the omega-family names cannot silently
misconfigure a run.  Subcommands:

    run CFG        integrate one scenario, write trajectory/report/plots
    sweep CFG      Cartesian parameter sweep, one summary row per cell
    compare A B    run two scenarios and diff them on the shared grid
    validate CFG   sample the plant's regularity bounds and print the report

Exit codes: 0 run completed, 1 usage or configuration error, 2 run diverged
(partial outputs are still written).
"""

from __future__ import annotations

import argparse
import configparser
import io
import itertools
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analysis import (compare_trajectories, convergence_report, estimate_tracking)
from .controller import EscParams
from .plant import (PlantModel, check_assumptions, eval_cost, find_equilibrium_optimum,
                    get_plant, BUILTIN_PLANTS)
from .sim import IntegratorConfig, Trajectory, simulate_averaged, simulate_esc, simulate_target
from .timescale import PrescribedTime

MODES = ("esc", "target", "averaged")
FORMATS = ("csv", "json", "gnuplot")
SWEEP_CAP = 10000


class ConfigError(ValueError):
    """A scenario file failed to parse or validate."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated description of one simulation run."""

    plant_name: str
    x0: tuple[float, ...]
    params: EscParams
    integrator: IntegratorConfig
    mode: str = "esc"
    out_dir: str = "out"
    formats: tuple[str, ...] = FORMATS
    analysis_box: Optional[tuple[tuple[float, float], ...]] = None
    analysis_samples: int = 256
    analysis_u_range: Optional[tuple[float, float]] = None


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _conv_float(text: str) -> float:
    val = float(text)
    if not math.isfinite(val):
        raise ValueError("must be finite")
    return val


def _conv_int(text: str) -> int:
    return int(text)


def _conv_str(text: str) -> str:
    return text.strip()


def _conv_float_list(text: str) -> tuple[float, ...]:
    parts = [p for p in (s.strip() for s in text.split(",")) if p]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


def _conv_str_list(text: str) -> tuple[str, ...]:
    return tuple(p for p in (s.strip() for s in text.split(",")) if p)


# section -> key -> converter; None marks a key that may be present but empty
_SCHEMA = {
    "plant": {"name": _conv_str, "x0": _conv_float_list},
    "params": {"T": _conv_float, "A": _conv_float, "omega": _conv_float,
               "omega_h": _conv_float, "omega_l": _conv_float, "k": _conv_float,
               "tau_I": _conv_float, "u_hat0": _conv_float,
               "stop_fraction": _conv_float, "gain_clamp": _conv_float},
    "integrator": {"method": _conv_str, "rtol": _conv_float, "atol": _conv_float,
                   "dither_resolution": _conv_int, "max_step_absolute": _conv_float,
                   "record_stride": _conv_int, "n_record": _conv_int,
                   "backend": _conv_str},
    "run": {"mode": _conv_str},
    "outputs": {"dir": _conv_str, "formats": _conv_str_list},
    "analysis": {"box_lo": _conv_float_list, "box_hi": _conv_float_list,
                 "samples": _conv_int, "u_range": _conv_float_list},
}

_REQUIRED = {
    "plant": ("name", "x0"),
    "params": ("T", "A", "omega", "omega_h", "omega_l", "k", "tau_I"),
}


def _parse_sections(text: str, source: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case-sensitive (T vs t)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    sections: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(
                f"{source}: unknown section [{section}] "
                f"(known: {', '.join(_SCHEMA)})")
        sections[section] = {}
        for key, value in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(
                    f"{source}: unknown key {key!r} in [{section}] "
                    f"(known: {', '.join(_SCHEMA[section])})")
            sections[section][key] = value
    return sections


def _get(sections, source, section, key, default=None):
    raw = sections.get(section, {}).get(key)
    if raw is None or raw.strip() == "":
        return default
    try:
        return _SCHEMA[section][key](raw)
    except ValueError as exc:
        raise ConfigError(f"{source}: [{section}] {key}={raw!r}: {exc}") from exc


def _build_config(sections: dict[str, dict[str, str]], source: str) -> ScenarioConfig:
    for section, keys in _REQUIRED.items():
        for key in keys:
            if sections.get(section, {}).get(key) in (None, ""):
                raise ConfigError(f"{source}: missing required key [{section}] {key}")

    plant_name = _get(sections, source, "plant", "name")
    if plant_name not in BUILTIN_PLANTS:
        raise ConfigError(
            f"{source}: [plant] name={plant_name!r} is not a builtin "
            f"({', '.join(sorted(BUILTIN_PLANTS))})")
    plant = get_plant(plant_name)
    x0 = _get(sections, source, "plant", "x0")
    if len(x0) != plant.n:
        raise ConfigError(
            f"{source}: [plant] x0 must have {plant.n} entries for "
            f"{plant_name}, got {len(x0)}")

    mode = _get(sections, source, "run", "mode", "esc")
    if mode not in MODES:
        raise ConfigError(f"{source}: [run] mode must be one of {MODES}, got {mode!r}")

    try:
        pt = PrescribedTime(
            T=_get(sections, source, "params", "T"),
            stop_fraction=_get(sections, source, "params", "stop_fraction", 1e-3),
            gain_clamp=_get(sections, source, "params", "gain_clamp"))
        params = EscParams(
            pt=pt,
            A=_get(sections, source, "params", "A"),
            omega=_get(sections, source, "params", "omega"),
            omega_h=_get(sections, source, "params", "omega_h"),
            omega_l=_get(sections, source, "params", "omega_l"),
            k=_get(sections, source, "params", "k"),
            tau_I=_get(sections, source, "params", "tau_I"),
            u_hat0=_get(sections, source, "params", "u_hat0", 0.0))
    except ValueError as exc:
        raise ConfigError(f"{source}: [params] {exc}") from exc
    if mode == "esc" and not params.A > 0.0:
        raise ConfigError(f"{source}: [params] A must be > 0 in esc mode")

    try:
        integ = IntegratorConfig(
            method=_get(sections, source, "integrator", "method", "rk45"),
            rtol=_get(sections, source, "integrator", "rtol", 1e-8),
            atol=_get(sections, source, "integrator", "atol", 1e-10),
            dither_resolution=_get(sections, source, "integrator", "dither_resolution", 20),
            max_step_absolute=_get(sections, source, "integrator", "max_step_absolute", math.inf),
            record_stride=_get(sections, source, "integrator", "record_stride", 1),
            n_record=_get(sections, source, "integrator", "n_record", 2000),
            backend=_get(sections, source, "integrator", "backend", "auto"))
    except ValueError as exc:
        raise ConfigError(f"{source}: [integrator] {exc}") from exc

    formats = _get(sections, source, "outputs", "formats", FORMATS)
    for fmt in formats:
        if fmt not in FORMATS:
            raise ConfigError(
                f"{source}: [outputs] formats entry {fmt!r} not in {FORMATS}")

    box_lo = _get(sections, source, "analysis", "box_lo")
    box_hi = _get(sections, source, "analysis", "box_hi")
    box = None
    if (box_lo is None) != (box_hi is None):
        raise ConfigError(f"{source}: [analysis] box_lo and box_hi must come together")
    if box_lo is not None:
        if len(box_lo) != plant.n or len(box_hi) != plant.n:
            raise ConfigError(
                f"{source}: [analysis] box must have {plant.n} entries per side")
        box = tuple((lo, hi) for lo, hi in zip(box_lo, box_hi))
        for lo, hi in box:
            if not lo < hi:
                raise ConfigError(f"{source}: [analysis] box side [{lo}, {hi}] is empty")
    u_range = _get(sections, source, "analysis", "u_range")
    if u_range is not None:
        if len(u_range) != 2 or not u_range[0] < u_range[1]:
            raise ConfigError(f"{source}: [analysis] u_range must be 'lo, hi' with lo < hi")
        u_range = (u_range[0], u_range[1])

    return ScenarioConfig(
        plant_name=plant_name, x0=x0, params=params, integrator=integ, mode=mode,
        out_dir=_get(sections, source, "outputs", "dir", "out"),
        formats=tuple(formats),
        analysis_box=box,
        analysis_samples=_get(sections, source, "analysis", "samples", 256),
        analysis_u_range=u_range)


def load_config(path) -> ScenarioConfig:
    """Load and validate a scenario file; unknown sections/keys are rejected."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return _build_config(_parse_sections(text, str(path)), str(path))


def _fmt_float(val: float) -> str:
    return repr(float(val))


def config_to_sections(config: ScenarioConfig) -> dict[str, dict[str, str]]:
    """Explicit string form of every field; reloading reproduces the config."""
    params = config.params
    sections = {
        "plant": {"name": config.plant_name,
                  "x0": ", ".join(_fmt_float(v) for v in config.x0)},
        "params": {"T": _fmt_float(params.pt.T), "A": _fmt_float(params.A),
                   "omega": _fmt_float(params.omega),
                   "omega_h": _fmt_float(params.omega_h),
                   "omega_l": _fmt_float(params.omega_l),
                   "k": _fmt_float(params.k), "tau_I": _fmt_float(params.tau_I),
                   "u_hat0": _fmt_float(params.u_hat0),
                   "stop_fraction": _fmt_float(params.pt.stop_fraction)},
        "integrator": {"method": config.integrator.method,
                       "rtol": _fmt_float(config.integrator.rtol),
                       "atol": _fmt_float(config.integrator.atol),
                       "dither_resolution": str(config.integrator.dither_resolution),
                       "max_step_absolute": _fmt_float(config.integrator.max_step_absolute),
                       "record_stride": str(config.integrator.record_stride),
                       "n_record": str(config.integrator.n_record),
                       "backend": config.integrator.backend},
        "run": {"mode": config.mode},
        "outputs": {"dir": config.out_dir, "formats": ", ".join(config.formats)},
    }
    if params.pt.gain_clamp is not None:
        sections["params"]["gain_clamp"] = _fmt_float(params.pt.gain_clamp)
    analysis = {}
    if config.analysis_box is not None:
        analysis["box_lo"] = ", ".join(_fmt_float(b[0]) for b in config.analysis_box)
        analysis["box_hi"] = ", ".join(_fmt_float(b[1]) for b in config.analysis_box)
    if config.analysis_u_range is not None:
        analysis["u_range"] = ", ".join(_fmt_float(v) for v in config.analysis_u_range)
    analysis["samples"] = str(config.analysis_samples)
    sections["analysis"] = analysis
    return sections


def serialize_config(config: ScenarioConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section, keys in config_to_sections(config).items():
        parser[section] = keys
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads_config(text: str, source: str = "<string>") -> ScenarioConfig:
    return _build_config(_parse_sections(text, source), source)


# ---------------------------------------------------------------------------
# Execution
# ---------------------------------------------------------------------------

def _simulate(config: ScenarioConfig) -> tuple[PlantModel, Trajectory]:
    plant = get_plant(config.plant_name)
    sim_fn = {"esc": simulate_esc, "target": simulate_target,
              "averaged": simulate_averaged}[config.mode]
    return plant, sim_fn(plant, config.params, np.array(config.x0), config.integrator)


def resolve_optimum(plant: PlantModel, config: ScenarioConfig):
    """(x_star, u_star, y_star) from the plant's known optimum, or from the
    steady-state-cost sweep over [analysis] u_range; None when neither exists."""
    if plant.known_optimum is not None:
        x_star, u_star = plant.known_optimum
        return x_star, u_star, eval_cost(plant, x_star)
    if config.analysis_u_range is not None:
        u_star, x_star, y_star = find_equilibrium_optimum(
            plant, config.params.k, config.analysis_u_range)
        return x_star, u_star, y_star
    return None


def write_trajectory_csv(traj: Trajectory, path: Path) -> None:
    """Numeric-only CSV, 17 significant digits, schema t,tau,x1..xn,u,y,xi,u_hat,eta,nu_bar."""
    cols = traj.column_names()
    arrays = [traj.signal(c) for c in cols]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(traj.t)):
            fh.write(",".join("%.17g" % a[i] for a in arrays) + "\n")


def build_report(config: ScenarioConfig, plant: PlantModel, traj: Trajectory) -> dict:
    data = {
        "plant": config.plant_name,
        "mode": config.mode,
        "status": traj.status,
        "t_end": float(traj.t[-1]),
        "samples": int(len(traj.t)),
    }
    if traj.status != "completed":
        data["divergence_time"] = traj.divergence_time
        data["divergence_reason"] = traj.divergence_reason
        return data
    optimum = resolve_optimum(plant, config)
    if optimum is not None:
        x_star, u_star, y_star = optimum
        data["optimum"] = {"x": [float(v) for v in np.atleast_1d(x_star)],
                           "u": float(u_star), "y": float(y_star)}
        data["convergence"] = convergence_report(traj, (x_star, u_star, y_star)).to_dict()
    if config.mode == "esc":
        data["estimate_tracking_mean_abs"] = estimate_tracking(traj, plant, window=0.5)
    return data


def emit_plots(traj: Trajectory, report: dict, out_dir: Path) -> list[Path]:
    """Write a self-contained gnuplot script: a stacked state/output figure
    (x2 on top, x1 in the middle, y at the bottom) plus a single-panel
    figure for the derivative estimate."""
    out_dir = Path(out_dir)
    lines = [
        f"# closed-loop run: plant={traj.plant_name} mode={traj.mode} status={traj.status}",
        'set datafile separator ","',
        "set key autotitle columnhead",
        "set terminal pngcairo size 900,900",
        'csv = "trajectory.csv"',
    ]
    if traj.status != "completed":
        lines += [
            f"# run diverged at t={traj.divergence_time!r}: {traj.divergence_reason}",
            f"set xrange [0:{traj.t[-1]!r}]",
            f'set label 1 "diverged at t={traj.divergence_time!r}" at graph 0.5, 0.9 center',
        ]
    panels = [f"x{i}" for i in range(traj.n, 0, -1)][:2] + ["y"]
    lines += [
        'set output "states.png"',
        f"set multiplot layout {len(panels)},1",
        'set xlabel "t"',
    ]
    for name in panels:
        lines += [
            f'set ylabel "{name}"',
            f'plot csv using "t":"{name}" with lines notitle',
        ]
    lines += [
        "unset multiplot",
        "set terminal pngcairo size 900,450",
        'set output "estimate.png"',
        'set title "Estimate of the output ξ"',
        'set ylabel "ξ"',
        f'plot csv using "t":"xi" with lines notitle',
        "unset output",
    ]
    script = out_dir / "plots.gp"
    script.write_text("\n".join(lines) + "\n")
    return [script]


def run(config: ScenarioConfig) -> int:
    """Execute one scenario and write the selected outputs.

    Returns 0 when the run completed and 2 when it diverged; partial outputs
    are written either way.
    """
    plant, traj = _simulate(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = build_report(config, plant, traj)
    if "csv" in config.formats:
        write_trajectory_csv(traj, out_dir / "trajectory.csv")
    if "json" in config.formats:
        (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    if "gnuplot" in config.formats:
        emit_plots(traj, report, out_dir)
    return 0 if traj.status == "completed" else 2


# ---------------------------------------------------------------------------
# Sweep
# ---------------------------------------------------------------------------

def parse_override(text: str) -> tuple[str, list[str]]:
    """Parse 'section.key=v1,v2,...' into (path, raw value list)."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like section.key=v1,v2")
    path, _, values = text.partition("=")
    path = path.strip()
    if "." not in path:
        raise ConfigError(f"override field {path!r} must be section.key")
    section, _, key = path.partition(".")
    if section not in _SCHEMA or key not in _SCHEMA[section]:
        raise ConfigError(f"override field {path!r} is not a known config key")
    vals = [v.strip() for v in values.split(",") if v.strip()]
    if not vals:
        raise ConfigError(f"override {text!r} has no values")
    # list-valued keys take the whole right-hand side as a single value
    if _SCHEMA[section][key] in (_conv_float_list, _conv_str_list):
        vals = [values.strip()]
    return path, vals


def _apply_overrides(base_sections: dict, assignment: Sequence[tuple[str, str]],
                     source: str) -> ScenarioConfig:
    sections = {sec: dict(keys) for sec, keys in base_sections.items()}
    for path, raw in assignment:
        section, _, key = path.partition(".")
        sections.setdefault(section, {})[key] = raw
    return _build_config(sections, source)


def sweep(config: ScenarioConfig, overrides: Sequence[tuple[str, list[str]]],
          workers: int = 1, out_dir: Optional[str] = None) -> tuple[int, list[dict]]:
    """Run the Cartesian product of the overrides; one summary row per cell.

    Row order is lexicographic over the override value indices.  Per-cell
    failures are recorded in the row; the sweep succeeds if any cell ran.
    """
    paths = [path for path, _ in overrides]
    value_lists = [vals for _, vals in overrides]
    n_cells = 1
    for vals in value_lists:
        n_cells *= len(vals)
    if n_cells > SWEEP_CAP:
        raise ConfigError(f"sweep of {n_cells} cells exceeds the cap of {SWEEP_CAP}")
    base_sections = config_to_sections(config)
    combos = list(itertools.product(*value_lists)) if overrides else [()]

    metric_names = ("terminal_state_error", "terminal_input_error",
                    "terminal_cost_excess", "reduction_ratio",
                    "window_mean_cost_excess")

    def run_cell(combo) -> dict:
        row = {path: raw for path, raw in zip(paths, combo)}
        try:
            cell_cfg = _apply_overrides(base_sections, list(zip(paths, combo)),
                                        "<sweep cell>")
            plant, traj = _simulate(cell_cfg)
        except (ConfigError, ValueError) as exc:
            row["status"] = f"error: {exc}"
            row.update({name: math.nan for name in metric_names})
            return row
        row["status"] = traj.status
        optimum = resolve_optimum(plant, config)
        if traj.status == "completed" and optimum is not None:
            row.update(convergence_report(traj, optimum).to_dict())
        else:
            row.update({name: math.nan for name in metric_names})
        return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_cell, combos))
    else:
        rows = [run_cell(c) for c in combos]

    ran = any(not str(r["status"]).startswith("error") for r in rows)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text(format_sweep_rows(paths, metric_names, rows))
    return (0 if ran else 1), rows


def format_sweep_rows(paths, metric_names, rows) -> str:
    header = list(paths) + ["status"] + list(metric_names)
    out = [",".join(header)]
    for row in rows:
        cells = []
        for name in header:
            val = row[name]
            cells.append("%.17g" % val if isinstance(val, float) else str(val))
        out.append(",".join(cells))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    config = _load_with_flags(args)
    return run(config)


def _load_with_flags(args) -> ScenarioConfig:
    config = load_config(args.config)
    assignments = []
    if getattr(args, "mode", None):
        assignments.append(("run.mode", args.mode))
    if getattr(args, "stride", None):
        assignments.append(("integrator.record_stride", str(args.stride)))
    if assignments:
        config = _apply_overrides(config_to_sections(config), assignments,
                                  str(args.config))
    if getattr(args, "out", None):
        config = replace(config, out_dir=args.out)
    return config


def _cmd_sweep(args) -> int:
    config = _load_with_flags(args)
    overrides = [parse_override(s) for s in args.set or []]
    code, rows = sweep(config, overrides, workers=args.workers,
                       out_dir=config.out_dir)
    paths = [p for p, _ in overrides]
    metric_names = ("terminal_state_error", "terminal_input_error",
                    "terminal_cost_excess", "reduction_ratio",
                    "window_mean_cost_excess")
    sys.stdout.write(format_sweep_rows(paths, metric_names, rows))
    return code


def _cmd_compare(args) -> int:
    cfg_a = load_config(args.config_a)
    cfg_b = load_config(args.config_b)
    if args.mode:
        cfg_a = _apply_overrides(config_to_sections(cfg_a),
                                 [("run.mode", args.mode)], str(args.config_a))
        cfg_b = _apply_overrides(config_to_sections(cfg_b),
                                 [("run.mode", args.mode)], str(args.config_b))
    _, traj_a = _simulate(cfg_a)
    _, traj_b = _simulate(cfg_b)
    if traj_a.status != "completed" or traj_b.status != "completed":
        print("compare: at least one run diverged", file=sys.stderr)
        return 2
    signals = tuple(args.signals.split(",")) if args.signals else ("x", "u", "y")
    sup, rms = compare_trajectories(traj_a, traj_b, signals)
    print("signal,sup_error,rms_error")
    for name in sup:
        print(f"{name},{sup[name]:.17g},{rms[name]:.17g}")
    return 0


def _cmd_validate(args) -> int:
    config = load_config(args.config)
    plant = get_plant(config.plant_name)
    box = config.analysis_box or plant.ss_box
    if box is None:
        raise ConfigError(f"{args.config}: [analysis] box_lo/box_hi required for "
                          f"{config.plant_name}")
    optimum = resolve_optimum(plant, config)
    if optimum is None:
        raise ConfigError(
            f"{args.config}: plant has no known optimum; set [analysis] u_range")
    x_star, u_star, _ = optimum
    report = check_assumptions(plant, box, config.params.k,
                               samples=config.analysis_samples,
                               optimum=(x_star, u_star))
    print(f"plant: {plant.name}")
    print(f"samples: {report.n_samples}  box: {list(report.box)}")
    print(f"alpha_h_min: {report.alpha_h_min:.6g}")
    print(f"beta1: {report.beta1:.6g}  beta2: {report.beta2:.6g}")
    print(f"beta3: {report.beta3:.6g}  beta4: {report.beta4:.6g}")
    print(f"violations: {len(report.violations)}")
    for v in report.violations[:20]:
        print(f"  {v.kind} at x={[round(c, 6) for c in v.x]} value={v.value:.3e}")
    if len(report.violations) > 20:
        print(f"  ... {len(report.violations) - 20} more")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ptesc",
        description="Prescribed-time dual-mode extremum-seeking control simulator.",
        epilog="Exit codes: 0 completed, 1 usage/config error, 2 run diverged "
               "(partial outputs are still written).")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output directory (overrides [outputs] dir)")
        p.add_argument("--mode", choices=MODES, help="override [run] mode")
        p.add_argument("--stride", type=int, help="override [integrator] record_stride")

    p_run = sub.add_parser("run", help="integrate one scenario and write outputs")
    p_run.add_argument("config")
    common(p_run)
    p_run.set_defaults(fn=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="Cartesian parameter sweep")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--set", action="append", metavar="SEC.KEY=V1,V2",
                         help="override values for one key (repeatable)")
    p_sweep.add_argument("--workers", type=int, default=1)
    common(p_sweep)
    p_sweep.set_defaults(fn=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="diff two runs on the shared grid")
    p_cmp.add_argument("config_a")
    p_cmp.add_argument("config_b")
    p_cmp.add_argument("--mode", choices=MODES)
    p_cmp.add_argument("--signals", help="comma-separated signal names (default x,u,y)")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_val = sub.add_parser("validate", help="audit the plant's regularity bounds")
    p_val.add_argument("config")
    p_val.set_defaults(fn=_cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
