"""
Command-line entry point.

Each subcommand builds what it needs from the configuration, runs the
verifications, writes CSV / JSON / PNG artifacts under the output directory
and exits 0 only if every check passed.
"""
from __future__ import annotations

from dotenv import load_dotenv

load_dotenv()

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from . import exports
from .audit.audit_utils import create_audit_log, get_default_trail
from .audit.models import AuditAction, AuditCategory
from .config import (ControlMode, DomainKind, ExperimentConfig, RuntimeSettings, config_from_dict, config_hash,
                     load_config)
from .control.actuators_utils import hum_template
from .control.hum_utils import eps_pen_sweep, hum_penalized
from .control.reduction_utils import linearized_zero_witness
from .control.schemas import HUMConfig, SweepReport
from .control.steering_utils import ReferenceHorizon, initial_scale, nonlinear_steer
from .errors import CascadeError
from .reference.builder import build_reference, reference_manifest
from .reference.reference_utils import locate_coupling_window, verify_reference
from .reference.schemas import ReferenceParams
from .simulation.builder import build_grid, bump_state, nodes_per_lens, simulate_reference
from .simulation.schemas import ControlBundle, FieldState, LinearCoefficients
from .spacetime.builder import build_abc_fields
from .spacetime.schemas import SpacetimeParams
from .spacetime.verify_utils import MIN_SLOPE, verify_field_residuals
from .stationary.builder import build_stationary_profiles
from .stationary.schemas import StationaryParams
from .stationary.verify_utils import verify_stationary

logger = logging.getLogger(__name__)


class RunContext:
    """Configuration, output directory and the outcome of the checks of one run."""

    def __init__(self, config: ExperimentConfig, out: Path):
        self.config = config
        self.out = out
        self.hash = config_hash(config)
        self.checks: Dict[str, bool] = {}
        self._cache: Dict[str, object] = {}

    def record(self, prefix: str, checks: Dict[str, bool]) -> None:
        for key, ok in checks.items():
            self.checks[f"{prefix}.{key}"] = bool(ok)

    def cached(self, key: str, build: Callable[[], object]):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> List[str]:
        return [k for k, ok in self.checks.items() if not ok]

    def path(self, name: str) -> Path:
        return self.out / name


# ============================================================================
# SHARED BUILDS
# ============================================================================

def _profiles(ctx: RunContext):
    return ctx.cached("profiles", lambda: build_stationary_profiles(
        StationaryParams.from_section(ctx.config.stationary)))


def _fields(ctx: RunContext):
    return ctx.cached("fields", lambda: build_abc_fields(
        _profiles(ctx), SpacetimeParams.from_section(ctx.config.spacetime)))


def _reference(ctx: RunContext):
    fields, _ = _fields(ctx)
    return ctx.cached("reference", lambda: build_reference(
        fields, ReferenceParams.from_section(ctx.config.reference)))


def _window(ctx: RunContext):
    return ctx.cached("window", lambda: locate_coupling_window(_reference(ctx)))


def _grid(ctx: RunContext):
    cfg = ctx.config
    return ctx.cached("grid", lambda: build_grid(cfg.reference, cfg.simulation.n_nodes, cfg.stationary.N))


def _default_y0(ctx: RunContext, amplitude: float) -> FieldState:
    """Flat bump in the middle of the domain (around the axis on a ball)."""
    ref = ctx.config.reference
    grid = _grid(ctx)
    if ref.kind == DomainKind.BALL:
        return bump_state(grid, 0.0, 0.5 * ref.radius, amplitude)
    return bump_state(grid, 0.5 * (ref.x_lo + ref.x_hi), 0.25 * (ref.x_hi - ref.x_lo), amplitude)


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_profiles(ctx: RunContext, args: argparse.Namespace) -> None:
    profiles = _profiles(ctx)
    report = verify_stationary(profiles, config_hash=ctx.hash)
    ctx.record("stationary", report.checks)
    exports.write_csv(ctx.path("profiles.csv"), ("z", "A", "B", "C", "G"), exports.profile_rows(profiles))
    exports.write_json(ctx.path("stationary.json"), {
        "profiles": profiles.summary(), "report": report.model_dump(mode="json"),
    }, ctx.hash)
    if ctx.config.output.plots:
        exports.plot_profiles(profiles, ctx.path("profiles.png"))
    if not report.passed:
        logger.error("stationary checks failed: %s", ", ".join(report.failed_checks()))


def cmd_spacetime(ctx: RunContext, args: argparse.Namespace) -> None:
    fields, manifest = _fields(ctx)
    residuals = verify_field_residuals(fields)
    ctx.record("spacetime", manifest.checks)
    ctx.checks["spacetime.residual_slope"] = bool(residuals.slopes) and min(residuals.slopes.values()) >= MIN_SLOPE
    for report in manifest.triple_zero or []:
        ctx.checks[f"spacetime.triple_zero.{report.center:.6f}"] = report.passed
    exports.write_csv(ctx.path("spacetime.csv"), ("t", "r", "a", "b", "c"), exports.lens_rows(fields))
    exports.write_json(ctx.path("spacetime.json"), {
        "manifest": manifest.model_dump(mode="json"), "residuals": residuals.model_dump(mode="json"),
    }, ctx.hash)
    if ctx.config.output.plots:
        exports.plot_lens_support(fields, ctx.path("lens_support.png"))


def cmd_reference(ctx: RunContext, args: argparse.Namespace) -> None:
    traj = _reference(ctx)
    report = verify_reference(traj)
    ctx.record("reference", report.checks)
    window = _window(ctx)
    exports.write_csv(ctx.path("reference.csv"), ("t", "distance", "alpha", "beta", "gamma", "ubar"),
                      exports.reference_rows(traj))
    exports.write_json(ctx.path("reference.json"), {
        "manifest": reference_manifest(traj, window).model_dump(mode="json"),
        "report": report.model_dump(mode="json"),
    }, ctx.hash)


def cmd_simulate(ctx: RunContext, args: argparse.Namespace) -> None:
    cfg = ctx.config
    traj = _reference(ctx)
    n = cfg.simulation.n_nodes
    report = simulate_reference(traj, cfg.reference, cfg.simulation, cfg.stationary.N,
                                resolutions=[n, 2 * n - 1])
    ctx.checks["simulation.support"] = report.support_ok
    ctx.checks["simulation.order"] = report.passed
    exports.write_csv(ctx.path("simulation.csv"), ("n_nodes", "h", "dt", "max_error", "nodes_per_lens"),
                      ((r.n_nodes, r.h, r.dt, r.max_error, r.nodes_per_lens) for r in report.rows))
    exports.write_json(ctx.path("simulation.json"), {"report": report.model_dump(mode="json")}, ctx.hash)


def _window_coefficients(horizon: ReferenceHorizon) -> LinearCoefficients:
    return LinearCoefficients.from_reference(horizon.window_times, horizon.background[:, 0], horizon.background[:, 1])


def _run_sweep(ctx: RunContext, grid, horizon: ReferenceHorizon, window, mode: ControlMode, y1: FieldState,
               stem: str) -> SweepReport:
    """Penalized HUM over the configured eps_pen sweep; writes <stem>.csv and <stem>.png."""
    cfg = ctx.config
    times = horizon.window_times
    config = HUMConfig.from_section(cfg.control, (float(times[0]), float(times[-1])), mode=mode)
    template = hum_template(grid, times, window, mode)
    sweep = cfg.control.eps_pen_sweep
    report = eps_pen_sweep(grid, y1, _window_coefficients(horizon), config, template, sweep, workers=len(sweep))
    exports.write_csv(ctx.path(f"{stem}.csv"), ("eps_pen", "terminal_norm", "iterations", "energy"),
                      ((r.eps_pen, r.terminal_norm, r.iterations, r.energy) for r in report.rows))
    if cfg.output.plots:
        exports.plot_terminal_norms(report.rows, ctx.path(f"{stem}.png"))
    return report


def cmd_control(ctx: RunContext, args: argparse.Namespace) -> None:
    """eps_pen sweeps of the linearized problem on the coupling window in both modes, and the witness."""
    cfg = ctx.config
    traj, window, grid = _reference(ctx), _window(ctx), _grid(ctx)
    nodes_per_lens(traj.lens_radius, grid)
    horizon = ReferenceHorizon(traj, grid, window, cfg.simulation.dt)
    times = horizon.window_times
    coeffs = _window_coefficients(horizon)
    y1 = _default_y0(ctx, args.amplitude).model_copy(update={"t": float(times[0])})

    document = {"window": window.model_dump(mode="json"), "sweeps": {}}
    for mode in (ControlMode.THREE, ControlMode.ONE):
        report = _run_sweep(ctx, grid, horizon, window, mode, y1, f"sweep_{mode.value}")
        ctx.checks[f"control.{mode.value}.monotone"] = report.monotone
        document["sweeps"][mode.value] = report.model_dump(mode="json")

    # around zero the gamma control never reaches alpha
    config = HUMConfig.from_section(cfg.control, (float(times[0]), float(times[-1])), mode=ControlMode.ONE)
    template = hum_template(grid, times, window, ControlMode.ONE)
    hum = hum_penalized(grid, y1, coeffs, config, template)
    other = ControlBundle.zeros(times, template.masks, template.ramp, template.window)
    witness = linearized_zero_witness(grid, y1, times, hum.controls, other)
    ctx.checks["control.witness_alpha_identical"] = witness.identical
    document["witness"] = {"identical": witness.identical, "gamma_difference": witness.gamma_difference}
    exports.write_json(ctx.path("control.json"), document, ctx.hash)


def cmd_e2e(ctx: RunContext, args: argparse.Namespace) -> None:
    cfg = ctx.config
    cmd_reference(ctx, args)
    traj, window, grid = _reference(ctx), _window(ctx), _grid(ctx)
    nodes_per_lens(traj.lens_radius, grid)
    y0 = _default_y0(ctx, args.amplitude)

    # linearized sweep from the scaled data at t1, before the nonlinear run
    horizon = ReferenceHorizon(traj, grid, window, cfg.simulation.dt)
    y1 = horizon.window_start(y0, initial_scale(y0, cfg.control), grid, cfg.simulation.blowup_bound)
    sweep = _run_sweep(ctx, grid, horizon, window, cfg.control.mode,
                       FieldState.from_stack(float(horizon.window_times[0]), y1), "sweep_e2e")
    ctx.checks["e2e.sweep_monotone"] = sweep.monotone

    result = nonlinear_steer(grid, y0, traj, window, cfg.control, cfg.simulation)
    ctx.checks["e2e.terminal_norm"] = result.terminal_norm <= cfg.control.outer_tol
    stride = cfg.simulation.snapshot_stride
    exports.write_csv(ctx.path("control.csv"), ("t", "x", "u"),
                      exports.control_rows(result.times, grid.nodes, result.control, stride))
    exports.write_csv(ctx.path("s_path.csv"), ("s", "converged", "outer_iterations", "last_terminal_norm"),
                      ((a.s, a.converged, len(a.steps), a.steps[-1].terminal_norm if a.steps else np.nan)
                       for a in result.s_path))
    exports.write_json(ctx.path("steering.json"), {
        **result.manifest(),
        "control_energy": float(np.sum(result.control ** 2 * grid.weights[None, :])
                                * (result.times[1] - result.times[0])),
        "amplitude": args.amplitude,
        "sweep": sweep.model_dump(mode="json"),
    }, ctx.hash)
    if cfg.output.plots:
        exports.plot_control(result.times, grid.nodes, result.control, ctx.path("control.png"))


COMMANDS = {
    "profiles": cmd_profiles,
    "spacetime": cmd_spacetime,
    "reference": cmd_reference,
    "simulate": cmd_simulate,
    "control": cmd_control,
    "e2e": cmd_e2e,
}


# ============================================================================
# ARGUMENTS
# ============================================================================

def _float_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"not a comma separated list of numbers: {text}") from e
    if not values:
        raise argparse.ArgumentTypeError("empty eps_pen list")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cascade_control",
                                     description="Null control of a cubic cascade of heat equations")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", type=Path, default=None, help="YAML experiment file")
    parser.add_argument("--out", type=Path, default=None, help="Output directory")
    parser.add_argument("--resolution", type=int, default=None, help="Grid nodes of the simulator")
    parser.add_argument("--eps-pen", type=_float_list, default=None, help="Comma separated eps_pen sweep")
    parser.add_argument("--amplitude", type=float, default=1.0, help="Peak of the bump initial data")
    return parser


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """
    Command-line values on top of the file, validated like the file itself.

    Raises:
        ConfigError: an override violates a field constraint
    """
    data = config.model_dump(mode="json")
    changed = False
    if args.resolution is not None:
        data["simulation"]["n_nodes"] = args.resolution
        changed = True
    if args.eps_pen is not None:
        data["control"]["eps_pen_sweep"] = list(args.eps_pen)
        changed = True
    if args.out is not None:
        data["output"]["directory"] = str(args.out)
        changed = True
    return config_from_dict(data) if changed else config


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=RuntimeSettings.LOG_LEVEL.upper(),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    trail = get_default_trail()
    try:
        config = apply_overrides(load_config(args.config), args)
    except CascadeError as e:
        logger.error("%s", e)
        return 2

    out = Path(args.out) if args.out is not None else config.output_dir()
    ctx = RunContext(config, out)
    trail.config_hash = ctx.hash
    logger.info("running %s (config %s) -> %s", args.command, ctx.hash[:12], out)

    status = 0
    try:
        COMMANDS[args.command](ctx, args)
    except CascadeError as e:
        create_audit_log(AuditCategory.CLI, AuditAction.FAIL, args.command, e.context,
                         success=False, error_message=str(e))
        logger.error("%s failed: %s", args.command, e)
        status = 2
    if status == 0 and not ctx.passed:
        logger.error("failed checks: %s", ", ".join(ctx.failed()))
        status = 1
    exports.write_json(ctx.path("checks.json"), {"command": args.command, "checks": ctx.checks,
                                                 "passed": status == 0}, ctx.hash)
    trail.dump(ctx.path("audit.json"))
    return status


if __name__ == "__main__":
    sys.exit(main())
