import argparse
import json

import numpy as np
import pytest
import yaml

from cascade_control import __version__, exports, main as cli
from cascade_control.audit.audit_utils import AuditTrail, create_audit_log, log_control_event
from cascade_control.audit.models import AuditAction, AuditCategory
from cascade_control.config import (ControlMode, ExperimentConfig, config_from_dict, config_hash, dump_config,
                                    load_config)
from cascade_control.errors import AdmissibilityError, ConfigError
from cascade_control.simulation.builder import bump_state


# --- Helper Functions ---

def default_dict() -> dict:
    return ExperimentConfig.defaults().model_dump(mode="json")


def cli_args(**overrides) -> argparse.Namespace:
    values = {"resolution": None, "eps_pen": None, "out": None}
    values.update(overrides)
    return argparse.Namespace(**values)


# --- Configuration ---

def test_packaged_config_loads():
    """The shipped experiment file validates."""
    config = load_config()
    assert config.stationary.N == 3
    assert config.control.mode == ControlMode.THREE
    assert config.reference.rbar ** 2 < 0.5 * config.reference.T


def test_yaml_round_trip(default_config):
    """dump_config output reads back into an equal configuration."""
    assert config_from_dict(yaml.safe_load(dump_config(default_config))) == default_config


def test_missing_section_names_the_key():
    data = default_dict()
    del data["control"]
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict(data)
    assert "control" in excinfo.value.context["keys"]


def test_invalid_value_names_the_key():
    data = default_dict()
    data["simulation"]["dt"] = -1.0
    with pytest.raises(ConfigError) as excinfo:
        config_from_dict(data)
    assert "simulation.dt" in excinfo.value.context["keys"]


def test_unknown_key_rejected():
    data = default_dict()
    data["control"]["eps"] = 1.0
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_interval_requires_one_dimension():
    data = default_dict()
    data["reference"].update({"kind": "interval", "x0": 0.5})
    with pytest.raises(ConfigError):
        config_from_dict(data)
    data["stationary"]["N"] = 1
    assert config_from_dict(data).reference.kind.value == "interval"


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yml")
    path = tmp_path / "list.yml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_config_hash_stable_and_sensitive(default_config):
    assert config_hash(default_config) == config_hash(ExperimentConfig.defaults())
    changed = default_config.model_copy(update={
        "control": default_config.control.model_copy(update={"eps_pen": 1e-5})})
    assert config_hash(changed) != config_hash(default_config)


def test_output_dir_override(monkeypatch, tmp_path, default_config):
    monkeypatch.setenv("CASCADE_OUTPUT_DIR", str(tmp_path))
    assert default_config.output_dir() == tmp_path
    monkeypatch.setenv("CASCADE_OUTPUT_DIR", "")
    assert str(default_config.output_dir()) == default_config.output.directory


# --- Audit ---

def test_audit_trail_collects_failures(trail):
    create_audit_log(AuditCategory.STATIONARY, AuditAction.BUILD, "profiles", trail=trail)
    log_control_event(AuditAction.FAIL, "hum", {"eps_pen": 1e-6}, success=False,
                      error_message="no convergence", trail=trail)
    assert len(trail.records) == 2
    failures = trail.failures()
    assert len(failures) == 1
    assert failures[0].category == "control"
    assert failures[0].payload == {"eps_pen": 1e-6}


def test_audit_trail_dump(tmp_path):
    trail = AuditTrail(config_hash="abc")
    create_audit_log(AuditCategory.CLI, AuditAction.EXPORT, "x.csv", {"rows": 3}, trail=trail)
    document = json.loads(trail.dump(tmp_path / "audit" / "audit.json").read_text())
    assert document["config_hash"] == "abc"
    assert document["records"][0]["action"] == "export"
    assert document["records"][0]["payload"] == {"rows": 3}


# --- Exports ---

def test_write_csv_uses_repr(tmp_path):
    """Floats keep every digit so reruns are byte-identical."""
    path = exports.write_csv(tmp_path / "t.csv", ("z", "value"), [(0.1, np.float64(1.0 / 3.0)), (2, 7)])
    lines = path.read_text().splitlines()
    assert lines == ["z,value", "0.1,0.3333333333333333", "2,7"]


def test_write_json_embeds_hash_and_version(tmp_path):
    path = exports.write_json(tmp_path / "d.json", {"values": np.arange(3.0), "n": np.int64(4)}, "h")
    document = json.loads(path.read_text())
    assert document["config_hash"] == "h"
    assert document["version"] == __version__
    assert document["values"] == [0.0, 1.0, 2.0] and document["n"] == 4


def test_plot_failures_are_swallowed(tmp_path):
    """A broken plot input logs a warning and returns None."""
    assert exports.plot_terminal_norms([object()], tmp_path / "broken.png") is None
    assert not (tmp_path / "broken.png").exists()


# --- Command line ---

def test_float_list():
    assert cli._float_list("1e-2, 1e-4") == [1e-2, 1e-4]
    assert cli._float_list("1e-2,-1") == [1e-2, -1.0]
    for bad in ("", "a,b", ","):
        with pytest.raises(argparse.ArgumentTypeError):
            cli._float_list(bad)


def test_parser_rejects_unknown_command():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["nothing"])


def test_apply_overrides(default_config, tmp_path):
    config = cli.apply_overrides(default_config, cli_args(resolution=65, eps_pen=[1e-3], out=tmp_path))
    assert config.simulation.n_nodes == 65
    assert config.control.eps_pen_sweep == [1e-3]
    assert config.output.directory == str(tmp_path)
    assert cli.apply_overrides(default_config, cli_args()) is default_config


def test_apply_overrides_validates(default_config):
    """Overrides go through the field constraints of the file."""
    with pytest.raises(ConfigError):
        cli.apply_overrides(default_config, cli_args(resolution=2))
    with pytest.raises(ConfigError):
        cli.apply_overrides(default_config, cli_args(eps_pen=[1e-2, -1e-4]))


def test_invalid_overrides_exit_2(tmp_path):
    assert cli.main(["profiles", "--resolution", "2", "--out", str(tmp_path / "res")]) == 2
    assert cli.main(["profiles", "--eps-pen", "1e-2,-1e-4", "--out", str(tmp_path / "pen")]) == 2


def test_default_amplitude_is_unit():
    args = cli.build_parser().parse_args(["e2e"])
    assert args.amplitude == 1.0


def test_e2e_exports_sweep_before_steering(monkeypatch, tmp_path, small_interval, window, quiet_reference):
    """e2e writes the eps_pen sweep of its own initial data and records its checks."""
    data = default_dict()
    data["control"]["mode"] = "one"
    data["simulation"].update(n_nodes=small_interval.n_nodes, dt=1e-3)
    data["output"]["plots"] = False
    path = tmp_path / "small.yml"
    path.write_text(yaml.safe_dump(data))
    monkeypatch.setattr(cli, "cmd_reference", lambda ctx, args: None)
    monkeypatch.setattr(cli, "_reference", lambda ctx: quiet_reference)
    monkeypatch.setattr(cli, "_window", lambda ctx: window)
    monkeypatch.setattr(cli, "_grid", lambda ctx: small_interval)
    monkeypatch.setattr(cli, "_default_y0", lambda ctx, amplitude: bump_state(
        small_interval, 0.5, 0.25, amplitude=amplitude, weights=(0.0, 0.0, 1.0)))

    out = tmp_path / "e2e"
    assert cli.main(["e2e", "--config", str(path), "--out", str(out), "--amplitude", "0.04"]) == 0
    sweep = len(data["control"]["eps_pen_sweep"])
    assert len((out / "sweep_e2e.csv").read_text().strip().splitlines()) == 1 + sweep
    checks = json.loads((out / "checks.json").read_text())["checks"]
    assert checks["e2e.sweep_monotone"] and checks["e2e.terminal_norm"]
    steering = json.loads((out / "steering.json").read_text())
    assert steering["amplitude"] == 0.04
    assert len(steering["sweep"]["rows"]) == sweep


def test_exit_codes(monkeypatch, tmp_path):
    """0 when every check passes, 1 on a failed check, 2 on an error."""
    def passing(ctx, args):
        ctx.record("demo", {"ok": True})

    def failing(ctx, args):
        ctx.record("demo", {"ok": True, "bad": False})

    def raising(ctx, args):
        raise AdmissibilityError("rbar too large", {"rbar": 0.8})

    for name, command, expected in (("pass", passing, 0), ("fail", failing, 1), ("raise", raising, 2)):
        monkeypatch.setitem(cli.COMMANDS, "profiles", command)
        out = tmp_path / name
        assert cli.main(["profiles", "--out", str(out)]) == expected
        checks = json.loads((out / "checks.json").read_text())
        assert checks["passed"] == (expected == 0)
        assert (out / "audit.json").exists()


def test_bad_config_exits_2(tmp_path):
    path = tmp_path / "broken.yml"
    path.write_text("stationary: {N: 3}\n")
    assert cli.main(["profiles", "--config", str(path), "--out", str(tmp_path)]) == 2
