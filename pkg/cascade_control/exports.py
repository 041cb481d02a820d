"""
CSV / JSON writers and static plots of the run artifacts.

Numbers are written with repr() so identical runs give byte-identical files.
Plots never raise: a failure is logged and the run goes on.
"""
from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .audit.audit_utils import create_audit_log
from .audit.models import AuditAction, AuditCategory

logger = logging.getLogger(__name__)


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
            count += 1
    create_audit_log(AuditCategory.CLI, AuditAction.EXPORT, path.name, {"rows": count})
    return path


def write_json(path: Path, document: Dict[str, Any], config_hash: Optional[str] = None) -> Path:
    """JSON with the config hash and package version embedded."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"config_hash": config_hash, "version": __version__, **document}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default))
    create_audit_log(AuditCategory.CLI, AuditAction.EXPORT, path.name)
    return path


def _json_default(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if hasattr(value, "model_dump"):
        return value.model_dump(mode="json")
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


# ============================================================================
# TABLES
# ============================================================================

def profile_rows(profiles, samples: int = 2001):
    z = np.linspace(0.0, 1.0, samples)
    A, B, C, G = (f(z) for f in (profiles.A, profiles.B, profiles.C, profiles.G))
    return zip(z, A, B, C, G)


def lens_rows(fields, t_samples: int = 41, r_samples: int = 41):
    """(t, r, a, b, c) on a tensor grid of [-1, 1] x [0, eps]."""
    t = np.linspace(-1.0, 1.0, t_samples)
    r = np.linspace(0.0, fields.epsilon, r_samples)
    T, R = np.meshgrid(t, r, indexing="ij")
    a, b, c = fields.eval_abc(T, R)
    return zip(T.ravel(), R.ravel(), a.ravel(), b.ravel(), c.ravel())


def reference_rows(traj, t_samples: int = 41, x_samples: int = 41):
    """(t, |x - x0|, alphabar, betabar, gammabar, ubar) over the active interval and the lens."""
    t1, t2 = traj.active_interval
    t = np.linspace(t1, t2, t_samples)
    d = np.linspace(0.0, traj.lens_radius, x_samples)
    T, D = np.meshgrid(t, d, indexing="ij")
    X = D if traj.params.kind.value == "ball" else traj.x0 + D
    a, b, c = traj.abc(T, X)
    u = traj.ubar(T, X)
    return zip(T.ravel(), D.ravel(), a.ravel(), b.ravel(), c.ravel(), u.ravel())


def control_rows(times: np.ndarray, nodes: np.ndarray, control: np.ndarray, stride: int = 1):
    for k in range(0, times.size, stride):
        for j, x in enumerate(nodes):
            yield times[k], x, control[k, j]


# ============================================================================
# PLOTS
# ============================================================================

def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def safe_plot(fn):
    """Run a plotting function; log and swallow any failure."""
    def wrapper(*args, **kwargs) -> Optional[Path]:
        try:
            return fn(*args, **kwargs)
        except Exception as e:  # noqa: BLE001
            logger.warning("plot %s failed: %s", fn.__name__, e)
            return None
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@safe_plot
def plot_profiles(profiles, path: Path) -> Path:
    plt = _pyplot()
    z = np.linspace(0.0, 1.0, 1001)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.5))
    for ax, (name, f) in zip(axes, (("A", profiles.A), ("B", profiles.B), ("C", profiles.C))):
        ax.plot(z, f(z))
        ax.axhline(0.0, color="grey", lw=0.5)
        ax.set_title(name)
        ax.set_xlabel("z")
    for rho in profiles.rhos():
        axes[2].axvline(rho, color="red", lw=0.5, ls="--")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


@safe_plot
def plot_lens_support(fields, path: Path, samples: int = 201) -> Path:
    plt = _pyplot()
    t = np.linspace(-1.2, 1.2, samples)
    r = np.linspace(-1.2 * fields.epsilon, 1.2 * fields.epsilon, samples)
    T, R = np.meshgrid(t, r, indexing="ij")
    _, b, _ = fields.eval_abc(T, R)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.contourf(T, R, np.sign(b), levels=[-1.5, -0.5, 0.5, 1.5], cmap="coolwarm")
    ax.set_xlabel("t")
    ax.set_ylabel("r")
    ax.set_title(f"sign of b, eps = {fields.epsilon:g}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


@safe_plot
def plot_terminal_norms(rows, path: Path) -> Path:
    """Terminal norms of an eps_pen sweep (SweepRow list)."""
    plt = _pyplot()
    eps = [r.eps_pen for r in rows]
    norms = [r.terminal_norm for r in rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(eps, norms, "o-")
    ax.invert_xaxis()
    ax.set_xlabel("eps_pen")
    ax.set_ylabel("|y(t2)|")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


@safe_plot
def plot_control(times: np.ndarray, nodes: np.ndarray, control: np.ndarray, path: Path) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    mesh = ax.pcolormesh(nodes, times, control, shading="auto", cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("t")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
