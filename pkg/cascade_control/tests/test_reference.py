import numpy as np
import pytest

from cascade_control.config import DomainKind
from cascade_control.errors import AdmissibilityError
from cascade_control.reference.builder import build_reference, reference_manifest
from cascade_control.reference.reference_utils import check_admissible, locate_coupling_window, verify_reference
from cascade_control.reference.schemas import ReferenceParams
from cascade_control.simulation.schemas import Grid1D
from cascade_control.spacetime.verify_utils import MIN_SLOPE


# --- Helper Functions ---

def ball_params(**overrides) -> ReferenceParams:
    values = {"kind": DomainKind.BALL, "rbar": 0.2, "T": 1.0, "omega_radius": 0.5}
    values.update(overrides)
    return ReferenceParams(**values)


def interval_params(**overrides) -> ReferenceParams:
    values = {"kind": DomainKind.INTERVAL, "x0": 0.5, "rbar": 0.2, "T": 1.0, "omega_lo": 0.2, "omega_hi": 0.8}
    values.update(overrides)
    return ReferenceParams(**values)


# --- Admissibility ---

def test_defaults_admissible():
    check_admissible(ball_params())
    check_admissible(interval_params())


def test_rbar_too_large_for_horizon():
    """rbar^2 >= T/2 leaves no room for the active interval."""
    with pytest.raises(AdmissibilityError) as excinfo:
        check_admissible(ball_params(rbar=0.8, T=1.0, omega_radius=0.9))
    assert excinfo.value.context["T"] == 1.0


def test_rbar_too_large_for_ball_omega():
    with pytest.raises(AdmissibilityError) as excinfo:
        check_admissible(ball_params(rbar=0.5, T=2.0))
    assert "omega_radius" in excinfo.value.context


def test_lens_outside_interval_omega():
    with pytest.raises(AdmissibilityError):
        check_admissible(interval_params(rbar=0.35))


def test_build_reference_refuses_inadmissible(fields):
    with pytest.raises(AdmissibilityError):
        build_reference(fields, ball_params(rbar=0.8, T=1.0, omega_radius=0.9))


def test_ball_must_be_centred():
    """x0 != 0 on a ball is a configuration error."""
    with pytest.raises(ValueError):
        ball_params(x0=0.1)


# --- Trajectory ---

def test_parabolic_scaling(reference, fields):
    """alphabar = rbar^8 a, betabar = rbar^2 b, gammabar = c at the scaled point."""
    rbar, T = reference.rbar, reference.T
    tau = np.array([-0.4, 0.0, 0.3])
    zeta = np.array([0.2, 0.5, 0.7]) * fields.epsilon
    t = 0.5 * T + rbar ** 2 * tau
    x = rbar * zeta
    a, b, c = fields.eval_abc(tau, zeta)
    alpha, beta, gamma = reference.abc(t, x)
    assert alpha == pytest.approx(rbar ** 8 * a, rel=1e-10, abs=0.0)
    assert beta == pytest.approx(rbar ** 2 * b, rel=1e-10, abs=0.0)
    assert gamma == pytest.approx(c, rel=1e-10, abs=0.0)


def test_reference_zero_outside_support(reference):
    """Nothing is switched on before T/2 - rbar^2, after T/2 + rbar^2 or beyond the lens."""
    t1, t2 = reference.active_interval
    x = np.linspace(0.0, 1.0, 41)
    for t in (0.0, t1, t2, reference.T):
        states = np.stack(reference.abc(np.full_like(x, t), x))
        assert not np.any(states)
        assert not np.any(reference.ubar(np.full_like(x, t), x))
    far = np.linspace(1.01 * reference.lens_radius, 1.0, 20)
    assert not np.any(np.stack(reference.abc(np.full_like(far, 0.5 * reference.T), far)))


def test_reference_on_grid_dirichlet(reference):
    grid = Grid1D.radial(1.0, 101, reference.N)
    times = np.linspace(0.0, reference.T, 11)
    states, u = reference.on_grid(grid, times)
    assert states.shape == (11, 3, 101) and u.shape == (11, 101)
    assert np.all(states[:, :, -1] == 0.0)
    assert np.all(states[0] == 0.0) and np.all(states[-1] == 0.0)


def test_verify_reference(reference):
    """Support checks hold and the residuals shrink at second order on three lens grids."""
    report = verify_reference(reference)
    assert report.checks["support"]
    assert report.checks["vanishes_at_0_and_T"]
    assert report.checks["beta_sign"]
    assert len(report.rows) == 3
    for coarse, fine in zip(report.rows, report.rows[1:]):
        assert fine.residual_alpha < coarse.residual_alpha
        assert fine.residual_beta < coarse.residual_beta
    assert min(report.slopes.values()) >= MIN_SLOPE
    assert report.checks["residual_slope"]


# --- Coupling window ---

def test_coupling_window_bounds(reference):
    """betabar and gammabar keep the reported margins on [t1, t2] x omega1."""
    window = locate_coupling_window(reference)
    t_lo, t_hi = reference.active_interval
    assert t_lo < window.t1 < 0.5 * reference.T < window.t2 < t_hi
    assert window.omega1[0] < window.omega2[0] < window.omega2[1] < window.omega1[1]
    assert window.mu_beta > 0.0 and window.mu_gamma > 0.0

    T, X = np.meshgrid(np.linspace(window.t1, window.t2, 11), np.linspace(*window.omega1, 11), indexing="ij")
    _, beta, gamma = reference.abc(T, X)
    assert np.min(np.abs(beta)) >= window.mu_beta * (1.0 - 1e-9)
    assert np.min(np.abs(gamma)) >= window.mu_gamma * (1.0 - 1e-9)


def test_reference_manifest(reference):
    window = locate_coupling_window(reference)
    manifest = reference_manifest(reference, window)
    assert manifest.t1 == window.t1 and manifest.t2 == window.t2
    assert manifest.margins == {"mu_beta": window.mu_beta, "mu_gamma": window.mu_gamma}
    assert reference_manifest(reference).coupling is None
