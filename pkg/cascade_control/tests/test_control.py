import numpy as np
import pytest

from cascade_control.config import ControlMode, ControlSection, SimulationSection
from cascade_control.control.actuators_utils import hum_template, region_indicator, time_ramp
from cascade_control.control.controllers import (ControllerFactory, OneControlController,
                                                 ThreeControlController)
from cascade_control.control.hum_utils import GramianOperator, conjugate_gradient, eps_pen_sweep, hum_penalized
from cascade_control.control.reduction_utils import (algebraic_reduce, hat_system_residual, homogeneity_scale,
                                                     homogeneity_unscale, homogeneous_size, linearized_zero_witness,
                                                     one_control_from_reduction, smooth_controls, window_indices)
from cascade_control.control.schemas import HUMConfig
from cascade_control.control.steering_utils import ReferenceHorizon, nonlinear_steer
from cascade_control.errors import AdmissibilityError, ConvergenceError
from cascade_control.reference.reference_utils import locate_coupling_window
from cascade_control.simulation.builder import bump_state
from cascade_control.simulation.schemas import ControlBundle, FieldState, Grid1D, LinearCoefficients
from cascade_control.simulation.solver_utils import make_times, solve_forward_semilinear


# --- Helper Functions ---

def hum_config(mode: ControlMode, eps_pen: float = 1e-3, times=None) -> HUMConfig:
    window = (0.0, 0.05) if times is None else (float(times[0]), float(times[-1]))
    return HUMConfig(eps_pen=eps_pen, cg_tol=1e-8, cg_maxiter=400, mode=mode, window=window)


def window_problem(grid, window, mode):
    times = make_times(window.t1, window.t2, 0.005)
    coeffs = LinearCoefficients.zeros(times, grid.n_nodes)
    template = hum_template(grid, times, window, mode)
    y1 = bump_state(grid, 0.5, 0.25, amplitude=0.1)
    return times, coeffs, template, y1


def spd_matrix(n: int, rng: np.random.Generator) -> np.ndarray:
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return Q @ np.diag(np.linspace(1.0, 10.0, n)) @ Q.T


def free_terminal(grid: Grid1D, y0: FieldState, T: float, dt: float) -> float:
    run = solve_forward_semilinear(grid, y0, make_times(0.0, T, dt), stride=10 ** 6)
    return max(run.final.component_norms())


# --- Conjugate gradients ---

def test_cg_solves_spd_system(rng):
    """CG reproduces a dense solve of a well-conditioned SPD system."""
    A = spd_matrix(12, rng)
    b = rng.standard_normal(12)
    x, history, its = conjugate_gradient(lambda v: A @ v, b, np.dot, tol=1e-12, maxiter=100)
    assert x == pytest.approx(np.linalg.solve(A, b), rel=1e-9, abs=1e-10)
    assert history[-1] <= 1e-12
    assert its <= 40


def test_cg_shift(rng):
    """The shift enters as A + shift I."""
    A = spd_matrix(8, rng)
    b = rng.standard_normal(8)
    x, _, _ = conjugate_gradient(lambda v: A @ v, b, np.dot, shift=0.5, tol=1e-12)
    assert x == pytest.approx(np.linalg.solve(A + 0.5 * np.eye(8), b), rel=1e-9, abs=1e-10)


def test_cg_reports_history_on_failure(rng):
    """Stopping at maxiter raises ConvergenceError carrying the residuals."""
    A = spd_matrix(10, rng)
    with pytest.raises(ConvergenceError) as excinfo:
        conjugate_gradient(lambda v: A @ v, rng.standard_normal(10), np.dot, tol=1e-14, maxiter=2)
    assert len(excinfo.value.history) == 3


def test_cg_zero_rhs():
    """A zero right-hand side returns 0 without iterating."""
    x, history, its = conjugate_gradient(lambda v: v, np.zeros(4), np.dot)
    assert its == 0 and np.all(x == 0.0)


# --- Actuators ---

def test_region_indicator_support(small_interval):
    """The indicator is 1 on the middle half of the region and 0 outside it."""
    ind = region_indicator(small_interval, (0.2, 0.8))
    x = small_interval.nodes
    assert np.all(ind[(x >= 0.36) & (x <= 0.64)] == 1.0)
    assert np.all(ind[(x < 0.19) | (x > 0.81)] == 0.0)


def test_time_ramp_vanishes_at_ends():
    times = np.linspace(0.0, 1.0, 41)
    ramp = time_ramp(times, (0.0, 1.0))
    assert ramp[0] == 0.0 and ramp[-1] == 0.0
    assert ramp[20] == 1.0


# --- HUM ---

def test_hum_zero_data_gives_zero_control(small_interval, window):
    """y1 = 0 needs no control."""
    times, coeffs, template, _ = window_problem(small_interval, window, ControlMode.ONE)
    result = hum_penalized(small_interval, FieldState.zeros(small_interval), coeffs,
                           hum_config(ControlMode.ONE, times=times), template)
    assert result.iterations == 0
    assert result.controls.sup_norm() == 0.0
    assert result.terminal_norm == 0.0


def test_gramian_symmetric(small_ball, window, rng):
    """<Lambda phi, psi> = <phi, Lambda psi> in the weighted inner product."""
    times = make_times(window.t1, window.t2, 0.005)
    shape = (times.size, small_ball.n_nodes)
    coeffs = LinearCoefficients(times=times, beta2=rng.uniform(0.0, 1.0, shape), gamma2=rng.uniform(0.0, 1.0, shape))
    gram = GramianOperator(small_ball, coeffs, hum_template(small_ball, times, window, ControlMode.ONE))
    phi = rng.standard_normal((3, small_ball.n_nodes)) * small_ball.interior
    psi = rng.standard_normal((3, small_ball.n_nodes)) * small_ball.interior
    lhs = small_ball.inner(gram(phi), psi)
    rhs = small_ball.inner(phi, gram(psi))
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-14)
    assert small_ball.inner(gram(phi), phi) >= 0.0


def test_hum_reduces_terminal_norm(small_interval, window):
    """Three-control HUM on a decoupled problem drives the state towards 0."""
    times, coeffs, template, y1 = window_problem(small_interval, window, ControlMode.THREE)
    result = hum_penalized(small_interval, y1, coeffs, hum_config(ControlMode.THREE, 1e-4, times), template)
    assert result.terminal_norm < 0.5 * result.free_norm
    assert result.controls.mode == ControlMode.THREE


def test_eps_pen_sweep_monotone(small_interval, window):
    """Smaller penalties never leave a larger terminal state."""
    times, coeffs, template, y1 = window_problem(small_interval, window, ControlMode.THREE)
    report = eps_pen_sweep(small_interval, y1, coeffs, hum_config(ControlMode.THREE, times=times), template,
                           [1e-1, 1e-2, 1e-3], workers=3)
    assert [row.eps_pen for row in report.rows] == [1e-1, 1e-2, 1e-3]
    assert report.monotone
    assert report.rows[-1].terminal_norm < report.free_norm


def test_eps_pen_sweep_empty_rejected(small_interval, window):
    times, coeffs, template, y1 = window_problem(small_interval, window, ControlMode.ONE)
    with pytest.raises(ValueError):
        eps_pen_sweep(small_interval, y1, coeffs, hum_config(ControlMode.ONE, times=times), template, [])


# --- Reduction ---

def test_reduction_of_zero_controls(small_interval, window):
    """Zero controls reduce to zero, whatever the reference values."""
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.THREE)
    zeros = np.zeros((times.size, small_interval.n_nodes))
    result = algebraic_reduce(template, zeros, zeros, small_interval, window)
    for field in (result.alpha, result.beta, result.gamma, result.u):
        assert np.all(field == 0.0)


def test_reduction_satisfies_its_equations(small_interval, window):
    """alpha~ = 0 and the three reduced equations hold on the window."""
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.THREE)
    shape = (times.size, 3, small_interval.n_nodes)
    x = small_interval.nodes
    values = np.broadcast_to(np.sin(np.pi * x)[None, None, :], shape) * np.array([1.0, 0.5, 0.25])[None, :, None]
    bundle = smooth_controls(template.with_values(values), small_interval, window, cutoff_k=0.05)
    ones = np.ones((times.size, small_interval.n_nodes))
    result = algebraic_reduce(bundle, ones, ones, small_interval, window)
    assert np.all(result.alpha == 0.0)
    scale = max(1.0, float(np.max(np.abs(result.u))))
    assert result.residuals["alpha"] <= 1e-12 * scale
    assert result.residuals["beta"] <= 1e-10 * scale
    assert result.residuals["gamma"] <= 1e-10 * scale


def test_reduction_refuses_small_coefficients(small_interval, window):
    """Dividing a nonzero control by a vanishing betabar is an admissibility error."""
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.THREE)
    bundle = smooth_controls(template.with_values(np.ones((times.size, 3, small_interval.n_nodes))),
                             small_interval, window, cutoff_k=0.05)
    zeros = np.zeros((times.size, small_interval.n_nodes))
    with pytest.raises(AdmissibilityError) as excinfo:
        algebraic_reduce(bundle, zeros, np.ones_like(zeros), small_interval, window)
    assert "t" in excinfo.value.context and "x" in excinfo.value.context


def test_smoothed_controls_vanish_at_t2_and_off_omega1(small_interval, window):
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.THREE)
    bundle = smooth_controls(template.with_values(np.ones((times.size, 3, small_interval.n_nodes))),
                             small_interval, window, cutoff_k=0.05)
    x = small_interval.nodes
    assert np.all(bundle.values[-1] == 0.0)
    assert np.all(bundle.values[:, :, (x < 0.19) | (x > 0.81)] == 0.0)


def test_one_control_is_minus_u(small_interval, window):
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.THREE)
    zeros = np.zeros((times.size, small_interval.n_nodes))
    reduction = algebraic_reduce(template, zeros, zeros, small_interval, window)
    reduction.u[:] = 1.0
    single = one_control_from_reduction(reduction, template, small_interval)
    assert single.mode == ControlMode.ONE
    assert np.all(single.values[:, 0, small_interval.interior] == -1.0)


def test_window_indices_too_short():
    times = np.linspace(0.0, 1.0, 11)
    assert window_indices(times, (0.2, 0.8)) == (2, 8)
    with pytest.raises(AdmissibilityError):
        window_indices(times, (0.4, 0.5))


# --- Homogeneity and the perturbation system ---

def test_homogeneity_round_trip(small_interval):
    """Scaling multiplies the homogeneous size by s and unscale inverts it."""
    y = bump_state(small_interval, 0.5, 0.3, amplitude=0.7, weights=(0.2, 0.5, 1.0))
    s = 0.3
    scaled = homogeneity_scale(y, s)
    assert homogeneous_size(scaled) == pytest.approx(s * homogeneous_size(y), rel=1e-12)
    assert homogeneity_unscale(scaled.stack(), s) == pytest.approx(y.stack(), rel=1e-12)
    with pytest.raises(ValueError):
        homogeneity_scale(y, 0.0)


def test_hat_residual_is_cubic_remainder(rng):
    """(b + x)^3 - b^3 - 3 b^2 x equals the reported remainder."""
    states = rng.standard_normal((4, 3, 7))
    background = rng.standard_normal((4, 2, 7))
    remainder = hat_system_residual(states, background)
    b, x = background[:, 0], states[:, 1]
    assert remainder[:, 0] == pytest.approx((b + x) ** 3 - b ** 3 - 3.0 * b * b * x, abs=1e-10)
    assert np.all(remainder[:, 2] == 0.0)


def test_linearized_zero_witness(small_interval, window, rng):
    """Two different gamma controls leave the same alpha(t2) around zero."""
    times = make_times(window.t1, window.t2, 0.005)
    template = hum_template(small_interval, times, window, ControlMode.ONE)
    first = template.with_values(rng.standard_normal(template.values.shape))
    second = template.with_values(rng.standard_normal(template.values.shape))
    y0 = bump_state(small_interval, 0.5, 0.3, amplitude=0.2)
    report = linearized_zero_witness(small_interval, y0, times, first, second)
    assert report.identical
    assert report.gamma_difference > 0.0


# --- Controllers ---

def test_controller_factory(small_interval, window):
    times = make_times(window.t1, window.t2, 0.005)
    background = np.ones((times.size, 2, small_interval.n_nodes))
    section = ControlSection(cg_tol=1e-8)
    three = ControllerFactory.get_controller(ControlMode.THREE, small_interval, background, times, window, section)
    one = ControllerFactory.get_controller(ControlMode.ONE, small_interval, background, times, window, section)
    assert isinstance(three, ThreeControlController) and isinstance(one, OneControlController)
    assert three.template.masks.shape[0] == 3 and one.template.masks.shape[0] == 1
    with pytest.raises(ValueError):
        ControllerFactory.get_controller("two", small_interval, background, times, window, section)


def test_controllers_return_one_control(small_interval, window):
    """Both strategies hand back a single gamma control on the window grid."""
    times = make_times(window.t1, window.t2, 0.005)
    background = np.ones((times.size, 2, small_interval.n_nodes))
    section = ControlSection(cg_tol=1e-8, eps_pen=1e-3)
    y1 = bump_state(small_interval, 0.5, 0.25, amplitude=0.05).stack()
    for mode in (ControlMode.THREE, ControlMode.ONE):
        controller = ControllerFactory.get_controller(mode, small_interval, background, times, window, section)
        bundle, iterations = controller.control(y1)
        assert isinstance(bundle, ControlBundle)
        assert bundle.mode == ControlMode.ONE
        assert bundle.values.shape == (times.size, 1, small_interval.n_nodes)
        assert iterations > 0


# --- Nonlinear steering ---

def test_reference_horizon_source(reference):
    """The source carries ubar everywhere and uhat on the window only, divided by the scale."""
    window = locate_coupling_window(reference)
    grid = Grid1D.radial(1.0, 65, reference.N)
    horizon = ReferenceHorizon(reference, grid, window, 1e-3)
    assert horizon.window_times[0] == horizon.times[horizon.i1]
    assert horizon.background.shape == (horizon.window_times.size, 2, grid.n_nodes)

    uhat = np.ones((horizon.window_times.size, grid.n_nodes))
    source = horizon.source(uhat, scale=0.5)
    assert np.all(source[:, :2] == 0.0)
    expected = horizon.ubar.copy()
    expected[horizon.i1:horizon.i2 + 1] += 1.0
    assert source[:, 2] == pytest.approx(2.0 * expected, rel=1e-15, abs=0.0)


def test_steering_without_admissible_scale(reference):
    """An empty scale path is reported as a convergence failure."""
    window = locate_coupling_window(reference)
    grid = Grid1D.radial(1.0, 33, reference.N)
    section = ControlSection(s_initial=0.5, s_min=1.0)
    y0 = bump_state(grid, 0.0, 0.5, amplitude=0.1)
    with pytest.raises(ConvergenceError) as excinfo:
        nonlinear_steer(grid, y0, reference, window, section, SimulationSection(n_nodes=33, dt=1e-3))
    assert excinfo.value.context["s_path"] == []


def test_steering_reaches_outer_tolerance(small_interval, window, quiet_reference):
    """Reduced-resolution steering of a gamma bump ends below outer_tol."""
    section = ControlSection(mode=ControlMode.ONE, eps_pen=1e-6, outer_tol=1e-3)
    simulation = SimulationSection(n_nodes=small_interval.n_nodes, dt=1e-3)
    y0 = bump_state(small_interval, 0.5, 0.25, amplitude=0.04, weights=(0.0, 0.0, 1.0))
    assert free_terminal(small_interval, y0, window.t2, simulation.dt) > section.outer_tol

    result = nonlinear_steer(small_interval, y0, quiet_reference, window, section, simulation)
    assert result.s == 1.0
    assert result.s_path[-1].converged
    assert result.terminal_norm <= section.outer_tol
    assert result.mode == ControlMode.ONE


def test_outer_iteration_feeds_back_terminal_defect(small_interval, window, quiet_reference):
    """With a loose penalty the terminal norm contracts over the outer iterations."""
    section = ControlSection(mode=ControlMode.ONE, eps_pen=1e-4, outer_tol=1e-6, outer_maxiter=20)
    simulation = SimulationSection(n_nodes=small_interval.n_nodes, dt=1e-3)
    y0 = bump_state(small_interval, 0.5, 0.25, amplitude=0.01, weights=(0.0, 0.0, 1.0))

    result = nonlinear_steer(small_interval, y0, quiet_reference, window, section, simulation)
    steps = result.s_path[-1].steps
    norms = [step.terminal_norm for step in steps]
    assert len(steps) >= 2
    assert all(later < earlier for earlier, later in zip(norms, norms[1:]))
    assert norms[-1] <= section.outer_tol
    # the first pass aims at 0, later passes at minus the accumulated defect
    assert steps[0].target_norm == 0.0
    assert steps[1].target_norm == pytest.approx(norms[0], rel=1e-12)


def test_hum_target_shifts_terminal_state(small_interval, window):
    """Aiming at a target t leaves y(t2) near t instead of near 0."""
    times, coeffs, template, y1 = window_problem(small_interval, window, ControlMode.THREE)
    config = hum_config(ControlMode.THREE, 1e-6, times)
    target = 0.2 * bump_state(small_interval, 0.5, 0.25, amplitude=0.1).stack()
    aimed = hum_penalized(small_interval, y1, coeffs, config, template, target=target)
    gram = GramianOperator(small_interval, coeffs, template)
    terminal = gram.terminal(y1, aimed.controls, None)
    assert small_interval.norm(terminal - target) < 0.5 * small_interval.norm(target)
