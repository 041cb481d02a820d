import numpy as np
import pytest
from scipy import integrate

from cascade_control.config import DomainKind, ReferenceSection, SimulationSection
from cascade_control.errors import BlowUpError
from cascade_control.simulation.builder import bump_state, nodes_per_lens, simulate_reference
from cascade_control.simulation.operators_utils import radial_laplacian
from cascade_control.simulation.schemas import ControlBundle, FieldState, Grid1D, LinearCoefficients
from cascade_control.simulation.solver_utils import (duality_gap, make_times, solve_adjoint, solve_forward_linearized,
                                                     solve_forward_semilinear)


# --- Helper Functions ---

def random_coefficients(times: np.ndarray, grid: Grid1D, rng: np.random.Generator) -> LinearCoefficients:
    shape = (times.size, grid.n_nodes)
    return LinearCoefficients(times=times, beta2=rng.uniform(0.0, 2.0, shape), gamma2=rng.uniform(0.0, 2.0, shape))


def random_bundle(times: np.ndarray, grid: Grid1D, k: int, rng: np.random.Generator) -> ControlBundle:
    masks = np.repeat((grid.nodes > 0.2).astype(float)[None, :], k, axis=0) * grid.interior
    ramp = np.sin(np.pi * (times - times[0]) / (times[-1] - times[0]))
    return ControlBundle(times=times, values=rng.standard_normal((times.size, k, grid.n_nodes)), masks=masks,
                         ramp=ramp, window=(float(times[0]), float(times[-1])))


class ModalReference:
    """
    Solution of the cascade on (0, 1) with gammabar = g(t) sin(pi x), g(0) = 0.

    betabar and alphabar live on the odd sine modes up to 9, integrated to
    round-off; ubar = (g' + pi^2 g) sin(pi x).
    """

    modes = np.arange(1, 10, 2)

    def __init__(self, T: float = 0.2, amplitude: float = 1.0):
        self.T, self.amplitude = T, amplitude
        self.lens_radius, self.rbar = 0.5, 1.0
        nodes, weights = np.polynomial.legendre.leggauss(64)
        self._x, self._w = 0.5 * (nodes + 1.0), 0.5 * weights
        self._sines = np.sin(np.pi * np.outer(self.modes, self._x))
        self._ode = integrate.solve_ivp(self._rhs, (0.0, T), np.zeros(2 * self.modes.size), method="DOP853",
                                        rtol=1e-12, atol=1e-14, dense_output=True)

    def g(self, t):
        return self.amplitude * np.sin(np.pi * t / self.T) ** 2

    def g_dot(self, t):
        return self.amplitude * np.pi / self.T * np.sin(2.0 * np.pi * t / self.T)

    def _project(self, values: np.ndarray) -> np.ndarray:
        return 2.0 * self._sines @ (self._w * values)

    def _rhs(self, t, y):
        k2 = (np.pi * self.modes) ** 2
        b, a = y[: self.modes.size], y[self.modes.size:]
        gamma = self.g(t) * np.sin(np.pi * self._x)
        beta = b @ self._sines
        return np.concatenate([-k2 * b + self._project(gamma ** 3), -k2 * a + self._project(beta ** 3)])

    def on_grid(self, grid: Grid1D, times: np.ndarray):
        coeffs = self._ode.sol(times)
        S = np.sin(np.pi * np.outer(self.modes, grid.nodes))
        first = np.sin(np.pi * grid.nodes)
        states = np.zeros((times.size, 3, grid.n_nodes))
        states[:, 0] = coeffs[self.modes.size:].T @ S
        states[:, 1] = coeffs[: self.modes.size].T @ S
        states[:, 2] = self.g(times)[:, None] * first[None, :]
        ubar = (self.g_dot(times) + np.pi ** 2 * self.g(times))[:, None] * first[None, :]
        return states, ubar

    def distance(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))


# --- Grids and operators ---

def test_radial_weights_positive(small_ball):
    """Every radial cell volume is positive and they add up to R^N / N."""
    w = small_ball.weights
    assert np.all(w > 0.0)
    assert w.sum() == pytest.approx(1.0 / 3.0, rel=1e-12)


def test_laplacian_of_constants_vanishes(small_ball, small_interval):
    """Constants are harmonic, including the axis row."""
    for grid in (small_ball, small_interval):
        lap = radial_laplacian(np.ones(grid.n_nodes), grid)
        assert lap[grid.interior] == pytest.approx(np.zeros(grid.interior.sum()), abs=1e-9)


def test_laplacian_of_r_squared_is_2N():
    """Delta |x|^2 = 2N holds exactly on radial grids."""
    for N in (1, 2, 3):
        grid = Grid1D.radial(1.0, 33, N)
        lap = radial_laplacian(grid.nodes ** 2, grid)
        assert lap[:-1] == pytest.approx(np.full(grid.n_nodes - 1, 2.0 * N), rel=1e-10)
        assert lap[-1] == 0.0


def test_laplacian_second_order_on_sine():
    """The error on sin(pi x) drops by about 4 when h halves."""
    errors = []
    for n in (33, 65):
        grid = Grid1D.interval(0.0, 1.0, n)
        x = grid.nodes
        lap = radial_laplacian(np.sin(np.pi * x), grid)
        errors.append(np.max(np.abs(lap[grid.interior] + np.pi ** 2 * np.sin(np.pi * x[grid.interior]))))
    assert errors[0] / errors[1] == pytest.approx(4.0, rel=0.05)


def test_make_times_step_bound():
    """The step never exceeds the requested dt and both ends are hit."""
    times = make_times(0.0, 1.0, 0.03)
    assert times[0] == 0.0 and times[-1] == 1.0
    assert np.max(np.diff(times)) <= 0.03 + 1e-15
    with pytest.raises(ValueError):
        make_times(1.0, 1.0, 0.1)


def test_nodes_per_lens(small_interval):
    """Lens radius in units of h."""
    assert nodes_per_lens(0.5, small_interval) == pytest.approx(10.0)


# --- Forward solves ---

def test_zero_state_stays_zero(small_ball):
    """Without forcing the zero state is a solution."""
    times = make_times(0.0, 0.1, 0.01)
    run = solve_forward_semilinear(small_ball, FieldState.zeros(small_ball), times)
    assert run.max_abs() == 0.0


def test_heat_decay_of_first_mode():
    """alpha = sin(pi x) decays like e^(-pi^2 t) when beta = gamma = 0."""
    grid = Grid1D.interval(0.0, 1.0, 201)
    x = grid.nodes
    y0 = FieldState(t=0.0, alpha=np.sin(np.pi * x), beta=np.zeros_like(x), gamma=np.zeros_like(x)).on_grid(grid)
    times = make_times(0.0, 0.1, 1e-3)
    final = solve_forward_semilinear(grid, y0, times, stride=times.size).final
    exact = np.exp(-np.pi ** 2 * 0.1) * np.sin(np.pi * x)
    assert np.max(np.abs(final.alpha - exact)) <= 1e-3 * np.max(np.abs(exact))
    assert np.all(final.beta == 0.0) and np.all(final.gamma == 0.0)


def test_dirichlet_nodes_stay_zero(small_interval, rng):
    """Dirichlet nodes carry exact zeros after every step."""
    times = make_times(0.0, 0.05, 0.005)
    y0 = FieldState.from_stack(0.0, rng.standard_normal((3, small_interval.n_nodes)) * 0.1)
    run = solve_forward_semilinear(small_interval, y0, times, keep_all=True)
    assert np.all(run.states[:, :, 0] == 0.0)
    assert np.all(run.states[:, :, -1] == 0.0)


def test_cascade_transfers_downwards(small_interval):
    """gamma feeds beta, which feeds alpha; nothing flows upwards."""
    gamma = bump_state(small_interval, 0.5, 0.3, amplitude=0.5).gamma
    zero = np.zeros_like(gamma)
    y0 = FieldState(t=0.0, alpha=zero, beta=zero, gamma=gamma)
    times = make_times(0.0, 0.05, 0.005)
    final = solve_forward_semilinear(small_interval, y0, times, stride=times.size).final
    assert np.max(final.beta) > 0.0
    assert np.max(final.alpha) > 0.0

    y0 = FieldState(t=0.0, alpha=gamma, beta=zero, gamma=zero)
    final = solve_forward_semilinear(small_interval, y0, times, stride=times.size).final
    assert np.all(final.beta == 0.0) and np.all(final.gamma == 0.0)


def test_blow_up_detected(small_interval):
    """Leaving the bound raises BlowUpError with the time attached."""
    y0 = bump_state(small_interval, 0.5, 0.3, amplitude=2.0)
    times = make_times(0.0, 0.05, 0.005)
    with pytest.raises(BlowUpError) as excinfo:
        solve_forward_semilinear(small_interval, y0, times, bound=1.0)
    assert excinfo.value.t == pytest.approx(times[1])


def test_linearized_zero_coefficients_decouple(small_ball, rng):
    """With zero coefficients a gamma control never reaches alpha or beta."""
    times = make_times(0.0, 0.05, 0.005)
    controls = random_bundle(times, small_ball, 1, rng)
    coeffs = LinearCoefficients.zeros(times, small_ball.n_nodes)
    final = solve_forward_linearized(small_ball, FieldState.zeros(small_ball), coeffs, controls,
                                     stride=times.size).final
    assert np.all(final.alpha == 0.0) and np.all(final.beta == 0.0)
    assert np.max(np.abs(final.gamma)) > 0.0


def test_background_source_matches_full_system(small_interval):
    """The perturbation system around (betabar, gammabar) = const reproduces the shifted full system."""
    times = make_times(0.0, 0.02, 0.002)
    y0 = bump_state(small_interval, 0.5, 0.3, amplitude=0.3)
    background = np.zeros((times.size, 2, small_interval.n_nodes))
    hat = solve_forward_semilinear(small_interval, y0, times, background=background, stride=times.size).final
    full = solve_forward_semilinear(small_interval, y0, times, stride=times.size).final
    assert hat.stack() == pytest.approx(full.stack(), abs=1e-14)


# --- Reference runs ---

def test_reference_run_is_second_order():
    """Forward solves driven by ubar approach a modal solution at the joint order of the scheme."""
    reference = ModalReference()
    section = ReferenceSection(kind=DomainKind.INTERVAL, x0=0.5, T=reference.T)
    report = simulate_reference(reference, section, SimulationSection(dt=4e-3), N=1, resolutions=[21, 41, 81])
    errors = [row.max_error for row in report.rows]
    assert errors[0] > errors[1] > errors[2]
    assert report.slope >= 1.8
    assert report.support_ok and report.passed


def test_modal_reference_starts_at_rest(small_interval):
    states, ubar = ModalReference().on_grid(small_interval, np.array([0.0]))
    assert np.max(np.abs(states)) <= 1e-14
    assert np.max(np.abs(ubar)) <= 1e-14


# --- Adjoint ---

@pytest.mark.parametrize("k", [1, 3])
def test_duality_gap(k, rng):
    """<y(T), phi> = <y0, p0> + sum dt <u, psi> to round-off."""
    for grid in (Grid1D.radial(1.0, 21, 3), Grid1D.interval(0.0, 1.0, 21)):
        times = make_times(0.0, 0.05, 0.001)
        coeffs = random_coefficients(times, grid, rng)
        y0 = FieldState.from_stack(0.0, rng.standard_normal((3, grid.n_nodes))).on_grid(grid)
        phi = rng.standard_normal((3, grid.n_nodes)) * grid.interior
        gap = duality_gap(grid, coeffs, y0, random_bundle(times, grid, k, rng), phi)
        assert gap <= 1e-10


def test_adjoint_without_template(small_ball, rng):
    """Without a template the control adjoint is zero and the initial adjoint still pairs with y0."""
    times = make_times(0.0, 0.02, 0.002)
    coeffs = random_coefficients(times, small_ball, rng)
    phi = rng.standard_normal((3, small_ball.n_nodes)) * small_ball.interior
    result = solve_adjoint(small_ball, phi, coeffs, keep_states=True)
    assert np.all(result.controls == 0.0)
    assert result.states.shape == (times.size, 3, small_ball.n_nodes)
    y0 = FieldState.from_stack(0.0, rng.standard_normal((3, small_ball.n_nodes))).on_grid(small_ball)
    forward = solve_forward_linearized(small_ball, y0, coeffs, stride=times.size)
    lhs = small_ball.inner(forward.final.stack(), phi)
    rhs = small_ball.inner(y0.stack(), result.initial)
    assert lhs == pytest.approx(rhs, rel=1e-10)


# --- Controls ---

def test_control_bundle_zeroed_off_window(small_interval):
    """Values outside the window or the masks are dropped."""
    times = make_times(0.0, 1.0, 0.1)
    masks = (small_interval.nodes < 0.5).astype(float)[None, :]
    bundle = ControlBundle(times=times, values=np.ones((times.size, 1, small_interval.n_nodes)), masks=masks,
                           ramp=np.ones(times.size), window=(0.2, 0.6))
    active = (times >= 0.2) & (times <= 0.6)
    assert np.all(bundle.values[~active] == 0.0)
    assert np.all(bundle.values[:, :, small_interval.nodes >= 0.5] == 0.0)
    assert bundle.forcing(4)[2, 0] == 1.0 and np.all(bundle.forcing(4)[:2] == 0.0)


def test_control_bundle_shape_checked(small_interval):
    """k must be 1 or 3 and values must match the masks."""
    times = make_times(0.0, 1.0, 0.1)
    with pytest.raises(ValueError):
        ControlBundle(times=times, values=np.zeros((times.size, 2, small_interval.n_nodes)),
                      masks=np.ones((2, small_interval.n_nodes)), ramp=np.ones(times.size), window=(0.0, 1.0))
