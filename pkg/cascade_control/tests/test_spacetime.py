import numpy as np
import pytest

from cascade_control.errors import AdmissibilityError
from cascade_control.spacetime.schemas import Window, WindowCase
from cascade_control.spacetime.verify_utils import (FD_STEP, MIN_SLOPE, RESIDUAL_STEPS, clear_of_windows,
                                                    clear_samples, fd_step, pair_slope, time_grid,
                                                    verify_field_residuals, verify_triple_zero, window_checks)
from cascade_control.spacetime.weights_utils import (TimeWeights, build_jet_bumps, check_disjoint,
                                                     window_half_widths)


# --- Helper Functions ---

def generic_indices(fields):
    return [i for i, w in enumerate(fields.windows) if w.case == WindowCase.GENERIC]


# --- Time weights ---

def test_time_weights_vanish_at_the_rim():
    """lambda and f0 are zero for |t| >= 1."""
    t = np.array([-1.5, -1.0, 1.0, 2.0])
    assert np.all(TimeWeights.lam(t) == 0.0)
    assert np.all(TimeWeights.f0(t) == 0.0)
    assert TimeWeights.f0(0.0) == pytest.approx(np.exp(-1.0))
    assert TimeWeights.lam(0.5) == pytest.approx(0.5625)


def test_time_jets_match_closed_forms():
    """The t-jets agree with lambda, lambda' and f0'/f0."""
    t = np.array([-0.6, 0.0, 0.3])
    tj = TimeWeights.jets(t, 2)
    assert tj.lam.value == pytest.approx(TimeWeights.lam(t), rel=1e-14)
    assert tj.lam_dot.value == pytest.approx(TimeWeights.lam_dot(t), abs=1e-14)
    assert tj.ell.value == pytest.approx(TimeWeights.ell(t), abs=1e-14)
    assert tj.lam.partial(1, 0) == pytest.approx(TimeWeights.lam_dot(t), abs=1e-13)


def test_f0_jet_derivative():
    """d/dt f0 = ell f0."""
    t = np.array([-0.4, 0.2, 0.7])
    jet = TimeWeights.f0_jet(t, 1)
    assert jet.partial(1, 0) == pytest.approx(TimeWeights.ell(t) * TimeWeights.f0(t), rel=1e-12)


def test_time_grid_avoids_flat_rims():
    t = time_grid(50)
    assert np.all(TimeWeights.safe(t))
    assert t.size > 40


# --- Bumps ---

def test_generic_bumps_jet_conditions():
    """At rho the k-th bump has its first nonzero derivative of order 3 + k, equal to 1."""
    bumps = build_jet_bumps(0.3, 0.05, WindowCase.GENERIC)
    jets = bumps.jets(np.array([0.3]), 6)
    for g, p in zip(jets, (4, 5, 6)):
        derivatives = g.z_derivatives()[:, 0]
        assert derivatives[:p] == pytest.approx(np.zeros(p), abs=1e-12)
        assert derivatives[p] == pytest.approx(1.0, rel=1e-10)


def test_axis_bumps_radial_laplacian():
    """g'' + (N-1)/z g' = z^(2k-2) on the plateau of the axis window."""
    N = 3
    bumps = build_jet_bumps(0.0, 0.2, WindowCase.AXIS, N)
    z = np.array([0.01, 0.04, 0.08])
    for k, g in enumerate(bumps.jets(z, 2), start=1):
        lap = g.partial(0, 2) + (N - 1) / z * g.partial(0, 1)
        assert lap == pytest.approx(z ** (2 * k - 2), rel=1e-10)


def test_bumps_vanish_outside_window():
    bumps = build_jet_bumps(0.5, 0.1, WindowCase.HALF)
    assert np.all(bumps.values(np.array([0.3, 0.39, 0.61, 0.8])) == 0.0)


@pytest.mark.parametrize("rho, delta, case", [
    (0.05, 0.1, WindowCase.GENERIC),
    (0.95, 0.1, WindowCase.GENERIC),
    (0.3, 0.0, WindowCase.GENERIC),
    (0.1, 0.05, WindowCase.AXIS),
])
def test_bumps_rejected_outside_unit_interval(rho, delta, case):
    """Windows that leave (0, 1), or axis windows off 0, are refused."""
    with pytest.raises(AdmissibilityError):
        build_jet_bumps(rho, delta, case)


# --- Window layout ---

def test_window_half_widths():
    """Each half-width is a fraction of the distance to the nearest centre or to 1."""
    widths = window_half_widths([0.0, 0.5, 0.7], 0.5)
    assert widths == pytest.approx([0.25, 0.1, 0.1])
    with pytest.raises(AdmissibilityError):
        window_half_widths([0.0, 0.5, 0.5], 0.5)


def test_overlapping_windows_rejected():
    left = Window(center=0.3, half_width=0.1, case=WindowCase.GENERIC, m_sign=1.0, c_sign=1.0)
    right = Window(center=0.35, half_width=0.1, case=WindowCase.GENERIC, m_sign=1.0, c_sign=1.0)
    with pytest.raises(AdmissibilityError):
        check_disjoint([left, right])


def test_layout_of_built_fields(fields, profiles):
    """Axis window, the window at 1/2 and one per zero of C, pairwise disjoint."""
    cases = [w.case for w in fields.windows]
    assert cases[:2] == [WindowCase.AXIS, WindowCase.HALF]
    assert len(generic_indices(fields)) == len(profiles.rho_list)
    check_disjoint(fields.windows)


# --- Built fields ---

def test_epsilon_chosen_from_candidates(fields_and_manifest, default_config):
    fields, manifest = fields_and_manifest
    assert fields.epsilon in default_config.spacetime.epsilon_candidates
    assert all(manifest.checks.values())


def test_triple_zero_at_generic_windows(fields):
    """nu vanishes to third order at every zero of C."""
    for index in generic_indices(fields):
        report = verify_triple_zero(fields, index)
        assert report.passed
        assert report.fd_mismatch <= 1e-3


def test_triple_zero_refuses_other_windows(fields):
    with pytest.raises(ValueError):
        verify_triple_zero(fields, 0)


def test_cube_identity(fields):
    """nuhat = (z - rho)^3 phi~ near each zero of C."""
    t = np.array([-0.5, 0.0, 0.4])
    for index in generic_indices(fields):
        w = fields.windows[index]
        z = w.center + np.array([-0.3, -0.1, 0.15, 0.3]) * w.half_width
        T, Z = np.meshgrid(t, z, indexing="ij")
        assert fields.cube_identity_error(index, T.ravel(), Z.ravel()) <= 1e-6


def test_fields_even_and_supported_in_lens(fields):
    """(a, b, c) are even in r and exactly zero outside the lens."""
    t = np.array([-0.5, 0.0, 0.5])
    r = 0.4 * fields.epsilon * TimeWeights.lam(t)
    plus, minus = fields.eval_abc(t, r), fields.eval_abc(t, -r)
    for p, m in zip(plus, minus):
        assert np.array_equal(p, m)
    outside = fields.eval_abc(t, 1.2 * fields.epsilon * TimeWeights.lam(t))
    assert all(np.all(f == 0.0) for f in outside)
    beyond = fields.eval_abc(np.array([-1.0, 1.0, 1.5]), np.zeros(3))
    assert all(np.all(f == 0.0) for f in beyond)


def test_field_residuals_converge(fields):
    """a_t - Delta a = b^3 and b_t - Delta b = c^3 up to a stencil error of second order."""
    report = verify_field_residuals(fields)
    assert report.outside_max == 0.0
    assert [row.h for row in report.rows] == list(RESIDUAL_STEPS)
    assert len(report.rows) == 3
    assert min(report.slopes.values()) >= MIN_SLOPE
    assert report.rows[-1].residual_a <= 1e-3
    assert report.rows[-1].residual_b <= 1e-3


def test_residual_samples_clear_of_windows(fields):
    clearance = 0.01
    z = clear_samples(fields, clearance)
    assert z.size > 0
    for w in fields.windows:
        assert np.all(np.abs(z - w.center) >= w.half_width + clearance)
    assert np.all(clear_of_windows(fields, z, clearance))


def test_pair_slope():
    assert pair_slope(0.02, 4e-4, 0.01, 1e-4) == pytest.approx(2.0)
    assert pair_slope(0.02, 1e-4, 0.01, 0.0) == float("inf")


# --- Window checks ---

def test_window_plateau():
    w = Window(center=0.3, half_width=0.1, case=WindowCase.GENERIC, m_sign=1.0, c_sign=1.0)
    assert w.plateau == pytest.approx(0.05)
    assert list(w.on_plateau(np.array([0.3, 0.34, 0.36, 0.24]))) == [True, True, False, False]


def test_admissible_epsilon_passes_every_check(fields):
    """The chosen eps passes the window, triple zero and off-plateau checks."""
    attempt = window_checks(fields)
    assert attempt.passed, attempt.failures()
    assert attempt.checks["M_sign:off_windows"] and attempt.checks["c_sign:off_windows"]


def test_c_routes_agree_at_plateau_edge(fields):
    """On the axis and 1/2 windows the factored c meets (nu / 9)^(1/3) at the plateau edge."""
    t = np.array([-0.4, 0.0, 0.3])
    for index, w in enumerate(fields.windows):
        if w.case == WindowCase.GENERIC:
            continue
        edge = np.full(t.shape, w.center + w.plateau)
        assert fields.c_hat(index, t, edge) == pytest.approx(np.cbrt(fields.nu_hat(t, edge).value / 9.0), rel=1e-6)
        rim = np.full(t.shape, w.center + 0.75 * w.half_width)
        assert fields.c_hat(index, t, rim) == pytest.approx(np.cbrt(fields.nu_hat(t, rim).value / 9.0), rel=1e-12)


def test_fd_step_stays_in_repair_core(fields, profiles):
    for index in generic_indices(fields):
        w = fields.windows[index]
        h = fd_step(profiles, w)
        assert 0.0 < h <= min(FD_STEP, 0.1 * w.plateau)
        for record in profiles.repairs:
            if abs(record.zeta - w.center) < record.eta:
                assert h <= 0.2 * record.epsilon
