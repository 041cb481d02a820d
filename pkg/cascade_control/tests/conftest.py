import numpy as np
import pytest

from cascade_control.audit.audit_utils import AuditTrail
from cascade_control.config import ExperimentConfig, ReferenceSection, StationarySection
from cascade_control.reference.builder import build_reference
from cascade_control.reference.schemas import CouplingWindow, ReferenceParams
from cascade_control.simulation.schemas import Grid1D
from cascade_control.spacetime.builder import build_abc_fields
from cascade_control.spacetime.schemas import SpacetimeParams
from cascade_control.stationary.builder import build_stationary_profiles
from cascade_control.stationary.schemas import StationaryParams
from cascade_control.stationary.source_utils import KappaIntegral, build_base_G


# --- Configuration ---

@pytest.fixture(scope="session")
def default_config() -> ExperimentConfig:
    return ExperimentConfig.defaults()


@pytest.fixture(scope="session")
def stationary_params() -> StationaryParams:
    return StationaryParams.from_section(StationarySection())


# --- Stationary builds ---

@pytest.fixture(scope="session")
def base_G(stationary_params):
    """Source G with kappa = 0."""
    return build_base_G(stationary_params)


@pytest.fixture(scope="session")
def kappa_integral(base_G):
    return KappaIntegral(base_G)


@pytest.fixture(scope="session")
def profiles(stationary_params):
    """Full stationary construction (N = 3), built once per session."""
    return build_stationary_profiles(stationary_params)


# --- Fields and reference ---

@pytest.fixture(scope="session")
def fields_and_manifest(profiles, default_config):
    return build_abc_fields(profiles, SpacetimeParams.from_section(default_config.spacetime))


@pytest.fixture(scope="session")
def fields(fields_and_manifest):
    return fields_and_manifest[0]


@pytest.fixture(scope="session")
def reference(fields):
    return build_reference(fields, ReferenceParams.from_section(ReferenceSection()))


# --- Small linear problems ---

@pytest.fixture()
def small_interval() -> Grid1D:
    return Grid1D.interval(0.0, 1.0, 21)


@pytest.fixture()
def small_ball() -> Grid1D:
    return Grid1D.radial(1.0, 21, 3)


@pytest.fixture()
def window() -> CouplingWindow:
    """Hand-made coupling window on [0, 0.05] over (0.2, 0.8)."""
    return CouplingWindow(t1=0.0, t2=0.05, omega1=(0.2, 0.8), omega2=(0.35, 0.65),
                          mu_beta=1.0, mu_gamma=1.0, window_center=0.5, z_band=(0.4, 0.6))


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture()
def trail() -> AuditTrail:
    return AuditTrail(config_hash="test")


class QuietReference:
    """Zero trajectory on [0, T]; steering around it is null control of the cascade itself."""
    lens_radius = 1.0

    def __init__(self, T: float):
        self.T = T

    def on_grid(self, grid: Grid1D, times: np.ndarray):
        return np.zeros((times.size, 3, grid.n_nodes)), np.zeros((times.size, grid.n_nodes))


@pytest.fixture()
def quiet_reference(window) -> QuietReference:
    """Zero trajectory over the hand-made window."""
    return QuietReference(window.t2)
