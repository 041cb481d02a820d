"""
Reference trajectory from the fields (a, b, c) and the domain geometry.
"""
from __future__ import annotations

import logging
from typing import Optional

from ..audit.audit_utils import log_reference_event
from ..audit.models import AuditAction
from ..errors import AdmissibilityError
from ..spacetime.fields_utils import ABCFields
from .reference_utils import ReferenceTrajectory
from .schemas import CouplingWindow, ReferenceManifest, ReferenceParams

logger = logging.getLogger(__name__)


def build_reference(fields: ABCFields, params: ReferenceParams) -> ReferenceTrajectory:
    """
    Raises:
        AdmissibilityError: rbar too large for omega or for T
    """
    try:
        traj = ReferenceTrajectory(fields, params)
    except AdmissibilityError as e:
        log_reference_event(AuditAction.FAIL, "reference", e.context, success=False, error_message=str(e))
        raise
    log_reference_event(AuditAction.BUILD, "reference", {
        "x0": params.x0, "rbar": params.rbar, "T": params.T, "lens_radius": traj.lens_radius,
    })
    return traj


def reference_manifest(traj: ReferenceTrajectory, window: Optional[CouplingWindow] = None) -> ReferenceManifest:
    manifest = ReferenceManifest(x0=traj.x0, rbar=traj.rbar, T=traj.T, epsilon=traj.epsilon,
                                 lens_radius=traj.lens_radius)
    if window is not None:
        manifest.t1, manifest.t2 = window.t1, window.t2
        manifest.margins = {"mu_beta": window.mu_beta, "mu_gamma": window.mu_gamma}
        manifest.coupling = window
    return manifest
