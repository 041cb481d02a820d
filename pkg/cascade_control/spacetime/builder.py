"""
Fields (a, b, c) from the stationary profiles.
"""
from __future__ import annotations

import logging
from typing import Optional

from ..audit.audit_utils import log_spacetime_event
from ..audit.models import AuditAction
from ..stationary.schemas import StationaryProfiles
from .fields_utils import ABCFields
from .schemas import SpacetimeManifest, SpacetimeParams, WindowCase
from .verify_utils import choose_epsilon, verify_triple_zero, window_checks
from .weights_utils import layout_windows

logger = logging.getLogger(__name__)


def build_abc_fields(profiles: StationaryProfiles, params: SpacetimeParams,
                     epsilon: Optional[float] = None) -> tuple:
    """
    Build the fields, choosing eps from the candidates unless one is given.

    Returns:
        (ABCFields, SpacetimeManifest)
    """
    if epsilon is None:
        fields, attempts = choose_epsilon(profiles, params)
    else:
        fields = ABCFields(profiles, params, epsilon, layout_windows(profiles, params.window_fraction))
        attempts = [window_checks(fields)]
        if not attempts[0].passed:
            logger.warning("eps = %g fails: %s", epsilon, ", ".join(attempts[0].failures()))

    triple = [verify_triple_zero(fields, i) for i, w in enumerate(fields.windows) if w.case == WindowCase.GENERIC]
    manifest = SpacetimeManifest(
        epsilon=fields.epsilon,
        rho_list=profiles.rhos(),
        windows=fields.windows,
        checks=attempts[-1].checks,
        attempts=attempts,
        triple_zero=triple,
    )
    log_spacetime_event(AuditAction.BUILD, "fields", {
        "epsilon": fields.epsilon, "windows": len(fields.windows), "passed": attempts[-1].passed,
    })
    return fields, manifest
