"""
End-to-end construction of the stationary profiles.
"""
from __future__ import annotations

import logging
from typing import List

from ..audit.audit_utils import log_stationary_event
from ..audit.models import AuditAction
from ..errors import CascadeError
from .profiles_utils import blend_intervals, derive_B, derive_C, find_c_zeros, integrate_A
from .repair_utils import repair_window_width, repair_zero
from .schemas import CZero, RepairMode, StationaryParams, StationaryProfiles, ZeroKind
from .source_utils import apply_kappa_bumps, build_base_G, tune_kappa

logger = logging.getLogger(__name__)


def build_stationary_profiles(params: StationaryParams) -> StationaryProfiles:
    """
    G -> kappa* -> A, B, C -> zeros of C -> repairs.

    Kink and weak smooth zeros get a sign-change repair (a simple zero with
    C' = -cbrt(s) eps^(2/3) remains); touching zeros get a same-sign repair
    and disappear.
    """
    try:
        Gbar = build_base_G(params)
        kappa = tune_kappa(params, Gbar)
        G = apply_kappa_bumps(Gbar, kappa)
        A = integrate_A(G, params)
        B = derive_B(G)
        C = derive_C(B, G)
        zeros = find_c_zeros(C, B, params)
    except CascadeError as e:
        log_stationary_event(AuditAction.FAIL, "stationary", e.context, success=False, error_message=str(e))
        raise

    blends = blend_intervals(params)
    rho_list: List[CZero] = []
    repairs = []
    for index, zero in enumerate(zeros):
        if not zero.needs_repair:
            rho_list.append(zero)
            continue
        eta = repair_window_width(zeros, index, blends)
        mode = RepairMode.SAME_SIGN if zero.kind == ZeroKind.TANGENTIAL else RepairMode.SIGN_CHANGE
        logger.info("repairing %s zero at %.8f (eta = %.3g)", zero.kind.value, zero.rho, eta)
        window = repair_zero(B, zero.rho, eta, mode, A=A, G=G, C=C, N=params.N)
        A, B, C, G = window.A, window.B, window.C, window.G
        repairs.append(window.record)
        if mode == RepairMode.SIGN_CHANGE:
            rho_list.append(zero.model_copy(update={
                "kind": ZeroKind.SMOOTH, "derivative": window.record.c_slope,
                "needs_repair": False, "repaired": True,
            }))

    profiles = StationaryProfiles(
        params=params, G=G, A=A, B=B, C=C, kappa_star=kappa, c0=float(A(0.0)),
        z_R=Gbar.z_R, rho_list=rho_list, repairs=repairs,
    )
    log_stationary_event(AuditAction.BUILD, "stationary", {
        "kappa_star": kappa, "c0": profiles.c0, "rho": profiles.rhos(), "repairs": len(repairs),
    })
    return profiles
