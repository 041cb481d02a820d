"""
Audit trail helpers: create records, mirror them to logging, dump to JSON.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from .models import AuditAction, AuditCategory, AuditRecord

logger = logging.getLogger(__name__)


class AuditTrail:
    """In-memory list of AuditRecords for one run."""

    def __init__(self, config_hash: Optional[str] = None):
        self.config_hash = config_hash
        self.records: List[AuditRecord] = []

    def add(self, record: AuditRecord) -> AuditRecord:
        self.records.append(record)
        return record

    def failures(self) -> List[AuditRecord]:
        return [r for r in self.records if not r.success]

    def dump(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        document = {
            "config_hash": self.config_hash,
            "records": [r.model_dump(mode="json") for r in self.records],
        }
        path.write_text(json.dumps(document, indent=2, sort_keys=True))
        return path


# Module default used when callers do not pass their own trail.
_default_trail = AuditTrail()


def get_default_trail() -> AuditTrail:
    return _default_trail


# ============================================================================
# AUDIT LOG CREATION
# ============================================================================

def create_audit_log(
    category: AuditCategory,
    action: AuditAction,
    resource: Optional[str] = None,
    payload: Optional[Dict[str, Any]] = None,
    success: bool = True,
    error_message: Optional[str] = None,
    trail: Optional[AuditTrail] = None,
) -> AuditRecord:
    """
    Crea un registro de auditoría y lo replica en el logger.

    Args:
        category: Categoría del evento
        action: Acción específica
        resource: Artefacto afectado (profile, window, trajectory, ...)
        payload: Datos adicionales en formato dict
        success: Si la operación fue exitosa
        error_message: Mensaje de error si falló
        trail: Trail de destino (por defecto el del módulo)

    Returns:
        AuditRecord creado
    """
    record = AuditRecord(
        category=category,
        action=action,
        resource=resource,
        payload=dict(payload or {}),
        success=success,
        error_message=error_message,
    )
    level = logging.INFO if success else logging.ERROR
    logger.log(level, "%s.%s %s %s", record.category, record.action, resource or "", error_message or "")
    return (trail or _default_trail).add(record)


def log_stationary_event(action: AuditAction, resource: str, payload: Optional[Dict[str, Any]] = None,
                         success: bool = True, error_message: Optional[str] = None,
                         trail: Optional[AuditTrail] = None) -> AuditRecord:
    return create_audit_log(AuditCategory.STATIONARY, action, resource, payload, success, error_message, trail)


def log_spacetime_event(action: AuditAction, resource: str, payload: Optional[Dict[str, Any]] = None,
                        success: bool = True, error_message: Optional[str] = None,
                        trail: Optional[AuditTrail] = None) -> AuditRecord:
    return create_audit_log(AuditCategory.SPACETIME, action, resource, payload, success, error_message, trail)


def log_reference_event(action: AuditAction, resource: str, payload: Optional[Dict[str, Any]] = None,
                        success: bool = True, error_message: Optional[str] = None,
                        trail: Optional[AuditTrail] = None) -> AuditRecord:
    return create_audit_log(AuditCategory.REFERENCE, action, resource, payload, success, error_message, trail)


def log_simulation_event(action: AuditAction, resource: str, payload: Optional[Dict[str, Any]] = None,
                         success: bool = True, error_message: Optional[str] = None,
                         trail: Optional[AuditTrail] = None) -> AuditRecord:
    return create_audit_log(AuditCategory.SIMULATION, action, resource, payload, success, error_message, trail)


def log_control_event(action: AuditAction, resource: str, payload: Optional[Dict[str, Any]] = None,
                      success: bool = True, error_message: Optional[str] = None,
                      trail: Optional[AuditTrail] = None) -> AuditRecord:
    return create_audit_log(AuditCategory.CONTROL, action, resource, payload, success, error_message, trail)
