"""
Structured run records.
"""
from __future__ import annotations

from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field


class AuditCategory(str, Enum):
    STATIONARY = "stationary"
    SPACETIME = "spacetime"
    REFERENCE = "reference"
    SIMULATION = "simulation"
    CONTROL = "control"
    CLI = "cli"


class AuditAction(str, Enum):
    BUILD = "build"
    VERIFY = "verify"
    TUNE = "tune"
    REPAIR = "repair"
    SOLVE = "solve"
    STEER = "steer"
    EXPORT = "export"
    FAIL = "fail"


class AuditRecord(BaseModel):
    """One event of a run."""
    model_config = ConfigDict(use_enum_values=True)

    category: AuditCategory
    action: AuditAction
    resource: Optional[str] = Field(None, description="Artifact the event refers to")
    payload: Dict[str, Any] = Field(default_factory=dict, description="Event data")
    success: bool = True
    error_message: Optional[str] = None
    created_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
