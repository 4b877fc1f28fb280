"""Solver settings service -- typed Pydantic models with JSON file overrides."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, Field

logger = logging.getLogger(__name__)


class IntegratorSettings(BaseModel):
    rtol: float = Field(default=1e-8, gt=0)
    atol: float = Field(default=1e-10, gt=0)
    horizon: float = Field(default=50.0, gt=0)
    # Early stop once the reduced state is this small.
    termination_norm: float = Field(default=1e-9, gt=0)
    # Runs whose reduced state exceeds this norm are flagged divergent.
    divergence_norm: float = Field(default=1e3, gt=0)
    max_consistency_samples: int = Field(default=200, ge=0)


class RiccatiSettings(BaseModel):
    newton_max_iter: int = Field(default=50, ge=0)
    residual_tol: float = Field(default=1e-10, gt=0)


class KWaySettings(BaseModel):
    singular_tol: float = Field(default=1e-12, gt=0)
    # Most entries an assembled Kronecker operator may hold, dense or sparse.
    dense_assembly_limit: int = Field(default=20_000_000, ge=1)


class MonolithicSettings(BaseModel):
    direct_limit: int = Field(default=50_000, ge=1)
    gmres_tol: float = Field(default=1e-10, gt=0)
    gmres_restart: int = Field(default=200, ge=1)
    gmres_max_iter: int = Field(default=2000, ge=1)


class SweepSettings(BaseModel):
    low: float = -2.0
    high: float = 2.0
    count: int = Field(default=1000, ge=0)
    seed: int = 0
    horizon: float = Field(default=20.0, gt=0)


class SolverSettings(BaseModel):
    integrator: IntegratorSettings = Field(default_factory=IntegratorSettings)
    riccati: RiccatiSettings = Field(default_factory=RiccatiSettings)
    kway: KWaySettings = Field(default_factory=KWaySettings)
    monolithic: MonolithicSettings = Field(default_factory=MonolithicSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)


def merge_overrides(overrides: dict[str, Any]) -> SolverSettings:
    """Merge ``{"group": {"field": value}}`` overrides into the defaults.

    Unknown groups are ignored with a warning.
    """
    merged = SolverSettings().model_dump()
    for group, fields in overrides.items():
        if group in merged and isinstance(fields, dict):
            merged[group].update(fields)
        else:
            logger.warning("Ignoring unknown solver settings group '%s'", group)
    return SolverSettings(**merged)


def load_solver_settings(path: str | Path | None = None) -> SolverSettings:
    """Load solver settings from an optional JSON file, merged with defaults."""
    if not path:
        return SolverSettings()
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"Solver settings file {path} must contain a JSON object")
    return merge_overrides(raw)


def solver_settings_schema() -> dict[str, Any]:
    """Return the full JSON Schema for SolverSettings with defaults."""
    return SolverSettings.model_json_schema()
