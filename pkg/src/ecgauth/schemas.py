"""Pydantic request/response models for the HTTP service.

Records travel as Record-CSV text, so the wire format is the same one the
files and CLI use.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    n_entities: int
    version: str


class EntityInfo(BaseModel):
    entity_id: str
    n_slices: int
    mean_mse: float
    std_mse: float
    ucl_mse: float
    fs_train: float


class EnrollRequest(BaseModel):
    record_csv: str = Field(description="Record-CSV text of the training recording")
    entity_id: Optional[str] = Field(
        default=None, description="defaults to the record's subject label"
    )
    replace: bool = False


class EnrollResponse(BaseModel):
    entity_id: str
    n_slices: int
    mean_mse: float
    ucl_mse: float
    n_entities: int


class AuthRequest(BaseModel):
    record_csv: str = Field(description="Record-CSV text of the test recording")
    test_period_s: Optional[float] = None


class AuthResponse(BaseModel):
    outcome: str
    best_id: Optional[str] = None
    best_mse: Optional[float] = None
    gate_mse: Optional[float] = None
    scores: Optional[dict[str, float]] = None
    reason: Optional[str] = None


class DbPathRequest(BaseModel):
    path: str
