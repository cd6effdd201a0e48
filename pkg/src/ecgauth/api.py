"""FastAPI service wrapping the core package for checkpoint-style use.

The service keeps one enrollment database in memory; clients enroll training
recordings and authenticate short test recordings against it. State mutation
is serialized with a lock so concurrent requests stay consistent.
"""

from __future__ import annotations

import io
import threading
from typing import Optional

from fastapi import FastAPI, HTTPException

from . import __version__
from .authenticate import authenticate
from .config import ToolkitConfig
from .enrollment import EnrollmentDb, enroll, load_db_path, new_db, save_db_path
from .errors import (
    DuplicateEntityError,
    EcgAuthError,
    EnrollmentError,
    FormatError,
    InsufficientDataError,
    ValidationError,
)
from .records import read_record
from .schemas import (
    AuthRequest,
    AuthResponse,
    DbPathRequest,
    EnrollRequest,
    EnrollResponse,
    EntityInfo,
    HealthResponse,
)


def _http_error(exc: EcgAuthError) -> HTTPException:
    if isinstance(exc, DuplicateEntityError):
        return HTTPException(status_code=409, detail=str(exc))
    if isinstance(exc, (ValidationError, FormatError, InsufficientDataError, EnrollmentError)):
        return HTTPException(status_code=422, detail=str(exc))
    return HTTPException(status_code=500, detail=str(exc))


def _parse_record(text: str):
    try:
        return read_record(io.StringIO(text))
    except EcgAuthError as exc:
        raise _http_error(exc) from exc


def create_app(
    db_path=None, config: Optional[ToolkitConfig] = None, db: Optional[EnrollmentDb] = None
) -> FastAPI:
    """Build the service around an existing db, a db file, or a fresh db."""
    if db is None:
        db = load_db_path(db_path) if db_path else new_db(config)

    app = FastAPI(title="ecgauth", version=__version__)
    app.state.db = db
    app.state.lock = threading.Lock()

    @app.get("/health", response_model=HealthResponse)
    def health() -> HealthResponse:
        return HealthResponse(
            status="ok", n_entities=len(app.state.db.models), version=__version__
        )

    @app.get("/entities", response_model=list[EntityInfo])
    def entities() -> list[EntityInfo]:
        db = app.state.db
        return [
            EntityInfo(
                entity_id=model.entity_id,
                n_slices=model.n_slices,
                mean_mse=model.mean_mse,
                std_mse=model.std_mse,
                ucl_mse=model.ucl_mse,
                fs_train=model.fs_train,
            )
            for _, model in sorted(db.models.items())
        ]

    @app.post("/enroll", response_model=EnrollResponse)
    def enroll_entity(request: EnrollRequest) -> EnrollResponse:
        record = _parse_record(request.record_csv)
        entity_id = request.entity_id or record.subject_id
        with app.state.lock:
            try:
                enroll(app.state.db, entity_id, record, replace=request.replace)
            except EcgAuthError as exc:
                raise _http_error(exc) from exc
            model = app.state.db.models[entity_id]
            return EnrollResponse(
                entity_id=entity_id,
                n_slices=model.n_slices,
                mean_mse=model.mean_mse,
                ucl_mse=model.ucl_mse,
                n_entities=len(app.state.db.models),
            )

    @app.post("/authenticate", response_model=AuthResponse)
    def authenticate_record(request: AuthRequest) -> AuthResponse:
        record = _parse_record(request.record_csv)
        try:
            decision = authenticate(app.state.db, record, request.test_period_s)
        except EcgAuthError as exc:
            raise _http_error(exc) from exc
        return AuthResponse(
            outcome=decision.outcome,
            best_id=decision.best_id,
            best_mse=decision.best_mse,
            gate_mse=decision.gate_mse,
            scores=decision.scores,
            reason=decision.reason,
        )

    @app.post("/db/save")
    def db_save(request: DbPathRequest) -> dict:
        with app.state.lock:
            save_db_path(app.state.db, request.path)
            return {"saved": request.path, "n_entities": len(app.state.db.models)}

    @app.post("/db/load")
    def db_load(request: DbPathRequest) -> dict:
        try:
            loaded = load_db_path(request.path)
        except OSError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except EcgAuthError as exc:
            raise _http_error(exc) from exc
        with app.state.lock:
            app.state.db = loaded
            return {"loaded": request.path, "n_entities": len(loaded.models)}

    return app
