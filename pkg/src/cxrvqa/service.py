"""HTTP facade for interactive diagnosis sessions.

Serves study summaries, box layouts, and per-question predictions with
activated-ROI indices; keeps append-only per-session turn history so a
coarse-to-fine questioning workflow can be replayed. State is held in
process; sessions can optionally be mirrored to JSON-lines files.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .fixtures import FixtureStore
from .kg import KnowledgeGraph, read_kg
from .lexicon import CANONICAL_NAMES, Lexicon, load_lexicon
from .metrics import activated_rois, top_answers
from .model import StudyInputs, VqaModel, prepare_study
from .relation_graphs import RoiSet

API_PREFIX = "/api/v1"


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


@dataclass
class Turn:
    question: str
    top_answers: list[tuple[str, float]]
    activated: dict[str, list[int]]
    timestamp: float


@dataclass
class Session:
    session_id: str
    study_id: str
    turns: list[Turn] = field(default_factory=list)


@dataclass
class StudyBundle:
    roiset: RoiSet
    inputs: StudyInputs


class DiagnosisService:
    """Model + fixtures + sessions behind the HTTP handlers."""

    def __init__(
        self,
        model: VqaModel,
        store: FixtureStore,
        kg: KnowledgeGraph,
        lexicon: Lexicon | None = None,
        session_dir: str | Path | None = None,
    ):
        self.model = model
        self.kg = kg
        self.lexicon = lexicon or load_lexicon()
        self.session_dir = Path(session_dir) if session_dir else None
        self._bundles: dict[str, StudyBundle] = {}
        for study_id in store.study_ids():
            roiset = store.load(study_id)
            inputs = prepare_study(
                roiset, kg, model.config.spatial_t, model.config.geometry_eps
            )
            self._bundles[study_id] = StudyBundle(roiset, inputs)
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._global_lock = threading.Lock()

    # ------------------------------------------------------------------

    def list_studies(self) -> list[dict]:
        out = []
        for study_id in sorted(self._bundles):
            bundle = self._bundles[study_id]
            out.append(
                {
                    "study_id": study_id,
                    "image_id": bundle.roiset.image_id,
                    "n": bundle.roiset.n,
                    "class_names": [r.class_name for r in bundle.roiset.rois],
                }
            )
        return out

    def get_study(self, study_id: str) -> dict:
        bundle = self._bundles.get(study_id)
        if bundle is None:
            raise ServiceError(404, "study_not_found", f"unknown study {study_id!r}")
        return {
            "study_id": study_id,
            "image_id": bundle.roiset.image_id,
            "n": bundle.roiset.n,
            "boxes": [list(r.bbox) for r in bundle.roiset.rois],
            "class_names": [r.class_name for r in bundle.roiset.rois],
            "image_ref": None,
        }

    def create_session(self, study_id: str) -> Session:
        if study_id not in self._bundles:
            raise ServiceError(404, "study_not_found", f"unknown study {study_id!r}")
        with self._global_lock:
            session = Session(session_id=uuid.uuid4().hex[:12], study_id=study_id)
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        return session

    def get_session(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise ServiceError(404, "session_not_found", f"unknown session {session_id!r}")
        return session

    def ask(self, session_id: str, question: str) -> dict:
        session = self.get_session(session_id)
        if not question or not question.strip():
            raise ServiceError(422, "empty_question", "question must be non-empty")
        bundle = self._bundles[session.study_id]
        scores, attention = self.model.predict(bundle.inputs, question)
        answers = top_answers(scores, self.model.answer_labels)
        activated = activated_rois(attention)
        with self._locks[session_id]:
            turn = Turn(
                question=question,
                top_answers=answers,
                activated=activated,
                timestamp=time.time(),
            )
            session.turns.append(turn)
            turn_index = len(session.turns) - 1
            if self.session_dir is not None:
                self.session_dir.mkdir(parents=True, exist_ok=True)
                with open(self.session_dir / f"{session_id}.jsonl", "a", encoding="utf-8") as fh:
                    fh.write(json.dumps(_turn_json(turn, turn_index)) + "\n")
        return {
            "turn_index": turn_index,
            "question": question,
            "top_answers": [{"label": l, "score": round(s, 6)} for l, s in answers],
            "activated_rois": activated,
        }

    def lexicon_export(self) -> dict:
        return {
            "abnormalities": [CANONICAL_NAMES[e.id] for e in self.lexicon.abnormalities],
            "levels": list(self.lexicon.attributes.levels),
            "locations_pre": list(self.lexicon.attributes.locations_pre),
            "locations_post": list(self.lexicon.attributes.locations_post),
            "types": list(self.lexicon.attributes.types),
        }


def _turn_json(turn: Turn, index: int) -> dict:
    return {
        "turn_index": index,
        "question": turn.question,
        "top_answers": [{"label": l, "score": round(s, 6)} for l, s in turn.top_answers],
        "activated_rois": turn.activated,
        "timestamp": turn.timestamp,
    }


class _SessionBody(BaseModel):
    study_id: str


class _AskBody(BaseModel):
    question: str


def create_app(service: DiagnosisService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cxrvqa", docs_url=None, redoc_url=None)

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    @app.get(f"{API_PREFIX}/studies")
    def list_studies():
        return service.list_studies()

    @app.get(f"{API_PREFIX}/studies/{{study_id}}")
    def get_study(study_id: str):
        return service.get_study(study_id)

    @app.post(f"{API_PREFIX}/sessions", status_code=201)
    def create_session(body: _SessionBody):
        session = service.create_session(body.study_id)
        return {"session_id": session.session_id, "study_id": session.study_id}

    @app.get(f"{API_PREFIX}/sessions/{{session_id}}")
    def get_session(session_id: str):
        session = service.get_session(session_id)
        return {
            "session_id": session.session_id,
            "study_id": session.study_id,
            "turns": [_turn_json(t, i) for i, t in enumerate(session.turns)],
        }

    @app.post(f"{API_PREFIX}/sessions/{{session_id}}/ask")
    def ask(session_id: str, body: _AskBody):
        return service.ask(session_id, body.question)

    @app.get(f"{API_PREFIX}/lexicon")
    def lexicon_export():
        return service.lexicon_export()

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")
    return app


def build_service(
    checkpoint: str | Path,
    fixtures_dir: str | Path,
    kg_path: str | Path,
    session_dir: str | Path | None = None,
) -> DiagnosisService:
    model = VqaModel.load(checkpoint)
    store = FixtureStore(fixtures_dir)
    kg = read_kg(kg_path)
    return DiagnosisService(model, store, kg, session_dir=session_dir)
