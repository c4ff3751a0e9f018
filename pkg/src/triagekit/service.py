"""HTTP service: symptom mapping, session lifecycle and recommendations.

The knowledge graph is loaded fully into memory and shared read-only inside
each server process. One worker = one full server process with its own
session store; `serve --workers N` supervises N such processes on
consecutive ports and a sticky balancer (the bench plays that role) pins
each session to one worker, so adding workers scales the whole stack on
multi-core hardware.
"""

from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.requests import Request
from fastapi.responses import JSONResponse

from . import __version__
from .corpus import GENDERS
from .errors import ConfigurationError, ProtocolError, SessionError, TriageKitError
from .kg import KnowledgeGraph, load_snapshot
from .ontology import Ontology, normalize_surface
from .qgen import BimRanker
from .triage import COLLECTING, Session, TriageConfig, TriageEngine

DEFAULT_SESSION_TTL = 30 * 60  # seconds
MAX_SEARCH_RESULTS = 10
EDIT_DISTANCE_MIN_QUERY = 5  # shorter queries never fuzzy-match
EDIT_DISTANCE_MAX = 2


@dataclass
class ServiceConfig:
    graph_path: str
    ontology_path: str
    workers: int = 1
    session_ttl: float = DEFAULT_SESSION_TTL
    host: str = "127.0.0.1"
    port: int = 8321

    def worker_ports(self) -> list[int]:
        return [self.port + i for i in range(max(self.workers, 1))]


def _bounded_edit_distance(a: str, b: str, limit: int) -> int | None:
    """Levenshtein distance if <= limit, else None."""
    if abs(len(a) - len(b)) > limit:
        return None
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        current = [i] + [0] * len(b)
        row_min = i
        for j, cb in enumerate(b, start=1):
            current[j] = min(
                previous[j] + 1,
                current[j - 1] + 1,
                previous[j - 1] + (ca != cb),
            )
            row_min = min(row_min, current[j])
        if row_min > limit:
            return None
        previous = current
    return previous[-1] if previous[-1] <= limit else None


class SymptomIndex:
    """Maps free-text queries to concept candidates: exact normalized match
    outranks prefix match outranks bounded edit-distance match."""

    def __init__(self, ontology: Ontology):
        self.entries: list[tuple[str, str, str]] = []  # (normalized synonym, concept id, display)
        for concept in ontology.concepts_sorted():
            if concept.semantic_type not in ("symptom", "disease"):
                continue
            for synonym in sorted(concept.synonyms):
                normalized = normalize_surface(synonym)
                if normalized:
                    self.entries.append((normalized, concept.concept_id, concept.canonical))

    def search(self, query: str) -> list[dict]:
        normalized = normalize_surface(query)
        if not normalized:
            return []
        best: dict[str, tuple[float, str]] = {}
        for surface, concept_id, display in self.entries:
            if surface == normalized:
                score = 3.0
            elif surface.startswith(normalized):
                score = 2.0
            elif len(normalized) >= EDIT_DISTANCE_MIN_QUERY:
                distance = _bounded_edit_distance(surface, normalized, EDIT_DISTANCE_MAX)
                if distance is None:
                    continue
                score = 1.0 - 0.1 * distance
            else:
                continue
            if concept_id not in best or score > best[concept_id][0]:
                best[concept_id] = (score, display)
        ranked = sorted(best.items(), key=lambda item: (-item[1][0], item[1][1], item[0]))
        return [
            {"concept_id": cid, "name": display, "score": score}
            for cid, (score, display) in ranked[:MAX_SEARCH_RESULTS]
        ]


@dataclass
class _StoredSession:
    data: dict
    created: float
    touched: float


class ApiSessionStore:
    """In-memory session map with unguessable ids and idle expiry."""

    def __init__(self, ttl: float = DEFAULT_SESSION_TTL):
        self.ttl = ttl
        self._sessions: dict[str, _StoredSession] = {}
        self._lock = threading.Lock()

    def new_id(self) -> str:
        return secrets.token_urlsafe(24)  # 192 bits

    def put(self, session_id: str, data: dict) -> None:
        now = time.monotonic()
        with self._lock:
            stored = self._sessions.get(session_id)
            created = stored.created if stored else now
            self._sessions[session_id] = _StoredSession(data=data, created=created, touched=now)

    def get(self, session_id: str) -> dict:
        with self._lock:
            stored = self._sessions.get(session_id)
            if stored is None:
                raise HTTPException(status_code=404, detail="unknown session")
            if time.monotonic() - stored.touched > self.ttl:
                raise HTTPException(status_code=410, detail="session expired")
            stored.touched = time.monotonic()
            return stored.data

    def expire_now(self, session_id: str) -> None:
        with self._lock:
            stored = self._sessions.get(session_id)
            if stored is not None:
                stored.touched = -1e18

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)


def _session_to_dict(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "age": session.age,
        "gender": session.gender,
        "affirmed": list(session.affirmed),
        "denied": list(session.denied),
        "asked": list(session.asked),
        "status": session.status,
        "budget_remaining": session.budget_remaining,
        "pending_question": session.pending_question,
        "confident_streak": session.confident_streak,
    }


def _session_from_dict(d: dict) -> Session:
    return Session(**d)


class TriageService:
    def __init__(self, config: ServiceConfig):
        for path in (config.graph_path, config.ontology_path):
            if not Path(path).exists():
                raise ConfigurationError(f"missing artifact: {path}")
        self.config = config
        self.kg: KnowledgeGraph = load_snapshot(config.graph_path)
        self.ontology = Ontology.load(config.ontology_path)
        self.engine = TriageEngine(self.kg, self.ontology, BimRanker(), TriageConfig())
        self.search_index = SymptomIndex(self.ontology)
        self.store = ApiSessionStore(ttl=config.session_ttl)

    # -- payload builders ----------------------------------------------------

    def question_payload(self, concept_id: str) -> dict:
        concept = self.ontology.concepts[concept_id]
        return {
            "concept_id": concept_id,
            "name": concept.canonical,
            "text": f"Haben Sie {concept.canonical}?",
        }

    def recommendation_payload(self, session: Session) -> dict:
        rec = self.engine.recommend(session)
        case_index = self.kg.nodes.index("case_record")
        evidence = []
        for cid, score in rec.evidence[:10]:
            evidence.append(
                {
                    "case_id": cid,
                    "score": score,
                    "shared_symptoms": self._shared_concept_names(session, case_index[cid]),
                }
            )
        return {
            "risk": rec.risk,
            "point_of_care": rec.point_of_care,
            "time_frame": rec.time_frame,
            "confidence": rec.confidence,
            "evidence": evidence,
            "rationale": rec.rationale,
        }

    def _shared_concept_names(self, session: Session, case_local: int) -> list[str]:
        names = []
        for concept_id in session.affirmed:
            hit = self.kg.concept_node(concept_id)
            if hit is None:
                continue
            node_type, local = hit
            rel = self.kg.relations[f"{node_type}_to_patient"].matrix
            row = rel.indices[rel.indptr[local] : rel.indptr[local + 1]]
            if case_local in row:
                names.append(self.ontology.concepts[concept_id].canonical)
        return names

    def step_payload(self, session: Session) -> dict:
        """Next question while collecting, otherwise the recommendation."""
        out: dict = {"session_id": session.session_id, "status": session.status}
        if session.status == COLLECTING:
            question = self.engine.ask_next(session)
            if question is not None:
                out["next_question"] = self.question_payload(question)
                out["status"] = session.status
                return out
        out["status"] = session.status
        out["recommendation"] = self.recommendation_payload(session)
        return out


def create_app(config: ServiceConfig | None = None, service: TriageService | None = None) -> FastAPI:
    if service is None:
        if config is None:
            raise ConfigurationError("create_app needs a config or a service")
        service = TriageService(config)

    app = FastAPI(title="triagekit", version=__version__)
    app.state.service = service

    @app.exception_handler(TriageKitError)
    async def _domain_error(_req: Request, exc: TriageKitError):
        status = 409 if isinstance(exc, ProtocolError) else 400
        return JSONResponse(status_code=status, content={"detail": str(exc)})

    # endpoints are sync `def`: starlette runs them on its thread pool, so
    # slow computations never block another session's request

    @app.get("/v1/health")
    def health():
        return {
            "status": "ok",
            "version": __version__,
            "graph_fingerprint": service.kg.fingerprint(),
            "cases": service.kg.n_cases,
            "workers": service.config.workers,
            "port": service.config.port,
            "sessions": len(service.store),
        }

    @app.get("/v1/concepts/search")
    def search(q: str = ""):
        if not q.strip():
            raise HTTPException(status_code=400, detail="query must be non-empty")
        return {"candidates": service.search_index.search(q)}

    @app.post("/v1/sessions")
    def create_session(body: dict):
        age = body.get("age")
        gender = body.get("gender")
        concepts = body.get("concepts")
        if not isinstance(age, int) or not (0 <= age <= 120):
            raise HTTPException(status_code=400, detail="age must be an integer in 0..120")
        if gender not in GENDERS:
            raise HTTPException(status_code=400, detail=f"gender must be one of {list(GENDERS)}")
        if not isinstance(concepts, list) or not concepts:
            raise HTTPException(status_code=400, detail="concepts must be a non-empty list")
        session_id = service.store.new_id()
        session = service.engine.start_session(age, gender, list(concepts), session_id=session_id)
        payload = service.step_payload(session)
        service.store.put(session_id, _session_to_dict(session))
        return payload

    @app.post("/v1/sessions/{session_id}/answer")
    def answer(session_id: str, body: dict):
        concept_id = body.get("concept_id")
        response = body.get("response")
        if not isinstance(concept_id, str) or response not in ("yes", "no"):
            raise HTTPException(status_code=400, detail="need concept_id and response yes|no")
        session = _session_from_dict(service.store.get(session_id))
        try:
            service.engine.answer(session, concept_id, response)
        except SessionError as exc:  # answering a finished session is an order violation
            raise HTTPException(status_code=409, detail=str(exc))
        payload = service.step_payload(session)
        service.store.put(session_id, _session_to_dict(session))
        return payload

    @app.get("/v1/sessions/{session_id}/recommendation")
    def recommendation(session_id: str):
        session_dict = service.store.get(session_id)
        if session_dict["status"] == COLLECTING:
            raise HTTPException(status_code=409, detail="session is still collecting answers")
        session = _session_from_dict(session_dict)
        return {
            "session_id": session_id,
            "status": session.status,
            "recommendation": service.recommendation_payload(session),
        }

    return app


def _serve_one(config: ServiceConfig) -> None:
    import uvicorn

    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level="warning")


def serve(config: ServiceConfig) -> None:
    """Run the service; blocks until shutdown. With workers > 1 a supervisor
    spawns one full server process per worker on consecutive ports (a sticky
    load balancer pins each session to one worker); graceful shutdown
    terminates children and waits for in-flight requests."""
    if config.workers <= 1:
        _serve_one(config)
        return

    import signal
    import subprocess
    import sys

    children: list[subprocess.Popen] = []
    for port in config.worker_ports():
        children.append(
            subprocess.Popen(
                [
                    sys.executable,
                    "-m",
                    "triagekit.cli",
                    "serve",
                    "--graph",
                    config.graph_path,
                    "--ontology",
                    config.ontology_path,
                    "--host",
                    config.host,
                    "--port",
                    str(port),
                    "--workers",
                    "1",
                ]
            )
        )

    def shutdown(_signum, _frame):
        for child in children:
            child.terminate()

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    for child in children:
        child.wait()
