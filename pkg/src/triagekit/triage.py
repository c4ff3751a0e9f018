"""Session state machine and inference engine: accumulates answers, retrieves
similar historical cases, aggregates their labels into a risk-classed
recommendation with confidence and evidence, and applies red-flag escalation.

Safety posture: affirming a red flag escalates immediately and irreversibly;
a low-confidence similarity verdict is raised one risk level rather than
abstaining.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .corpus import POINTS_OF_CARE, RISKS, TIME_FRAMES, CaseRecord, RecommendationLabel
from .errors import DataError, InferenceError, ProtocolError, SessionError
from .kg import FORWARD, KnowledgeGraph, QueryProfile, SparseVector, similar_cases, traverse
from .ontology import Ontology
from .qgen import CandidateGates, Ranker, BimRanker, case_concepts, next_question

COLLECTING, ESCALATED, CONCLUDED = "collecting", "escalated", "concluded"

RISK_ORDER = {"low": 0, "medium": 1, "high": 2}

# defaults when a risk class was chosen by the safety fallback and therefore
# has no evidence cases of its own
FALLBACK_CARE = {
    "high": ("emergency_call", "immediate"),
    "medium": ("teleconsultation", "within_24h"),
    "low": ("self_care", "unscheduled"),
}


@dataclass(frozen=True)
class TriageConfig:
    question_budget: int = 10
    evidence_k: int = 50
    confidence_threshold: float = 0.6
    stable_answers: int = 2  # consecutive confident answers before concluding
    retrieval_k: int = 50


@dataclass
class Session:
    session_id: str
    age: int
    gender: str
    affirmed: list[str]
    denied: list[str] = field(default_factory=list)
    asked: list[str] = field(default_factory=list)
    status: str = COLLECTING
    budget_remaining: int = 10
    pending_question: str | None = None
    confident_streak: int = 0

    def gates(self) -> CandidateGates:
        return CandidateGates(age=self.age, gender=self.gender)

    def check(self) -> None:
        if set(self.affirmed) & set(self.denied):
            raise SessionError("affirmed and denied concepts overlap")
        if len(set(self.asked)) != len(self.asked):
            raise SessionError("question log contains duplicates")


@dataclass(frozen=True)
class Recommendation:
    risk: str
    point_of_care: str
    time_frame: str
    confidence: float
    evidence: tuple[tuple[str, float], ...]  # (case id, score), best first
    rationale: dict

    def label(self) -> RecommendationLabel:
        return RecommendationLabel(self.risk, self.point_of_care, self.time_frame)


def _raise_risk(risk: str) -> str:
    return {"low": "medium", "medium": "high", "high": "high"}[risk]


class TriageEngine:
    """Drives sessions over a shared read-only graph + ontology."""

    def __init__(
        self,
        kg: KnowledgeGraph,
        ontology: Ontology,
        ranker: Ranker | None = None,
        config: TriageConfig | None = None,
    ):
        self.kg = kg
        self.ontology = ontology
        self.ranker = ranker or BimRanker()
        self.config = config or TriageConfig()

    # -- session lifecycle -------------------------------------------------

    def _is_red_flag(self, concept_id: str) -> bool:
        concept = self.ontology.concepts.get(concept_id)
        return concept is not None and "red_flag" in concept.flags

    def start_session(
        self,
        age: int,
        gender: str,
        initial_concepts: Sequence[str],
        session_id: str | None = None,
    ) -> Session:
        deduped = list(dict.fromkeys(initial_concepts))
        if not deduped:
            raise SessionError("a session needs at least one initial concept")
        for concept_id in deduped:
            if concept_id not in self.ontology.concepts:
                raise SessionError(f"unknown concept {concept_id}")
        session = Session(
            session_id=session_id or f"s-{secrets.token_hex(16)}",
            age=age,
            gender=gender,
            affirmed=deduped,
            budget_remaining=self.config.question_budget,
        )
        if any(self._is_red_flag(c) for c in deduped):
            session.status = ESCALATED
        return session

    def ask_next(self, session: Session) -> str | None:
        """Pick and log the next question; concludes the session when no
        candidate is left."""
        if session.status != COLLECTING:
            return None
        if session.pending_question is not None:
            return session.pending_question
        question = next_question(
            self.kg,
            self.ontology,
            self.ranker,
            affirmed=session.affirmed,
            denied=session.denied,
            asked=session.asked,
            gates=session.gates(),
            budget_remaining=session.budget_remaining,
            retrieval_k=self.config.retrieval_k,
        )
        if question is None:
            session.status = CONCLUDED
            return None
        session.asked.append(question)
        session.pending_question = question
        return question

    def answer(self, session: Session, concept_id: str, response: str) -> Session:
        """Apply a yes/no answer to the most recently asked question."""
        if session.status != COLLECTING:
            raise SessionError(f"session is {session.status}, not collecting")
        if response not in ("yes", "no"):
            raise ProtocolError(f"response must be yes or no, got {response!r}")
        if session.pending_question is None or concept_id != session.pending_question:
            raise ProtocolError(
                f"answered concept {concept_id} but pending question is {session.pending_question}"
            )
        session.pending_question = None
        session.budget_remaining -= 1
        if response == "yes":
            session.affirmed.append(concept_id)
            if self._is_red_flag(concept_id):
                session.status = ESCALATED
                return session
        else:
            session.denied.append(concept_id)

        if session.budget_remaining <= 0:
            session.status = CONCLUDED
            return session
        # conclude early once the winning class stays confident across
        # consecutive answers
        confidence = self._current_confidence(session)
        if confidence is not None and confidence >= self.config.confidence_threshold:
            session.confident_streak += 1
            if session.confident_streak >= self.config.stable_answers:
                session.status = CONCLUDED
        else:
            session.confident_streak = 0
        return session

    def _current_confidence(self, session: Session) -> float | None:
        try:
            masses, evidence = self._evidence_masses(session)
        except InferenceError:
            return None
        if not evidence:
            return None
        total = sum(masses.values())
        return max(masses.values()) / total if total > 0 else None

    # -- inference ---------------------------------------------------------

    def _shared_concept_cases(self, session: Session) -> set[int]:
        pairs = []
        by_type: dict[str, list[int]] = {}
        for concept_id in session.affirmed:
            hit = self.kg.concept_node(concept_id)
            if hit is not None:
                by_type.setdefault(hit[0], []).append(hit[1])
        shared: set[int] = set()
        for node_type, locals_ in by_type.items():
            frontier = SparseVector.from_pairs(node_type, [(i, 1.0) for i in set(locals_)])
            hit = traverse(self.kg, [(f"{node_type}_to_patient", FORWARD)], frontier)
            shared.update(int(i) for i in hit.indices)
        return shared

    def _evidence_masses(self, session: Session):
        if self.kg.n_cases == 0:
            raise InferenceError("knowledge graph contains no case records")
        usable = [c for c in session.affirmed if self.kg.concept_node(c) is not None]
        if not usable:
            raise InferenceError("no affirmed concept is present in the graph")
        profile = QueryProfile(
            affirmed=tuple(usable),
            denied=tuple(c for c in session.denied if self.kg.concept_node(c) is not None),
            age=session.age,
            gender=session.gender,
        )
        ranked = similar_cases(self.kg, profile, k=self.config.evidence_k)
        shared = self._shared_concept_cases(session)
        case_index = self.kg.nodes.index("case_record")
        evidence = [
            (cid, score)
            for cid, score in ranked
            if score > 0 and case_index[cid] in shared
        ]
        masses = {risk: 0.0 for risk in RISKS}
        for cid, score in evidence:
            label = self.kg.case_labels[case_index[cid]]
            masses[label.risk] += score
        return masses, evidence

    def recommend(self, session: Session) -> Recommendation:
        """Risk-classed recommendation with confidence and evidence. A
        red-flag escalation bypasses retrieval; otherwise the winning class
        is the one with the largest retrieved score mass, raised one level
        when its mass fraction stays below the confidence threshold."""
        if session.status == COLLECTING:
            raise SessionError("session is still collecting answers")
        if session.status == ESCALATED:
            red_flags = [c for c in session.affirmed if self._is_red_flag(c)]
            return Recommendation(
                risk="high",
                point_of_care="emergency_call",
                time_frame="immediate",
                confidence=1.0,
                evidence=(),
                rationale={"basis": "red_flag", "red_flags": red_flags},
            )
        masses, evidence = self._evidence_masses(session)
        if not evidence:
            # no historical case shares a concept with the session: the
            # engine still answers, routing to a consult at medium risk
            return Recommendation(
                risk="medium",
                point_of_care="teleconsultation",
                time_frame="within_24h",
                confidence=0.0,
                evidence=(),
                rationale={"basis": "insufficient_evidence", "masses": masses},
            )
        total = sum(masses.values())
        chosen = max(RISKS, key=lambda r: (masses[r], RISK_ORDER[r]))
        confidence = masses[chosen] / total
        raised = confidence < self.config.confidence_threshold
        final_risk = _raise_risk(chosen) if raised else chosen

        case_index = self.kg.nodes.index("case_record")
        chosen_labels = [
            self.kg.case_labels[case_index[cid]]
            for cid, _ in evidence
            if cid in case_index and self.kg.case_labels[case_index[cid]].risk == chosen
        ]
        if raised or final_risk != chosen or not chosen_labels:
            point_of_care, time_frame = FALLBACK_CARE[final_risk]
        else:
            point_of_care = _modal(
                [l.point_of_care for l in chosen_labels], POINTS_OF_CARE
            )
            time_frame = _modal([l.time_frame for l in chosen_labels], TIME_FRAMES)
        return Recommendation(
            risk=final_risk,
            point_of_care=point_of_care,
            time_frame=time_frame,
            confidence=confidence,
            evidence=tuple(evidence),
            rationale={
                "basis": "similarity",
                "masses": masses,
                "raised": raised,
                "argmax": chosen,
            },
        )

    def run_scripted(
        self,
        age: int,
        gender: str,
        initial_concepts: Sequence[str],
        answer_fn: Callable[[str], str],
        session_id: str | None = None,
    ) -> tuple[Session, Recommendation]:
        """Drive a full session with a scripted answer function."""
        session = self.start_session(age, gender, initial_concepts, session_id=session_id)
        while session.status == COLLECTING:
            question = self.ask_next(session)
            if question is None:
                break
            self.answer(session, question, answer_fn(question))
        return session, self.recommend(session)


# --------------------------------------------------------------------------
# automated recommendation testing against ground truth
# --------------------------------------------------------------------------


def _modal(values: Sequence[str], priority: Sequence[str]) -> str:
    counts: dict[str, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    return min(counts, key=lambda v: (-counts[v], priority.index(v)))


def scripted_initials(record: CaseRecord, ontology: Ontology, count: int = 2) -> list[str]:
    """Initial complaint for a replayed case: red flags first (patients lead
    with the scary symptom), then lowest concept ids, at most `count`."""
    concepts = case_concepts(record, ontology)
    ordered = sorted(
        concepts,
        key=lambda c: (0 if "red_flag" in ontology.concepts[c].flags else 1, c),
    )
    return list(ordered[: max(1, count)])


def oracle_answers(record: CaseRecord, ontology: Ontology) -> Callable[[str], str]:
    """Answers drawn from the case's own mentions: yes iff present."""
    present = set(case_concepts(record, ontology))

    def answer(concept_id: str) -> str:
        return "yes" if concept_id in present else "no"

    return answer


@dataclass
class TriageMetrics:
    per_class: dict[str, dict[str, float]]
    emergency_recall: float
    confusion: dict[tuple[str, str], int]
    n: int

    def report(self) -> str:
        lines = [f"cases evaluated: {self.n}", f"emergency recall: {self.emergency_recall:.4f}"]
        lines.append(f"{'class':8s} {'precision':>9s} {'recall':>9s} {'f_score':>9s} {'support':>8s}")
        for risk in RISKS:
            m = self.per_class[risk]
            lines.append(
                f"{risk:8s} {m['precision']:9.4f} {m['recall']:9.4f} {m['f_score']:9.4f} {m['support']:8.0f}"
            )
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "per_class": self.per_class,
            "emergency_recall": self.emergency_recall,
            "confusion": {f"{t}->{p}": c for (t, p), c in sorted(self.confusion.items())},
            "n": self.n,
        }


def evaluate_recommendations(
    engine: TriageEngine,
    ground_truth: Sequence[CaseRecord],
    *,
    initial_count: int = 2,
) -> TriageMetrics:
    """Replay each ground-truth case through a scripted session and score the
    engine's risk class against the validated label; emergency (high-risk)
    recall is reported separately."""
    if not ground_truth:
        raise DataError("empty ground truth set")
    confusion: dict[tuple[str, str], int] = {}
    for record in ground_truth:
        initials = scripted_initials(record, engine.ontology, count=initial_count)
        _, rec = engine.run_scripted(
            record.age, record.gender, initials, oracle_answers(record, engine.ontology)
        )
        key = (record.label.risk, rec.risk)
        confusion[key] = confusion.get(key, 0) + 1
    return metrics_from_confusion(confusion)


def metrics_from_confusion(confusion: dict[tuple[str, str], int]) -> TriageMetrics:
    per_class = {}
    for risk in RISKS:
        tp = confusion.get((risk, risk), 0)
        fp = sum(c for (t, p), c in confusion.items() if p == risk and t != risk)
        fn = sum(c for (t, p), c in confusion.items() if t == risk and p != risk)
        support = tp + fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f_score = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[risk] = {
            "precision": precision,
            "recall": recall,
            "f_score": f_score,
            "support": float(support),
        }
    return TriageMetrics(
        per_class=per_class,
        emergency_recall=per_class["high"]["recall"],
        confusion=confusion,
        n=sum(confusion.values()),
    )
