"""Session state machine, recommendation rules and replay evaluation."""

import random

import pytest

from triagekit import corpus as corpus_mod
from triagekit import triage as triage_mod
from triagekit.errors import DataError, ProtocolError, SessionError
from triagekit.kg import build_graph
from triagekit.ontology import build_ontology
from triagekit.textproc import TextPipeline
from triagekit.triage import (
    COLLECTING,
    CONCLUDED,
    ESCALATED,
    TriageConfig,
    TriageEngine,
    evaluate_recommendations,
    metrics_from_confusion,
    oracle_answers,
    scripted_initials,
)


@pytest.fixture(scope="module")
def world():
    pipe = TextPipeline.default()
    profile = corpus_mod.GeneratorProfile.load()
    records = corpus_mod.generate_corpus(profile, 800, seed=41)
    ontology = build_ontology(records, pipe.dictionary)
    kg = build_graph(records, ontology)
    return profile, records, ontology, kg


@pytest.fixture(scope="module")
def engine(world):
    _, _, ontology, kg = world
    return TriageEngine(kg, ontology)


def concept(ontology, dict_id):
    out = ontology.resolve(dict_id)
    assert out is not None
    return out


class TestStartSession:
    def test_red_flag_escalates_immediately(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(55, "male", [concept(ontology, "S_brustschmerz")])
        assert session.status == ESCALATED

    def test_ordinary_symptom_collects_with_budget(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(30, "female", [concept(ontology, "S_husten")])
        assert session.status == COLLECTING
        assert session.budget_remaining == 10

    def test_duplicates_deduplicated(self, world, engine):
        _, _, ontology, _ = world
        fieber = concept(ontology, "S_fieber")
        session = engine.start_session(30, "female", [fieber, fieber, fieber])
        assert session.affirmed == [fieber]

    def test_zero_concepts_rejected(self, engine):
        with pytest.raises(SessionError):
            engine.start_session(30, "female", [])

    def test_unknown_concept_rejected(self, engine):
        with pytest.raises(SessionError):
            engine.start_session(30, "female", ["k_doesnotexist"])


class TestAnswer:
    def test_yes_on_red_flag_escalates(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(60, "male", [concept(ontology, "S_schwindel")])
        flag = concept(ontology, "S_atemnot")
        # force the pending question to a red flag to exercise the rule
        session.asked.append(flag)
        session.pending_question = flag
        engine.answer(session, flag, "yes")
        assert session.status == ESCALATED

    def test_no_on_parent_bars_descendants(self, world, engine):
        _, _, ontology, kg = world
        bauch = concept(ontology, "S_bauchschmerz")
        blocked = ontology.descendants(bauch) | {bauch}
        session = engine.start_session(25, "female", [concept(ontology, "S_fieber")])
        session.asked.append(bauch)
        session.pending_question = bauch
        engine.answer(session, bauch, "no")
        while session.status == COLLECTING:
            q = engine.ask_next(session)
            if q is None:
                break
            assert q not in blocked
            engine.answer(session, q, "no")

    def test_budget_exhaustion_concludes(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(40, "female", [concept(ontology, "S_husten")])
        while session.status == COLLECTING:
            q = engine.ask_next(session)
            if q is None:
                break
            engine.answer(session, q, "no")
        assert session.status == CONCLUDED
        assert session.budget_remaining >= 0

    def test_answering_unasked_concept_rejected(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(40, "female", [concept(ontology, "S_husten")])
        engine.ask_next(session)
        with pytest.raises(ProtocolError):
            engine.answer(session, concept(ontology, "S_fieber"), "yes")

    def test_answer_after_conclusion_rejected(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(40, "female", [concept(ontology, "S_husten")])
        session.status = CONCLUDED
        with pytest.raises(SessionError):
            engine.answer(session, "anything", "no")

    def test_no_question_repeats(self, world, engine):
        _, _, ontology, _ = world
        rng = random.Random(7)
        session = engine.start_session(33, "female", [concept(ontology, "S_uebelkeit")])
        seen = set()
        while session.status == COLLECTING:
            q = engine.ask_next(session)
            if q is None:
                break
            assert q not in seen
            seen.add(q)
            engine.answer(session, q, rng.choice(["yes", "no"]))
        session.check()


class TestRecommend:
    def test_escalated_recommendation(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(70, "male", [concept(ontology, "D_herzinfarkt")])
        rec = engine.recommend(session)
        assert (rec.risk, rec.point_of_care, rec.time_frame) == (
            "high",
            "emergency_call",
            "immediate",
        )
        assert rec.confidence == 1.0
        assert rec.rationale["basis"] == "red_flag"

    def test_collecting_session_rejected(self, world, engine):
        _, _, ontology, _ = world
        session = engine.start_session(40, "female", [concept(ontology, "S_husten")])
        with pytest.raises(SessionError):
            engine.recommend(session)

    def test_unanimous_evidence_full_confidence(self, world, engine, monkeypatch):
        _, _, ontology, _ = world
        session = engine.start_session(30, "female", [concept(ontology, "S_schnupfen")])
        session.status = CONCLUDED
        monkeypatch.setattr(
            engine,
            "_evidence_masses",
            lambda s: ({"high": 0.0, "medium": 0.0, "low": 3.5}, [("case-000001", 3.5)]),
        )
        rec = engine.recommend(session)
        assert rec.risk == "low"
        assert rec.confidence == 1.0

    def test_confident_majority_not_raised(self, world, engine, monkeypatch):
        _, _, ontology, _ = world
        session = engine.start_session(30, "female", [concept(ontology, "S_schnupfen")])
        session.status = CONCLUDED
        monkeypatch.setattr(
            engine,
            "_evidence_masses",
            lambda s: (
                {"high": 0.7, "medium": 0.2, "low": 0.1},
                [("case-000001", 0.7), ("case-000002", 0.2), ("case-000003", 0.1)],
            ),
        )
        rec = engine.recommend(session)
        assert rec.risk == "high"
        assert abs(rec.confidence - 0.7) < 1e-12
        assert rec.rationale["raised"] is False

    def test_low_confidence_raises_one_level(self, world, engine, monkeypatch):
        _, _, ontology, _ = world
        session = engine.start_session(30, "female", [concept(ontology, "S_schnupfen")])
        session.status = CONCLUDED
        monkeypatch.setattr(
            engine,
            "_evidence_masses",
            lambda s: (
                {"low": 0.5, "medium": 0.3, "high": 0.2},
                [("case-000001", 0.5), ("case-000002", 0.3), ("case-000003", 0.2)],
            ),
        )
        rec = engine.recommend(session)
        assert rec.rationale["argmax"] == "low"
        assert rec.risk == "medium"
        assert abs(rec.confidence - 0.5) < 1e-12
        assert rec.rationale["raised"] is True

    def test_masses_sum_to_evidence_total(self, world, engine):
        _, records, ontology, _ = world
        record = records[0]
        session, rec = engine.run_scripted(
            record.age,
            record.gender,
            scripted_initials(record, ontology),
            oracle_answers(record, ontology),
        )
        if rec.rationale["basis"] == "similarity":
            total_mass = sum(rec.rationale["masses"].values())
            evidence_mass = sum(score for _, score in rec.evidence)
            assert abs(total_mass - evidence_mass) < 1e-9
            assert 0.0 <= rec.confidence <= 1.0

    def test_evidence_shares_affirmed_concept(self, world, engine):
        _, records, ontology, kg = world
        import oracles

        record = next(r for r in records if r.label.risk == "low")
        session, rec = engine.run_scripted(
            record.age,
            record.gender,
            scripted_initials(record, ontology),
            oracle_answers(record, ontology),
        )
        by_id = {r.id: r for r in records}
        for cid, _score in rec.evidence:
            shared = oracles.present_concepts(by_id[cid], ontology) & set(session.affirmed)
            assert shared, f"evidence case {cid} shares no affirmed concept"

    def test_determinism(self, world, engine):
        _, records, ontology, _ = world
        record = records[10]
        runs = [
            engine.run_scripted(
                record.age,
                record.gender,
                scripted_initials(record, ontology),
                oracle_answers(record, ontology),
            )[1]
            for _ in range(3)
        ]
        assert runs[0] == runs[1] == runs[2]

    def test_safety_monotonicity(self, world, engine):
        _, _, ontology, _ = world
        base = engine.start_session(45, "male", [concept(ontology, "S_husten")])
        base.status = CONCLUDED
        base_risk = engine.recommend(base).risk
        escalated = engine.start_session(
            45, "male", [concept(ontology, "S_husten"), concept(ontology, "S_bluthusten")]
        )
        rec = engine.recommend(escalated)
        assert triage_mod.RISK_ORDER[rec.risk] >= triage_mod.RISK_ORDER[base_risk]


class TestMetrics:
    def test_perfect_engine(self):
        confusion = {("high", "high"): 5, ("medium", "medium"): 7, ("low", "low"): 9}
        metrics = metrics_from_confusion(confusion)
        for risk in ("high", "medium", "low"):
            assert metrics.per_class[risk]["precision"] == 1.0
            assert metrics.per_class[risk]["recall"] == 1.0
            assert metrics.per_class[risk]["f_score"] == 1.0
        assert metrics.emergency_recall == 1.0

    def test_always_high_on_balanced_set(self):
        confusion = {("high", "high"): 10, ("medium", "high"): 10, ("low", "high"): 10}
        metrics = metrics_from_confusion(confusion)
        assert metrics.per_class["high"]["recall"] == 1.0
        assert abs(metrics.per_class["high"]["precision"] - 1 / 3) < 1e-12
        assert metrics.per_class["low"]["recall"] == 0.0

    def test_empty_ground_truth_rejected(self, engine):
        with pytest.raises(DataError):
            evaluate_recommendations(engine, [])

    def test_emergency_recall_on_planted_set(self, world, engine):
        profile, _, _, _ = world
        truth = corpus_mod.generate_corpus(profile, 120, seed=77)
        metrics = evaluate_recommendations(engine, truth)
        assert metrics.emergency_recall == 1.0
        assert metrics.n == 120


class TestPruningSoundness:
    def test_random_scripted_sessions(self, world, engine):
        _, _, ontology, _ = world
        rng = random.Random(2024)
        starters = [
            concept(ontology, c)
            for c in ("S_fieber", "S_husten", "S_uebelkeit", "S_kopfschmerz", "S_durchfall")
        ]
        for i in range(60):
            session = engine.start_session(
                rng.randint(5, 85), rng.choice(["female", "male"]), [rng.choice(starters)]
            )
            denied_closure: set[str] = set()
            while session.status == COLLECTING:
                q = engine.ask_next(session)
                if q is None:
                    break
                assert q not in denied_closure, "asked a descendant of a denied concept"
                if rng.random() < 0.6:
                    engine.answer(session, q, "no")
                    denied_closure |= {q} | ontology.descendants(q)
                else:
                    engine.answer(session, q, "yes")
            session.check()
