"""Rankers, masked prediction, Acc@k evaluation and question pruning."""

import math

import numpy as np
import pytest

import oracles
from triagekit import corpus as corpus_mod
from triagekit import qgen
from triagekit.errors import ConfigurationError, DataError
from triagekit.kg import build_graph
from triagekit.ontology import build_ontology
from triagekit.qgen import (
    ALL_RANKERS,
    BimRanker,
    CandidateGates,
    FrequencyRanker,
    MaskedExample,
    PredictorConfig,
    RankerMethod,
    bim_score,
    build_masked_eval,
    build_relevant_set,
    chi_score,
    concept_frequencies,
    eval_acc_at_k,
    kld_score,
    next_question,
    question_candidates,
    rank_frequency,
    rsv_score,
    sample_mask,
    smoothed,
    train_masked_predictor,
)
from triagekit.textproc import TextPipeline


@pytest.fixture(scope="module")
def pipe():
    return TextPipeline.default()


@pytest.fixture(scope="module")
def world(pipe):
    profile = corpus_mod.GeneratorProfile.load()
    records = corpus_mod.generate_corpus(profile, 300, seed=23)
    ontology = build_ontology(records, pipe.dictionary)
    kg = build_graph(records, ontology)
    return records, ontology, kg


class TestFormulas:
    def test_bim_worked_value(self):
        assert abs(bim_score(0.8, 0.2) - math.log(16)) < 1e-9
        assert abs(bim_score(0.8, 0.2) - 2.7726) < 5e-5

    def test_bim_antisymmetry(self):
        assert abs(bim_score(0.2, 0.8) + bim_score(0.8, 0.2)) < 1e-12

    def test_bim_zero_when_equal(self):
        assert bim_score(0.3, 0.3) == 0.0

    def test_chi_worked_values(self):
        assert abs(chi_score(0.4, 0.1) - math.log(0.09 / 0.1)) < 1e-9
        assert abs(chi_score(0.4, 0.1) + 0.1054) < 5e-5
        assert abs(chi_score(0.1, 0.4) - math.log(0.09 / 0.4)) < 1e-9

    def test_chi_minimal_at_equal_probabilities(self):
        p_n = 0.25
        equal = chi_score(p_n, p_n)
        for p_r in (0.05, 0.1, 0.2, 0.3, 0.6):
            assert equal < chi_score(p_r, p_n)

    def test_kld_worked_values(self):
        assert kld_score(0.3, 0.3) == 0.0
        assert abs(kld_score(0.5, 0.25) - 0.5 * math.log(2)) < 1e-9
        assert abs(kld_score(0.25, 0.5) + 0.25 * math.log(2)) < 1e-9

    def test_rsv_worked_values(self):
        assert rsv_score(0.0, 0.9, 0.1) == 0.0
        assert abs(rsv_score(1.0, 1.0, 0.1) - 0.9) < 1e-12
        # linearity in the term weights
        assert rsv_score(2.0, 0.7, 0.2) == 2 * rsv_score(1.0, 0.7, 0.2)

    def test_smoothing_keeps_probabilities_interior(self):
        assert 0.0 < smoothed(0, 50) < smoothed(50, 50) < 1.0


class TestRelevantSet:
    def test_frequency_counts(self, world):
        records, ontology, kg = world
        fieber = ontology.resolve("S_fieber")
        with_f = [r.id for r in records if fieber in oracles.present_concepts(r, ontology)]
        rel = build_relevant_set(kg, with_f[:3] + [r.id for r in records if r.id not in with_f][:2])
        assert rank_frequency(fieber, rel) == 3.0

    def test_absent_concept_zero(self, world):
        records, ontology, kg = world
        rel = build_relevant_set(kg, [records[0].id])
        absent = ontology.resolve("S_hodenschmerz")
        if absent not in oracles.present_concepts(records[0], ontology):
            assert rank_frequency(absent, rel) == 0.0

    def test_empty_relevant_set_rejected(self, world):
        _, _, kg = world
        with pytest.raises(DataError):
            build_relevant_set(kg, [])


class TestRankersAgainstOracle:
    def test_all_rankers_match_brute_force(self, world):
        records, ontology, kg = world
        relevant = records[:40]
        rel = build_relevant_set(kg, [r.id for r in relevant])

        def weight_fn(concept):
            node_type, local = kg.concept_node(concept)
            return float(kg.weights.vector(node_type)[local])

        scores = {ranker.name: ranker().score_all(rel) for ranker in ALL_RANKERS}
        checked = 0
        for node_type in ("symptom", "disease"):
            for concept in kg.nodes.payloads[node_type]:
                want = oracles.ranker_scores(concept, relevant, records, ontology, weight_fn)
                for name, got in scores.items():
                    assert abs(got[concept] - want[name]) < 1e-9, (name, concept)
                checked += 1
        assert checked > 30


class TestMaskedEval:
    def test_inverse_probability_prefers_rare(self):
        freqs = {"A": 100, "B": 1}
        rng = np.random.default_rng(0)
        draws = [sample_mask(("A", "B"), freqs, rng) for _ in range(5000)]
        rate_b = draws.count("B") / len(draws)
        assert abs(rate_b - 100 / 101) < 0.02

    def test_uniform_when_equal_frequencies(self):
        freqs = {"A": 5, "B": 5, "C": 5}
        rng = np.random.default_rng(1)
        draws = [sample_mask(("A", "B", "C"), freqs, rng) for _ in range(9000)]
        for c in "ABC":
            assert abs(draws.count(c) / len(draws) - 1 / 3) < 0.03

    def test_single_concept_case_skipped(self, world):
        records, ontology, _ = world
        singles = [r for r in records if len(qgen.case_concepts(r, ontology)) == 1]
        freqs = concept_frequencies(records, ontology)
        examples, skipped = build_masked_eval(records, ontology, freqs, seed=3)
        assert skipped == len(singles)
        assert len(examples) + skipped == len(records)

    def test_deterministic(self, world):
        records, ontology, _ = world
        freqs = concept_frequencies(records, ontology)
        a, _ = build_masked_eval(records, ontology, freqs, seed=9)
        b, _ = build_masked_eval(records, ontology, freqs, seed=9)
        assert a == b

    def test_target_never_in_input(self, world):
        records, ontology, _ = world
        freqs = concept_frequencies(records, ontology)
        examples, _ = build_masked_eval(records, ontology, freqs, seed=4)
        for e in examples:
            assert e.target not in e.input_concepts
            assert e.input_concepts


class TestMaskedPredictor:
    def _paired_records(self, pipe, n=300):
        # concept A always co-occurs with B inside each template
        pairs = [
            ("S_fieber", "S_husten"),
            ("S_durchfall", "S_erbrechen"),
            ("S_kopfschmerz", "S_schwindel"),
        ]
        label = corpus_mod.RecommendationLabel("low", "self_care", "unscheduled")
        records = []
        for i in range(n):
            a, b = pairs[i % len(pairs)]
            records.append(
                corpus_mod.CaseRecord(
                    id=f"p-{i:04d}",
                    age=30,
                    gender="female",
                    mentions=(
                        corpus_mod.CaseMention(a),
                        corpus_mod.CaseMention(b),
                    ),
                    text="konstruiert",
                    label=label,
                )
            )
        ontology = build_ontology(records, pipe.dictionary)
        return records, ontology

    def test_planted_cooccurrence_learned(self, pipe):
        records, ontology = self._paired_records(pipe)
        predictor, history = train_masked_predictor(
            records[:240], records[240:], ontology,
            PredictorConfig(epochs=30, learning_rate=5e-3, seed=1),
        )
        fieber = ontology.resolve("S_fieber")
        husten = ontology.resolve("S_husten")
        probs = predictor.scores([fieber])
        assert predictor.vocab[int(np.argmax(probs))] == husten
        assert probs[predictor.index[husten]] > 0.9
        assert history[-1]["train_loss"] < history[0]["train_loss"]

    def test_untrained_outputs_near_uniform(self, pipe):
        records, ontology = self._paired_records(pipe)
        predictor, _ = train_masked_predictor(
            records[:240], records[240:], ontology, PredictorConfig(epochs=0, seed=1)
        )
        probs = predictor.scores([predictor.vocab[0]])
        assert probs.max() < 5.0 / len(predictor.vocab)

    def test_deterministic_under_seed(self, pipe):
        records, ontology = self._paired_records(pipe, n=120)
        cfg = PredictorConfig(epochs=3, seed=7)
        a, _ = train_masked_predictor(records[:100], records[100:], ontology, cfg)
        b, _ = train_masked_predictor(records[:100], records[100:], ontology, cfg)
        np.testing.assert_array_equal(a.w1, b.w1)
        np.testing.assert_array_equal(a.w2, b.w2)

    def test_vocabulary_mismatch_rejected(self, pipe, world):
        paired_records, _ = self._paired_records(pipe, n=60)
        records, ontology, _ = world
        with pytest.raises(DataError):
            train_masked_predictor(paired_records[:50], records[:20], ontology)


class _PerfectMethod:
    """Knows every answer; for metric arithmetic tests only."""

    def __init__(self, mapping):
        self.mapping = mapping

    def rank_concepts(self, input_concepts):
        return [self.mapping[tuple(input_concepts)]]


class TestAccAtK:
    def test_perfect_method(self):
        examples = [MaskedExample(("a",), "b"), MaskedExample(("b",), "a")]
        method = _PerfectMethod({("a",): "b", ("b",): "a"})
        assert eval_acc_at_k(method, examples, (1,)) == {1: 1.0}

    def test_k_validation(self):
        with pytest.raises(ConfigurationError):
            eval_acc_at_k(_PerfectMethod({}), [MaskedExample(("a",), "b")], (0,))

    def test_empty_eval_set(self):
        with pytest.raises(DataError):
            eval_acc_at_k(_PerfectMethod({}), [], (1,))

    def test_ranker_method_runs(self, world):
        records, ontology, kg = world
        freqs = concept_frequencies(records, ontology)
        examples, _ = build_masked_eval(records[:60], ontology, freqs, seed=2)
        method = RankerMethod(kg, FrequencyRanker(), retrieval_k=20)
        accs = eval_acc_at_k(method, examples, (1, 5, 10))
        assert 0.0 <= accs[1] <= accs[5] <= accs[10] <= 1.0


class TestQuestionSelection:
    def test_denied_parent_prunes_descendants(self, world):
        _, ontology, kg = world
        bauch = ontology.resolve("S_bauchschmerz")
        vocab = [c for t in ("symptom", "disease") for c in kg.nodes.payloads[t]]
        candidates = question_candidates(
            ontology, vocab, affirmed=[], denied=[bauch], asked=[]
        )
        blocked = ontology.descendants(bauch) | {bauch}
        assert not set(candidates) & blocked
        assert ontology.resolve("S_oberbauchschmerz") in blocked

    def test_gender_gate(self, world):
        _, ontology, kg = world
        vocab = [c for t in ("symptom", "disease") for c in kg.nodes.payloads[t]]
        male_gated = question_candidates(
            ontology, vocab, affirmed=[], denied=[], asked=[],
            gates=CandidateGates(gender="male"),
        )
        regel = ontology.resolve("S_regelschmerz")
        hoden = ontology.resolve("S_hodenschmerz")
        assert regel not in male_gated
        assert hoden in male_gated
        female_gated = question_candidates(
            ontology, vocab, affirmed=[], denied=[], asked=[],
            gates=CandidateGates(gender="female"),
        )
        assert hoden not in female_gated

    def test_age_gate(self, world):
        _, ontology, kg = world
        vocab = [c for t in ("symptom", "disease") for c in kg.nodes.payloads[t]]
        child = question_candidates(
            ontology, vocab, affirmed=[], denied=[], asked=[], gates=CandidateGates(age=9)
        )
        assert ontology.resolve("D_herzinfarkt") not in child

    def test_exhausted_candidates_return_none(self, world):
        _, ontology, kg = world
        vocab = [c for t in ("symptom", "disease") for c in kg.nodes.payloads[t]]
        fieber = ontology.resolve("S_fieber")
        out = next_question(
            kg, ontology, BimRanker(), affirmed=[fieber], asked=vocab, budget_remaining=5
        )
        assert out is None

    def test_budget_exhausted_returns_none(self, world):
        _, ontology, kg = world
        fieber = ontology.resolve("S_fieber")
        assert (
            next_question(kg, ontology, BimRanker(), affirmed=[fieber], budget_remaining=0)
            is None
        )

    def test_empty_session_rejected(self, world):
        _, ontology, kg = world
        with pytest.raises(DataError):
            next_question(kg, ontology, BimRanker(), affirmed=[])

    def test_never_repeats_or_asks_known(self, world):
        records, ontology, kg = world
        fieber = ontology.resolve("S_fieber")
        asked: list[str] = []
        for _ in range(8):
            q = next_question(
                kg, ontology, BimRanker(), affirmed=[fieber], asked=asked, budget_remaining=10
            )
            if q is None:
                break
            assert q != fieber and q not in asked
            asked.append(q)

    def test_argmax_invariance(self, world):
        _, ontology, kg = world
        fieber = ontology.resolve("S_fieber")

        class ShiftedBim(BimRanker):
            def score_vector(self, rel, node_type):
                return super().score_vector(rel, node_type) + 1000.0

        class ScaledFrequency(FrequencyRanker):
            def score_vector(self, rel, node_type):
                return super().score_vector(rel, node_type) * 37.0

        base_bim = next_question(kg, ontology, BimRanker(), affirmed=[fieber])
        assert next_question(kg, ontology, ShiftedBim(), affirmed=[fieber]) == base_bim
        base_f = next_question(kg, ontology, FrequencyRanker(), affirmed=[fieber])
        assert next_question(kg, ontology, ScaledFrequency(), affirmed=[fieber]) == base_f
