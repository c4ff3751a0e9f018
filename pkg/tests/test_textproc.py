"""Text pipeline: preprocessing, abbreviations, NER, negation, rule relations."""

import pytest

from triagekit.textproc import (
    AbbreviationTable,
    DictEntry,
    MedicalDictionary,
    TextPipeline,
    detect_entities,
    detect_negation,
    expand_abbreviations,
    extract_relations_rules,
    normalize_word,
    preprocess,
    render,
)


@pytest.fixture(scope="module")
def pipe() -> TextPipeline:
    return TextPipeline.default()


def _mini_dictionary(entries):
    return MedicalDictionary([DictEntry(cid, canonical, stype, frozenset(flags), tuple(syns))
                              for cid, canonical, stype, flags, syns in entries])


class TestPreprocess:
    def test_delimiter_and_sentence_split(self):
        sentences = preprocess("Fieber; Husten.")
        assert len(sentences) == 1
        assert sentences[0].normalized() == ["fieber", "husten"]
        # the ";" position stays visible for scope rules
        assert sentences[0].delimiter_positions == frozenset({1})

    def test_transliteration(self):
        (sentence,) = preprocess("müde")
        assert sentence.normalized() == ["muede"]
        assert normalize_word("Straße") == "strasse"

    def test_empty_input(self):
        assert preprocess("") == []
        assert preprocess(" .. ; ") == []

    def test_non_alnum_dropped(self):
        (sentence,) = preprocess("Magen-Darm grippe!")
        assert sentence.normalized() == ["magendarm", "grippe"]

    def test_stopwords_removed(self):
        (sentence,) = preprocess("fieber und husten", stopwords=frozenset({"und"}))
        assert sentence.normalized() == ["fieber", "husten"]
        # dropped units leave an index gap, order stays strictly increasing
        assert [t.index for t in sentence] == [0, 2]

    def test_corrections_applied(self):
        (sentence,) = preprocess("fiber", corrections={"fiber": "fieber"})
        assert sentence.normalized() == ["fieber"]

    def test_idempotence(self, pipe):
        text = "Kein Fieber, seit gestern Husten. Schmerz im Bein!"
        first = pipe.sentences(text)
        second = pipe.sentences(render(first))
        assert [s.normalized() for s in first] == [s.normalized() for s in second]


class TestAbbreviations:
    TABLE = AbbreviationTable([
        ("op", "operation", frozenset()),
        ("bs", "bauchschmerz", frozenset({"durchfall"})),
        ("bs", "brustschmerz", frozenset({"atemnot"})),
    ])

    def test_unconditional_expansion(self):
        (sentence,) = preprocess("knie op")
        out = expand_abbreviations(sentence, self.TABLE)
        assert out.normalized() == ["knie", "operation"]

    def test_ambiguous_with_trigger(self):
        (sentence,) = preprocess("bs und durchfall", stopwords=frozenset({"und"}))
        out = expand_abbreviations(sentence, self.TABLE)
        assert out.normalized() == ["bauchschmerz", "durchfall"]

    def test_ambiguous_other_trigger(self):
        (sentence,) = preprocess("bs atemnot")
        out = expand_abbreviations(sentence, self.TABLE)
        assert out.normalized() == ["brustschmerz", "atemnot"]

    def test_ambiguous_without_trigger_flagged(self):
        (sentence,) = preprocess("bs fieber")
        out = expand_abbreviations(sentence, self.TABLE)
        assert out.normalized() == ["bs", "fieber"]
        assert out[0].ambiguous_abbrev is True

    def test_multiword_expansion_reindexes(self):
        table = AbbreviationTable([("mdg", "magen darm grippe", frozenset())])
        (sentence,) = preprocess("mdg, fieber")
        out = expand_abbreviations(sentence, table)
        assert out.normalized() == ["magen", "darm", "grippe", "fieber"]
        indices = [t.index for t in out]
        assert indices == sorted(indices) and len(set(indices)) == len(indices)
        assert out.has_delimiter_between(out[2].index, out[3].index)


class TestEntities:
    def test_longest_match_wins(self):
        dictionary = _mini_dictionary([
            ("C_abdominal_pain", "bauch schmerz", "symptom", (), ()),
            ("C_abdomen", "bauch", "anatomy", (), ()),
        ])
        (sentence,) = preprocess("bauch schmerz")
        mentions = detect_entities(sentence, dictionary)
        assert [m.concept_id for m in mentions] == ["C_abdominal_pain"]

    def test_layman_and_technical_share_concept(self, pipe):
        (s1,) = pipe.sentences("bauchweh")
        (s2,) = pipe.sentences("abdominalschmerz")
        m1 = detect_entities(s1, pipe.dictionary)
        m2 = detect_entities(s2, pipe.dictionary)
        assert m1[0].concept_id == m2[0].concept_id == "S_bauchschmerz"

    def test_no_hit(self, pipe):
        (sentence,) = pipe.sentences("xyzzy plugh")
        assert detect_entities(sentence, pipe.dictionary) == []

    def test_no_match_across_delimiter(self):
        dictionary = _mini_dictionary([("C_ap", "bauch schmerz", "symptom", (), ())])
        (sentence,) = preprocess("bauch, schmerz")
        assert detect_entities(sentence, dictionary) == []

    def test_spans_never_overlap(self, pipe):
        for text in ("magen darm grippe und bauchschmerz", "schmerz im bein , beinschmerz"):
            (sentence,) = pipe.sentences(text)
            mentions = detect_entities(sentence, pipe.dictionary)
            spans = sorted((m.start, m.end) for m in mentions)
            for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
                assert e1 <= s2


class TestNegation:
    def _polarities(self, pipe, text):
        (sentence,) = pipe.sentences(text)
        mentions = detect_entities(sentence, pipe.dictionary)
        mentions = detect_negation(
            sentence, mentions,
            negation_triggers=pipe.negation_triggers,
            historical_triggers=pipe.historical_triggers,
        )
        return {m.concept_id: m.polarity for m in mentions}

    def test_adjacent_trigger_negates(self, pipe):
        assert self._polarities(pipe, "kein fieber") == {"S_fieber": "negated"}

    def test_delimiter_blocks_scope(self, pipe):
        got = self._polarities(pipe, "fieber , kein husten")
        assert got == {"S_fieber": "present", "S_husten": "negated"}

    def test_no_trigger_all_present(self, pipe):
        got = self._polarities(pipe, "fieber husten schnupfen")
        assert set(got.values()) == {"present"}

    def test_trigger_after_mention(self, pipe):
        assert self._polarities(pipe, "fieber verneint") == {"S_fieber": "negated"}

    def test_window_limit(self, pipe):
        # trigger 5 tokens away from the span is out of the default W=4 window
        got = self._polarities(pipe, "kein qq ww ee rr fieber")
        assert got == {"S_fieber": "present"}

    def test_historical_trigger(self, pipe):
        assert self._polarities(pipe, "frueher migraene") == {"D_migraene": "historical"}

    def test_historical_pattern_vor_n_tagen(self, pipe):
        assert self._polarities(pipe, "vor 3 tagen fieber") == {"S_fieber": "historical"}

    def test_negation_beats_historical(self, pipe):
        assert self._polarities(pipe, "frueher kein fieber") == {"S_fieber": "negated"}

    def test_deterministic(self, pipe):
        runs = {tuple(sorted(self._polarities(pipe, "kein fieber , husten").items())) for _ in range(5)}
        assert len(runs) == 1


class TestRuleRelations:
    def _relations(self, pipe, text):
        out = []
        for _sentence, _mentions, relations in pipe.annotate(text):
            out.extend((r.e1.concept_id, r.relation, r.e2.concept_id) for r in relations)
        return out

    def test_pain_in_the_leg(self, pipe):
        assert self._relations(pipe, "schmerz im bein") == [("S_schmerz", "located_in", "A_bein")]

    def test_abscess_on_the_arm(self):
        dictionary = _mini_dictionary([
            ("C_abszess", "abszess", "disease", (), ()),
            ("C_arm", "arm", "anatomy", (), ()),
        ])
        pipe = TextPipeline(dictionary=dictionary)
        (sentence,) = pipe.sentences("abszess am arm")
        mentions = detect_entities(sentence, dictionary)
        relations = extract_relations_rules(sentence, mentions, dictionary)
        assert [(r.e1.concept_id, r.relation, r.e2.concept_id) for r in relations] == [
            ("C_abszess", "located_in", "C_arm")
        ]

    def test_distance_gate(self, pipe):
        text = "schwellung qq ww ee rr knie"  # 4 tokens between > D=3
        assert self._relations(pipe, text) == []

    def test_delimiter_blocks_pair(self, pipe):
        assert self._relations(pipe, "schwellung , knie") == []

    def test_rule_precision_on_planted_corpus(self, pipe):
        from triagekit import corpus as corpus_mod

        profile = corpus_mod.GeneratorProfile.load()
        records = corpus_mod.generate_corpus(profile, 300, seed=11)
        for record in records:
            truth = {(m.concept_id, m.body_location) for m in record.mentions if m.body_location}
            for _s, _m, relations in pipe.annotate(record.text):
                for r in relations:
                    assert (r.e1.concept_id, r.e2.concept_id) in truth
