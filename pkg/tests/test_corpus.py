"""Corpus generator, persistence and splitting."""

import pytest

from triagekit import corpus as corpus_mod
from triagekit.corpus import (
    CaseRecord,
    GeneratorProfile,
    RecommendationLabel,
    dumps_corpus,
    generate_corpus,
    load_corpus,
    save_corpus,
    split_corpus,
)
from triagekit.errors import ConfigurationError, ParseError, ValidationError


@pytest.fixture(scope="module")
def profile() -> GeneratorProfile:
    return GeneratorProfile.load()


class TestGenerate:
    def test_empty(self, profile):
        assert generate_corpus(profile, 0, seed=7) == []

    def test_deterministic(self, profile):
        a = generate_corpus(profile, 100, seed=7)
        b = generate_corpus(profile, 100, seed=7)
        assert a == b
        assert dumps_corpus(a) == dumps_corpus(b)

    def test_seed_changes_output(self, profile):
        assert generate_corpus(profile, 50, seed=1) != generate_corpus(profile, 50, seed=2)

    def test_red_flag_probability_one(self, profile):
        rf_labels = {
            t.label for t in profile.templates if t.red_flag_probability == 1.0
        }
        assert rf_labels, "profile must plant red-flag templates"
        records = generate_corpus(profile, 400, seed=3)
        hit_any = False
        for record in records:
            if record.label not in rf_labels:
                continue
            hit_any = True
            flags = [
                profile.dictionary.flags(m.concept_id)
                for m in record.mentions
                if m.polarity == "present"
            ]
            assert any("red_flag" in f for f in flags), record.id
        assert hit_any

    def test_labels_follow_templates(self, profile):
        template_labels = {t.label for t in profile.templates}
        for record in generate_corpus(profile, 200, seed=5):
            assert record.label in template_labels

    def test_gender_gates_respected(self, profile):
        for record in generate_corpus(profile, 400, seed=9):
            for m in record.mentions:
                flags = profile.dictionary.flags(m.concept_id)
                if "female_only" in flags:
                    assert record.gender == "female"
                if "male_only" in flags:
                    assert record.gender == "male"

    def test_invalid_profile_rejected(self, profile):
        broken = GeneratorProfile(
            templates=[],
            noise=profile.noise,
            fillers=profile.fillers,
            dictionary=profile.dictionary,
            abbreviations=profile.abbreviations,
        )
        with pytest.raises(ConfigurationError):
            generate_corpus(broken, 10, seed=0)

    def test_negative_n_rejected(self, profile):
        with pytest.raises(ConfigurationError):
            generate_corpus(profile, -1, seed=0)

    def test_profile_requires_every_risk_class(self, profile):
        from dataclasses import replace

        low_only = GeneratorProfile(
            templates=[t for t in profile.templates if t.label.risk == "low"],
            noise=profile.noise,
            fillers=profile.fillers,
            dictionary=profile.dictionary,
            abbreviations=profile.abbreviations,
        )
        with pytest.raises(ConfigurationError, match="risk classes"):
            low_only.validate()

    def test_probability_out_of_range_rejected(self, profile):
        from dataclasses import replace

        template = profile.templates[0]
        broken_template = replace(
            template,
            symptoms=(replace(template.symptoms[0], prob=1.5), *template.symptoms[1:]),
        )
        broken = GeneratorProfile(
            templates=[broken_template, *profile.templates[1:]],
            noise=profile.noise,
            fillers=profile.fillers,
            dictionary=profile.dictionary,
            abbreviations=profile.abbreviations,
        )
        with pytest.raises(ConfigurationError, match="outside"):
            broken.validate()


class TestPersistence:
    def test_round_trip(self, profile, tmp_path):
        records = generate_corpus(profile, 40, seed=13)
        path = tmp_path / "corpus.jsonl"
        save_corpus(records, path)
        assert load_corpus(path, profile.dictionary) == records
        # file-level identity: save(load(x)) == x
        again = tmp_path / "again.jsonl"
        save_corpus(load_corpus(path), again)
        assert again.read_bytes() == path.read_bytes()

    def test_well_formed_file(self, profile, tmp_path):
        records = generate_corpus(profile, 3, seed=1)
        path = tmp_path / "three.jsonl"
        save_corpus(records, path)
        assert len(load_corpus(path)) == 3

    def test_malformed_line_reports_number(self, profile, tmp_path):
        records = generate_corpus(profile, 2, seed=1)
        path = tmp_path / "bad.jsonl"
        path.write_text(dumps_corpus(records) + "{not json\n", encoding="utf-8")
        with pytest.raises(ParseError) as exc:
            load_corpus(path)
        assert exc.value.line == 3

    def test_age_out_of_range_names_record(self, profile, tmp_path):
        record = generate_corpus(profile, 1, seed=1)[0]
        d = record.to_dict()
        d["age"] = 200
        path = tmp_path / "age.jsonl"
        path.write_text(__import__("json").dumps(d) + "\n", encoding="utf-8")
        with pytest.raises(ValidationError, match=record.id):
            load_corpus(path)


class TestSplit:
    def _records(self, profile, n):
        return generate_corpus(profile, n, seed=21)

    def test_paper_nlp_split(self, profile):
        parts = split_corpus(self._records(profile, 100), [0.6, 0.1, 0.3], seed=1)
        assert [len(p) for p in parts] == [60, 10, 30]

    def test_paper_interaction_split(self, profile):
        parts = split_corpus(self._records(profile, 100), [0.7, 0.1, 0.2], seed=1)
        assert [len(p) for p in parts] == [70, 10, 20]

    def test_largest_remainder_single_record(self, profile):
        parts = split_corpus(self._records(profile, 1), [0.5, 0.5], seed=1)
        assert [len(p) for p in parts] == [1, 0]

    def test_partition_property(self, profile):
        records = self._records(profile, 97)
        parts = split_corpus(records, [0.7, 0.1, 0.2], seed=5)
        ids = [r.id for p in parts for r in p]
        assert sorted(ids) == sorted(r.id for r in records)
        assert len(set(ids)) == len(ids)

    def test_deterministic(self, profile):
        records = self._records(profile, 50)
        a = split_corpus(records, [0.5, 0.5], seed=3)
        b = split_corpus(records, [0.5, 0.5], seed=3)
        assert a == b

    def test_bad_ratios(self, profile):
        records = self._records(profile, 10)
        with pytest.raises(ConfigurationError):
            split_corpus(records, [0.5, 0.6], seed=1)
        with pytest.raises(ConfigurationError):
            split_corpus(records, [1.0, -0.0000001], seed=1)


class TestLabelInvariants:
    def test_high_requires_immediate(self):
        with pytest.raises(ValidationError):
            RecommendationLabel("high", "emergency_call", "within_24h").validate()

    def test_low_time_frames(self):
        with pytest.raises(ValidationError):
            RecommendationLabel("low", "self_care", "immediate").validate()
        RecommendationLabel("low", "self_care", "unscheduled").validate()
