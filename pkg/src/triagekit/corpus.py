"""Case-record data model, seeded synthetic corpus generator, JSONL
persistence and deterministic splitting.

The generator substitutes for a confidential teleconsultation corpus: each
condition template plants a known symptom distribution, demographic prior and
ground-truth recommendation so downstream metrics can be checked against a
known structure. Free text is rendered from the sampled mentions through the
shipped synonym/abbreviation/misspelling tables, so the NLP pipeline can be
validated mention-for-mention.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigurationError, ParseError, ValidationError
from . import textproc
from .textproc import AbbreviationTable, MedicalDictionary, data_path

SCHEMA_VERSION = 1

GENDERS = ("female", "male", "other")
RISKS = ("high", "medium", "low")
POINTS_OF_CARE = ("emergency_call", "teleconsultation", "physical_visit", "self_care")
TIME_FRAMES = ("immediate", "within_24h", "within_week", "unscheduled")
POLARITIES = ("present", "negated", "historical")

PRNG_ALGORITHM = "mersenne_twister"  # stdlib random.Random; fixed for reproducibility

_NEGATION_SURFACES = ("kein", "keine", "nicht", "ohne")
_CONNECTIVE_SURFACES = ("im", "am", "an")
_HISTORICAL_SURFACES = ("frueher", "damals")


@dataclass(frozen=True)
class RecommendationLabel:
    risk: str
    point_of_care: str
    time_frame: str

    def validate(self) -> None:
        if self.risk not in RISKS:
            raise ValidationError(f"unknown risk {self.risk!r}")
        if self.point_of_care not in POINTS_OF_CARE:
            raise ValidationError(f"unknown point_of_care {self.point_of_care!r}")
        if self.time_frame not in TIME_FRAMES:
            raise ValidationError(f"unknown time_frame {self.time_frame!r}")
        if self.risk == "high" and self.time_frame != "immediate":
            raise ValidationError("high risk requires time_frame=immediate")
        if self.risk == "low" and self.time_frame not in ("within_week", "unscheduled"):
            raise ValidationError("low risk requires within_week or unscheduled")

    def to_dict(self) -> dict:
        return {"risk": self.risk, "point_of_care": self.point_of_care, "time_frame": self.time_frame}

    @classmethod
    def from_dict(cls, d: dict) -> "RecommendationLabel":
        label = cls(d["risk"], d["point_of_care"], d["time_frame"])
        label.validate()
        return label


@dataclass(frozen=True)
class CaseMention:
    concept_id: str
    polarity: str = "present"
    body_location: str | None = None

    def to_dict(self) -> dict:
        d = {"concept_id": self.concept_id, "polarity": self.polarity}
        if self.body_location is not None:
            d["body_location"] = self.body_location
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseMention":
        return cls(d["concept_id"], d.get("polarity", "present"), d.get("body_location"))


@dataclass(frozen=True)
class CaseRecord:
    id: str
    age: int
    gender: str
    mentions: tuple[CaseMention, ...]
    text: str
    label: RecommendationLabel

    def validate(self, dictionary: MedicalDictionary | None = None) -> None:
        if not (0 <= self.age <= 120):
            raise ValidationError(f"record {self.id}: age {self.age} out of range 0..120")
        if self.gender not in GENDERS:
            raise ValidationError(f"record {self.id}: unknown gender {self.gender!r}")
        if not self.mentions:
            raise ValidationError(f"record {self.id}: labeled record without mentions")
        for m in self.mentions:
            if m.polarity not in POLARITIES:
                raise ValidationError(f"record {self.id}: unknown polarity {m.polarity!r}")
            if dictionary is not None:
                if m.concept_id not in dictionary:
                    raise ValidationError(f"record {self.id}: unknown concept {m.concept_id}")
                if m.body_location is not None and m.body_location not in dictionary:
                    raise ValidationError(f"record {self.id}: unknown location {m.body_location}")
        try:
            self.label.validate()
        except ValidationError as exc:
            raise ValidationError(f"record {self.id}: {exc}") from exc

    def present_concepts(self) -> list[tuple[str, str | None]]:
        return [(m.concept_id, m.body_location) for m in self.mentions if m.polarity == "present"]

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "age": self.age,
            "gender": self.gender,
            "mentions": [m.to_dict() for m in self.mentions],
            "text": self.text,
            "label": self.label.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseRecord":
        return cls(
            id=d["id"],
            age=d["age"],
            gender=d["gender"],
            mentions=tuple(CaseMention.from_dict(m) for m in d["mentions"]),
            text=d["text"],
            label=RecommendationLabel.from_dict(d["label"]),
        )


@dataclass(frozen=True)
class MentionSpec:
    concept: str
    prob: float
    location: str | None = None
    location_pool: tuple[str, ...] = ()
    location_prob: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "MentionSpec":
        return cls(
            concept=d["concept"],
            prob=float(d["prob"]),
            location=d.get("location"),
            location_pool=tuple(d.get("location_pool", ())),
            location_prob=float(d.get("location_prob", 0.0)),
        )


@dataclass(frozen=True)
class ConditionTemplate:
    name: str
    weight: float
    label: RecommendationLabel
    red_flag_probability: float
    age_range: tuple[int, int]
    gender_weights: dict[str, float]
    condition: MentionSpec | None
    symptoms: tuple[MentionSpec, ...]
    negated: tuple[MentionSpec, ...]
    historical: tuple[MentionSpec, ...]


@dataclass
class GeneratorProfile:
    templates: list[ConditionTemplate]
    noise: dict[str, float]
    fillers: list[str]
    dictionary: MedicalDictionary
    abbreviations: AbbreviationTable
    reverse_corrections: dict[str, list[str]] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.templates:
            raise ConfigurationError("profile has no condition templates")
        risks_seen = set()
        for t in self.templates:
            t.label.validate()
            risks_seen.add(t.label.risk)
            for spec in (*t.symptoms, *t.negated, *t.historical):
                if not (0.0 <= spec.prob <= 1.0):
                    raise ConfigurationError(
                        f"template {t.name}: probability {spec.prob} for {spec.concept} outside [0,1]"
                    )
                if spec.concept not in self.dictionary:
                    raise ConfigurationError(f"template {t.name}: unknown concept {spec.concept}")
                for loc in filter(None, (spec.location, *spec.location_pool)):
                    if loc not in self.dictionary:
                        raise ConfigurationError(f"template {t.name}: unknown location {loc}")
            if not (0.0 <= t.red_flag_probability <= 1.0):
                raise ConfigurationError(f"template {t.name}: red_flag_probability outside [0,1]")
            if t.red_flag_probability > 0 and not any(
                "red_flag" in self.dictionary.flags(s.concept) for s in t.symptoms
            ):
                raise ConfigurationError(f"template {t.name}: red_flag_probability without a red-flag symptom")
            if not (0 <= t.age_range[0] <= t.age_range[1] <= 120):
                raise ConfigurationError(f"template {t.name}: bad age range {t.age_range}")
        missing = set(RISKS) - risks_seen
        if missing:
            raise ConfigurationError(f"profile lacks templates for risk classes {sorted(missing)}")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "GeneratorProfile":
        """Load a profile config; defaults to the shipped sample profile."""
        if path is None:
            path = data_path("profile_default.json")
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if raw.get("schema_version") != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported profile schema_version {raw.get('schema_version')}")
        if raw.get("prng", PRNG_ALGORITHM) != PRNG_ALGORITHM:
            raise ConfigurationError(f"unsupported prng {raw.get('prng')!r}")
        stopwords = textproc.load_wordlist(data_path("stopwords.txt"))
        corrections = textproc.load_corrections(data_path("corrections.tsv"))
        abbreviations = AbbreviationTable.load(data_path("abbreviations.tsv"))
        dictionary = MedicalDictionary.load(
            data_path("dictionary.tsv"),
            stopwords=stopwords,
            corrections=corrections,
            abbreviations=abbreviations,
        )
        templates = []
        for t in raw["templates"]:
            templates.append(
                ConditionTemplate(
                    name=t["name"],
                    weight=float(t.get("weight", 1.0)),
                    label=RecommendationLabel.from_dict(t["label"]),
                    red_flag_probability=float(t.get("red_flag_probability", 0.0)),
                    age_range=(int(t["age_range"][0]), int(t["age_range"][1])),
                    gender_weights=dict(t.get("gender_weights", {"female": 0.5, "male": 0.5})),
                    condition=MentionSpec.from_dict(t["condition"]) if t.get("condition") else None,
                    symptoms=tuple(MentionSpec.from_dict(s) for s in t["symptoms"]),
                    negated=tuple(MentionSpec.from_dict(s) for s in t.get("negated", ())),
                    historical=tuple(MentionSpec.from_dict(s) for s in t.get("historical", ())),
                )
            )
        reverse: dict[str, list[str]] = {}
        for wrong, right in sorted(corrections.items()):
            reverse.setdefault(right, []).append(wrong)
        profile = cls(
            templates=templates,
            noise=dict(raw.get("noise", {})),
            fillers=list(raw.get("fillers", ())),
            dictionary=dictionary,
            abbreviations=abbreviations,
            reverse_corrections=reverse,
        )
        profile.validate()
        return profile


def _gate_ok(flags: frozenset[str], age: int, gender: str) -> bool:
    if "female_only" in flags and gender != "female":
        return False
    if "male_only" in flags and gender != "male":
        return False
    if "adult_only" in flags and age < 18:
        return False
    if "child_only" in flags and age >= 18:
        return False
    return True


class _Renderer:
    """Turns sampled mentions into noisy free text, one clause per mention.

    Clauses within a sentence are always separated by ',' so negation scope
    and the short-distance relation rule cannot leak across clauses; that is
    what makes rule-relation precision checkable against the ground truth.
    """

    def __init__(self, profile: GeneratorProfile, rng: random.Random):
        self.profile = profile
        self.rng = rng
        self.unconditional_abbrev: dict[str, list[str]] = {}
        for abbrev, expansion in profile.abbreviations.unconditional().items():
            self.unconditional_abbrev.setdefault(textproc.normalize_word(expansion), []).append(abbrev)
        for v in self.unconditional_abbrev.values():
            v.sort()

    def surface(self, concept_id: str) -> str:
        entry = self.profile.dictionary[concept_id]
        noise = self.profile.noise
        surface = entry.canonical
        if entry.synonyms and self.rng.random() < noise.get("synonym_prob", 0.0):
            surface = self.rng.choice(list(entry.synonyms))
        if " " not in surface:
            norm = textproc.normalize_word(surface)
            abbrevs = self.unconditional_abbrev.get(norm)
            if abbrevs and self.rng.random() < noise.get("abbreviation_prob", 0.0):
                return self.rng.choice(abbrevs)
            misspellings = self.profile.reverse_corrections.get(norm)
            if misspellings and self.rng.random() < noise.get("misspelling_prob", 0.0):
                return self.rng.choice(misspellings)
        return surface

    def clause(self, mention: CaseMention) -> str:
        words = []
        if mention.polarity == "negated":
            words.append(self.rng.choice(_NEGATION_SURFACES))
        elif mention.polarity == "historical":
            if self.rng.random() < 0.5:
                words.append(f"vor {self.rng.randint(2, 30)} tagen")
            else:
                words.append(self.rng.choice(_HISTORICAL_SURFACES))
        elif self.rng.random() < self.profile.noise.get("filler_prob", 0.0) and self.profile.fillers:
            words.append(self.rng.choice(self.profile.fillers))
        words.append(self.surface(mention.concept_id))
        if mention.body_location is not None:
            words.append(self.rng.choice(_CONNECTIVE_SURFACES))
            words.append(self.surface(mention.body_location))
        return " ".join(words)

    def text(self, mentions: Sequence[CaseMention]) -> str:
        clauses = [self.clause(m) for m in mentions]
        self.rng.shuffle(clauses)
        sentences = []
        i = 0
        while i < len(clauses):
            take = min(self.rng.randint(1, 3), len(clauses) - i)
            chunk = clauses[i : i + take]
            sentence = " , ".join(chunk)
            sentences.append(sentence[0].upper() + sentence[1:] + ".")
            i += take
        return " ".join(sentences)


def generate_corpus(profile: GeneratorProfile, n: int, seed: int) -> list[CaseRecord]:
    """Generate exactly n records; identical (profile, n, seed) give identical
    output. Each record's mentions are drawn from its template and the free
    text is rendered from the mentions with synonym/abbreviation/misspelling
    noise."""
    profile.validate()
    if n < 0:
        raise ConfigurationError(f"n must be >= 0, got {n}")
    rng = random.Random(seed)
    renderer = _Renderer(profile, rng)
    weights = [t.weight for t in profile.templates]
    records = []
    for i in range(n):
        template = rng.choices(profile.templates, weights=weights, k=1)[0]
        age = rng.randint(*template.age_range)
        genders = [g for g in GENDERS if template.gender_weights.get(g, 0.0) > 0]
        gweights = [template.gender_weights[g] for g in genders]
        gender = rng.choices(genders, weights=gweights, k=1)[0]

        mentions: list[CaseMention] = []
        present_ids: set[str] = set()

        def sample_location(spec: MentionSpec) -> str | None:
            if spec.location is not None:
                return spec.location
            if spec.location_pool and rng.random() < spec.location_prob:
                return rng.choice(list(spec.location_pool))
            return None

        def add_present(spec: MentionSpec) -> None:
            loc = sample_location(spec)
            mentions.append(CaseMention(spec.concept, "present", loc))
            present_ids.add(spec.concept)

        specs = list(template.symptoms)
        if template.condition is not None:
            specs.append(template.condition)
        eligible: list[MentionSpec] = []
        for spec in specs:
            if not _gate_ok(profile.dictionary.flags(spec.concept), age, gender):
                continue
            eligible.append(spec)
            if rng.random() < spec.prob:
                add_present(spec)

        red_flags = [s for s in eligible if "red_flag" in profile.dictionary.flags(s.concept)]
        if red_flags and rng.random() < template.red_flag_probability:
            if not any("red_flag" in profile.dictionary.flags(c) for c in present_ids):
                add_present(red_flags[0])
        if not present_ids and eligible:
            add_present(max(eligible, key=lambda s: s.prob))

        for spec in template.negated:
            if spec.concept in present_ids:
                continue
            if not _gate_ok(profile.dictionary.flags(spec.concept), age, gender):
                continue
            if rng.random() < spec.prob:
                mentions.append(CaseMention(spec.concept, "negated"))
        for spec in template.historical:
            if spec.concept in present_ids:
                continue
            if not _gate_ok(profile.dictionary.flags(spec.concept), age, gender):
                continue
            if rng.random() < spec.prob:
                mentions.append(CaseMention(spec.concept, "historical"))

        record = CaseRecord(
            id=f"case-{i:06d}",
            age=age,
            gender=gender,
            mentions=tuple(mentions),
            text=renderer.text(mentions),
            label=template.label,
        )
        record.validate(profile.dictionary)
        records.append(record)
    return records


def template_of(profile: GeneratorProfile, record: CaseRecord) -> ConditionTemplate | None:
    """Best-effort template lookup by label (used by tests/stats)."""
    for t in profile.templates:
        if t.label == record.label:
            return t
    return None


def save_corpus(records: Iterable[CaseRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=True, separators=(",", ":")))
            fh.write("\n")


def dumps_corpus(records: Iterable[CaseRecord]) -> str:
    return "".join(
        json.dumps(r.to_dict(), ensure_ascii=True, separators=(",", ":")) + "\n" for r in records
    )


def load_corpus(path: str | Path, dictionary: MedicalDictionary | None = None) -> list[CaseRecord]:
    """Parse and validate a JSONL corpus; failures report the line number."""
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid record object: {exc.msg}", lineno) from exc
            if d.get("schema_version") != SCHEMA_VERSION:
                raise ParseError(f"unsupported schema_version {d.get('schema_version')}", lineno)
            try:
                record = CaseRecord.from_dict(d)
            except (KeyError, TypeError) as exc:
                raise ParseError(f"missing or malformed field: {exc}", lineno) from exc
            record.validate(dictionary)
            records.append(record)
    return records


def split_corpus(
    corpus: Sequence[CaseRecord], ratios: Sequence[float], seed: int
) -> list[list[CaseRecord]]:
    """Disjoint partitions covering the corpus; sizes follow largest-remainder
    rounding of the ratio shares; shuffle-then-slice under the fixed PRNG."""
    if any(r <= 0 for r in ratios):
        raise ConfigurationError(f"ratios must be positive, got {list(ratios)}")
    if not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
        raise ConfigurationError(f"ratios must sum to 1.0, got {sum(ratios)!r}")
    n = len(corpus)
    raw = [r * n for r in ratios]
    sizes = [int(math.floor(x)) for x in raw]
    remainder = n - sum(sizes)
    by_fraction = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in by_fraction[:remainder]:
        sizes[i] += 1
    indices = list(range(n))
    random.Random(seed).shuffle(indices)
    partitions = []
    start = 0
    for size in sizes:
        partitions.append([corpus[i] for i in indices[start : start + size]])
        start += size
    return partitions
