"""Deterministic text pipeline: preprocessing, abbreviation expansion,
dictionary NER with layman/technical mapping, negation detection and
short-distance rule-based relation extraction.

All operations are pure functions over immutable lookup tables; the tables
are built once (usually from the files under ``triagekit/data``) and shared
read-only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .errors import ParseError

# Delimiters stay visible to downstream scope rules; "." also ends a sentence.
DELIMITERS = {";", ",", "."}
SENTENCE_END = "."

# Connectives that may link a symptom to a body location ("schmerz im bein").
CONNECTIVES = {"in", "im", "am", "an"}

TRANSLITERATION = {"ä": "ae", "ö": "oe", "ü": "ue", "ß": "ss"}

SEMANTIC_TYPES = {"symptom", "disease", "anatomy", "operation", "other"}

KNOWN_FLAGS = {
    "red_flag",
    "female_only",
    "male_only",
    "psych",
    "common",
    "adult_only",
    "child_only",
}

DEFAULT_NEGATION_WINDOW = 4
DEFAULT_RELATION_DISTANCE = 3

# Words in "vor <N> tagen"-style historical patterns.
_PERIOD_WORDS = {"tag", "tagen", "woche", "wochen", "monat", "monaten", "jahr", "jahren"}


def normalize_word(word: str) -> str:
    """Lowercase, transliterate umlauts/eszett and drop everything that is
    neither ASCII alphanumeric nor a delimiter."""
    out = []
    for ch in word.lower():
        ch = TRANSLITERATION.get(ch, ch)
        for c in ch:
            if c.isascii() and c.isalnum():
                out.append(c)
    return "".join(out)


@dataclass(frozen=True)
class Token:
    surface: str
    normalized: str
    index: int  # position among all units (words + delimiters) of the sentence
    tag: str = "term"
    ambiguous_abbrev: bool = False


@dataclass(frozen=True)
class Sentence:
    """Word tokens of one sentence plus the unit positions of in-sentence
    delimiters. Delimiters are not tokens but their positions stay visible
    so scope rules can detect them (token indices are strictly increasing,
    not contiguous)."""

    tokens: tuple[Token, ...]
    delimiter_positions: frozenset[int] = frozenset()

    def __iter__(self) -> Iterator[Token]:
        return iter(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __getitem__(self, i: int) -> Token:
        return self.tokens[i]

    def normalized(self) -> list[str]:
        return [t.normalized for t in self.tokens]

    def has_delimiter_between(self, unit_a: int, unit_b: int) -> bool:
        lo, hi = (unit_a, unit_b) if unit_a <= unit_b else (unit_b, unit_a)
        return any(lo < p < hi for p in self.delimiter_positions)


@dataclass(frozen=True)
class Mention:
    """A dictionary or rule hit over a token-list span [start, end)."""

    concept_id: str
    start: int
    end: int
    polarity: str = "present"  # present | negated | historical
    source: str = "dictionary"

    def span_units(self, sentence: Sentence) -> tuple[int, int]:
        return sentence[self.start].index, sentence[self.end - 1].index


@dataclass(frozen=True)
class RelationCandidate:
    e1: Mention  # symptom / disease / operation
    e2: Mention  # anatomy
    relation: str  # located_in | not_located_in
    source: str = "rule"


@dataclass(frozen=True)
class DictEntry:
    concept_id: str
    canonical: str
    semantic_type: str
    flags: frozenset[str]
    synonyms: tuple[str, ...]


class AbbreviationTable:
    """abbreviation -> candidate expansions, optionally gated by context
    trigger tokens that must co-occur in the sentence."""

    def __init__(self, entries: Iterable[tuple[str, str, frozenset[str]]]):
        self._entries: dict[str, list[tuple[str, frozenset[str]]]] = {}
        for abbrev, expansion, triggers in entries:
            self._entries.setdefault(normalize_word(abbrev), []).append(
                (expansion, frozenset(normalize_word(t) for t in triggers))
            )

    @classmethod
    def load(cls, path: str | Path) -> "AbbreviationTable":
        rows = []
        for lineno, line in enumerate(_read_lines(path), start=1):
            cols = line.split("\t")
            if len(cols) < 2:
                raise ParseError(f"abbreviation row needs >=2 columns: {line!r}", lineno)
            triggers = frozenset(t for t in cols[2].split(",") if t) if len(cols) > 2 else frozenset()
            rows.append((cols[0], cols[1], triggers))
        return cls(rows)

    def lookup(self, normalized: str) -> list[tuple[str, frozenset[str]]]:
        return self._entries.get(normalized, [])

    def ambiguous_forms(self) -> set[str]:
        return {a for a, exps in self._entries.items() if any(t for _, t in exps)}

    def unconditional(self) -> dict[str, str]:
        """abbreviation -> expansion for entries without context conditions."""
        out = {}
        for abbrev, exps in self._entries.items():
            if len(exps) == 1 and not exps[0][1]:
                out[abbrev] = exps[0][0]
        return out


class MedicalDictionary:
    """Concept dictionary: canonical names, mixed layman/technical synonyms,
    semantic types and metadata flags, plus the normalized surface index used
    by longest-match NER.

    Surface forms are normalized through the same preprocessing chain as
    input text (including corrections and unconditional abbreviation
    expansion) so lookups stay consistent.
    """

    def __init__(
        self,
        entries: Iterable[DictEntry],
        *,
        stopwords: frozenset[str] = frozenset(),
        corrections: dict[str, str] | None = None,
        abbreviations: AbbreviationTable | None = None,
    ):
        self.entries: dict[str, DictEntry] = {}
        self._surface_index: dict[tuple[str, ...], str] = {}
        self._word_type: dict[str, str] = {}
        self.max_surface_len = 1
        corrections = corrections or {}
        unconditional = abbreviations.unconditional() if abbreviations else {}

        for entry in self.entries_sorted(entries):
            if entry.concept_id in self.entries:
                raise ParseError(f"duplicate concept_id {entry.concept_id}")
            self.entries[entry.concept_id] = entry
            for surface in (entry.canonical, *entry.synonyms):
                key = self._surface_key(surface, stopwords, corrections, unconditional)
                if not key:
                    continue
                owner = self._surface_index.get(key)
                if owner is not None and owner != entry.concept_id:
                    raise ParseError(
                        f"synonym {' '.join(key)!r} claimed by both {owner} and {entry.concept_id}"
                    )
                self._surface_index[key] = entry.concept_id
                self.max_surface_len = max(self.max_surface_len, len(key))
                if len(key) == 1:
                    self._word_type.setdefault(key[0], entry.semantic_type)

    @staticmethod
    def entries_sorted(entries: Iterable[DictEntry]) -> list[DictEntry]:
        return sorted(entries, key=lambda e: e.concept_id)

    @staticmethod
    def _surface_key(
        surface: str,
        stopwords: frozenset[str],
        corrections: dict[str, str],
        unconditional: dict[str, str],
    ) -> tuple[str, ...]:
        words = []
        for raw in surface.split():
            norm = normalize_word(raw)
            norm = corrections.get(norm, norm)
            norm = unconditional.get(norm, norm)
            if norm and norm not in stopwords:
                words.append(norm)
        return tuple(words)

    @classmethod
    def load(
        cls,
        path: str | Path,
        *,
        stopwords: frozenset[str] = frozenset(),
        corrections: dict[str, str] | None = None,
        abbreviations: AbbreviationTable | None = None,
    ) -> "MedicalDictionary":
        entries = []
        for lineno, line in enumerate(_read_lines(path), start=1):
            cols = line.split("\t")
            if len(cols) != 5:
                raise ParseError(f"dictionary row needs 5 columns, got {len(cols)}", lineno)
            concept_id, canonical, semantic_type, flags_col, synonyms_col = cols
            if semantic_type not in SEMANTIC_TYPES:
                raise ParseError(f"unknown semantic type {semantic_type!r}", lineno)
            flags = frozenset(f for f in flags_col.split(",") if f and f != "-")
            unknown = flags - KNOWN_FLAGS
            if unknown:
                raise ParseError(f"unknown flags {sorted(unknown)}", lineno)
            synonyms = tuple(
                s.strip() for s in synonyms_col.split("|") if s.strip() and s.strip() != "-"
            )
            entries.append(DictEntry(concept_id, canonical, semantic_type, flags, synonyms))
        return cls(
            entries,
            stopwords=stopwords,
            corrections=corrections,
            abbreviations=abbreviations,
        )

    def __contains__(self, concept_id: str) -> bool:
        return concept_id in self.entries

    def __getitem__(self, concept_id: str) -> DictEntry:
        return self.entries[concept_id]

    def semantic_type(self, concept_id: str) -> str:
        return self.entries[concept_id].semantic_type

    def flags(self, concept_id: str) -> frozenset[str]:
        return self.entries[concept_id].flags

    def surfaces(self) -> dict[tuple[str, ...], str]:
        return dict(self._surface_index)

    def match(self, words: Sequence[str]) -> str | None:
        return self._surface_index.get(tuple(words))

    def tag_for_word(self, normalized: str) -> str:
        # Default tagger: the dictionary semantic type fills the POS slot.
        return self._word_type.get(normalized, "term")

    def concept_ids(self, semantic_types: set[str] | None = None) -> list[str]:
        ids = sorted(self.entries)
        if semantic_types is None:
            return ids
        return [c for c in ids if self.entries[c].semantic_type in semantic_types]


def _read_lines(path: str | Path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def load_wordlist(path: str | Path) -> frozenset[str]:
    return frozenset(normalize_word(w) for w in _read_lines(path))


def load_corrections(path: str | Path) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError("correction row needs 2 columns", lineno)
        out[normalize_word(cols[0])] = normalize_word(cols[1])
    return out


def data_path(name: str) -> Path:
    """Path of a shipped resource file under triagekit/data."""
    return Path(str(resources.files("triagekit").joinpath("data", name)))


def preprocess(
    text: str,
    *,
    stopwords: frozenset[str] = frozenset(),
    corrections: dict[str, str] | None = None,
    dictionary: MedicalDictionary | None = None,
) -> list[Sentence]:
    """Split text into sentences of normalized word tokens.

    Stop words are removed, words lowercased and transliterated to ASCII,
    delimiters become unit boundaries (kept as positions, "." also ends the
    sentence) and any character outside alphanumerics + delimiters is
    dropped. Misspellings are fixed through the static corrections table.
    """
    corrections = corrections or {}
    sentences: list[Sentence] = []
    tokens: list[Token] = []
    delims: set[int] = set()
    unit = 0

    def close_sentence() -> None:
        nonlocal tokens, delims, unit
        if tokens:
            sentences.append(Sentence(tuple(tokens), frozenset(delims)))
        tokens, delims, unit = [], set(), 0

    for surface, is_delim in _units(text):
        if is_delim:
            if surface == SENTENCE_END:
                close_sentence()
            else:
                delims.add(unit)
                unit += 1
            continue
        norm = normalize_word(surface)
        norm = corrections.get(norm, norm)
        if not norm or norm in stopwords:
            unit += 1  # dropped units still consume a position
            continue
        tag = dictionary.tag_for_word(norm) if dictionary else "term"
        tokens.append(Token(surface=surface, normalized=norm, index=unit, tag=tag))
        unit += 1
    close_sentence()
    return sentences


def _units(text: str) -> Iterator[tuple[str, bool]]:
    """Yield (surface, is_delimiter) units: words split on whitespace and
    delimiters, delimiters kept as their own units."""
    word: list[str] = []
    for ch in text:
        if ch in DELIMITERS:
            if word:
                yield "".join(word), False
                word = []
            yield ch, True
        elif ch.isspace():
            if word:
                yield "".join(word), False
                word = []
        else:
            word.append(ch)
    if word:
        yield "".join(word), False


def render(sentences: Iterable[Sentence]) -> str:
    """Inverse-ish of preprocess for idempotence checks: normalized tokens
    joined by spaces, sentences closed with '.'."""
    parts = []
    for sentence in sentences:
        if len(sentence):
            parts.append(" ".join(sentence.normalized()) + " .")
    return " ".join(parts)


def expand_abbreviations(
    sentence: Sentence,
    table: AbbreviationTable,
    *,
    dictionary: MedicalDictionary | None = None,
) -> Sentence:
    """Expand unambiguous abbreviations always; ambiguous ones only when a
    context trigger co-occurs in the sentence, otherwise keep the surface
    verbatim and flag the token. Multi-word expansions re-index the sentence.
    """
    present = set(sentence.normalized())
    changed = False
    # (unit_index, kind, payload) event stream in original unit order
    events: list[tuple[int, str, object]] = [(p, "delim", None) for p in sentence.delimiter_positions]
    for token in sentence:
        candidates = table.lookup(token.normalized)
        if not candidates:
            events.append((token.index, "tok", token))
            continue
        chosen: str | None = None
        ambiguous = any(triggers for _, triggers in candidates)
        for expansion, triggers in candidates:
            if not triggers or (triggers & (present - {token.normalized})):
                chosen = expansion
                break
        if chosen is None:
            events.append((token.index, "tok", replace(token, ambiguous_abbrev=True)))
            changed = True
            continue
        changed = True
        words = [normalize_word(w) for w in chosen.split()]
        events.append((token.index, "exp", (token, [w for w in words if w], ambiguous)))
    if not changed:
        return sentence

    events.sort(key=lambda e: e[0])
    tokens: list[Token] = []
    delims: set[int] = set()
    unit = 0
    for _, kind, payload in events:
        if kind == "delim":
            delims.add(unit)
            unit += 1
        elif kind == "tok":
            token = payload  # type: ignore[assignment]
            tokens.append(replace(token, index=unit))
            unit += 1
        else:
            token, words, _ambiguous = payload  # type: ignore[misc]
            for word in words:
                tag = dictionary.tag_for_word(word) if dictionary else token.tag
                tokens.append(Token(surface=token.surface, normalized=word, index=unit, tag=tag))
                unit += 1
    return Sentence(tuple(tokens), frozenset(delims))


def detect_entities(sentence: Sentence, dictionary: MedicalDictionary) -> list[Mention]:
    """Greedy longest-match NER over normalized tokens. Matches never cross a
    delimiter and overlapping shorter matches are suppressed. Layman and
    technical surfaces of one concept yield the same concept_id."""
    mentions: list[Mention] = []
    words = sentence.normalized()
    i = 0
    n = len(words)
    while i < n:
        hit = None
        for length in range(min(dictionary.max_surface_len, n - i), 0, -1):
            j = i + length
            if length > 1 and sentence.has_delimiter_between(
                sentence[i].index, sentence[j - 1].index
            ):
                continue
            concept = dictionary.match(words[i:j])
            if concept is not None:
                hit = Mention(concept_id=concept, start=i, end=j)
                break
        if hit is not None:
            mentions.append(hit)
            i = hit.end
        else:
            i += 1
    return mentions


def _historical_trigger_positions(sentence: Sentence, triggers: frozenset[str]) -> set[int]:
    positions = {i for i, t in enumerate(sentence) if t.normalized in triggers}
    # "vor <N> <tagen|wochen|...>" pattern
    for i in range(len(sentence) - 2):
        if (
            sentence[i].normalized == "vor"
            and sentence[i + 1].normalized.isdigit()
            and sentence[i + 2].normalized in _PERIOD_WORDS
        ):
            positions.add(i)
    return positions


def detect_negation(
    sentence: Sentence,
    mentions: Sequence[Mention],
    *,
    negation_triggers: frozenset[str],
    historical_triggers: frozenset[str] = frozenset(),
    window: int = DEFAULT_NEGATION_WINDOW,
) -> list[Mention]:
    """Assign polarity: a mention turns negated iff a negation trigger occurs
    within `window` tokens before or after its span in the same sentence with
    no intervening delimiter; historical triggers work the same way and lose
    against negation. Everything else stays present."""
    neg_positions = {i for i, t in enumerate(sentence) if t.normalized in negation_triggers}
    hist_positions = _historical_trigger_positions(sentence, historical_triggers)

    def in_scope(positions: set[int], mention: Mention) -> bool:
        for pos in positions:
            if mention.start <= pos < mention.end:
                continue  # trigger inside the span cannot scope over it
            if pos < mention.start:
                distance = mention.start - pos
                edge = mention.start
            else:
                distance = pos - (mention.end - 1)
                edge = mention.end - 1
            if distance > window:
                continue
            if sentence.has_delimiter_between(sentence[pos].index, sentence[edge].index):
                continue
            return True
        return False

    out = []
    for mention in mentions:
        if in_scope(neg_positions, mention):
            out.append(replace(mention, polarity="negated"))
        elif in_scope(hist_positions, mention):
            out.append(replace(mention, polarity="historical"))
        else:
            out.append(replace(mention, polarity="present"))
    return out


def extract_relations_rules(
    sentence: Sentence,
    mentions: Sequence[Mention],
    dictionary: MedicalDictionary,
    *,
    max_distance: int = DEFAULT_RELATION_DISTANCE,
) -> list[RelationCandidate]:
    """High-precision short-distance rule: a symptom/disease/operation mention
    and an anatomy mention within `max_distance` tokens of each other (no
    delimiter between, connective in/im/am/an optional) relate as located_in.
    Distant pairs are left to the trained model."""
    subjects = [m for m in mentions if dictionary.semantic_type(m.concept_id) in {"symptom", "disease", "operation"}]
    anatomies = [m for m in mentions if dictionary.semantic_type(m.concept_id) == "anatomy"]
    out = []
    for e1 in subjects:
        for e2 in anatomies:
            if e1.start < e2.start:
                gap = e2.start - e1.end
                lo, hi = e1.end - 1, e2.start
            else:
                gap = e1.start - e2.end
                lo, hi = e2.end - 1, e1.start
            if gap < 0 or gap > max_distance:
                continue
            if sentence.has_delimiter_between(sentence[lo].index, sentence[hi].index):
                continue
            out.append(RelationCandidate(e1=e1, e2=e2, relation="located_in", source="rule"))
    return out


@dataclass
class TextPipeline:
    """Bundles the lookup tables and runs the full annotation chain."""

    dictionary: MedicalDictionary
    stopwords: frozenset[str] = frozenset()
    corrections: dict[str, str] = field(default_factory=dict)
    abbreviations: AbbreviationTable | None = None
    negation_triggers: frozenset[str] = frozenset()
    historical_triggers: frozenset[str] = frozenset()
    negation_window: int = DEFAULT_NEGATION_WINDOW
    relation_distance: int = DEFAULT_RELATION_DISTANCE

    @classmethod
    def default(cls) -> "TextPipeline":
        """Pipeline over the sample tables shipped with the package."""
        stopwords = load_wordlist(data_path("stopwords.txt"))
        corrections = load_corrections(data_path("corrections.tsv"))
        abbreviations = AbbreviationTable.load(data_path("abbreviations.tsv"))
        dictionary = MedicalDictionary.load(
            data_path("dictionary.tsv"),
            stopwords=stopwords,
            corrections=corrections,
            abbreviations=abbreviations,
        )
        return cls(
            dictionary=dictionary,
            stopwords=stopwords,
            corrections=corrections,
            abbreviations=abbreviations,
            negation_triggers=load_wordlist(data_path("negation_triggers.txt")),
            historical_triggers=load_wordlist(data_path("historical_triggers.txt")),
        )

    def sentences(self, text: str) -> list[Sentence]:
        sentences = preprocess(
            text,
            stopwords=self.stopwords,
            corrections=self.corrections,
            dictionary=self.dictionary,
        )
        if self.abbreviations is not None:
            sentences = [
                expand_abbreviations(s, self.abbreviations, dictionary=self.dictionary)
                for s in sentences
            ]
        return sentences

    def annotate(self, text: str) -> list[tuple[Sentence, list[Mention], list[RelationCandidate]]]:
        out = []
        for sentence in self.sentences(text):
            mentions = detect_entities(sentence, self.dictionary)
            mentions = detect_negation(
                sentence,
                mentions,
                negation_triggers=self.negation_triggers,
                historical_triggers=self.historical_triggers,
                window=self.negation_window,
            )
            relations = extract_relations_rules(
                sentence, mentions, self.dictionary, max_distance=self.relation_distance
            )
            out.append((sentence, mentions, relations))
        return out

    def extract_mentions(self, text: str) -> list[tuple[str, str, str | None]]:
        """(concept_id, polarity, body_location) triples for a whole text;
        rule-located anatomy becomes the mention's body location."""
        results = []
        for _sentence, mentions, relations in self.annotate(text):
            located = {id(r.e1): r.e2.concept_id for r in relations}
            for m in mentions:
                if self.dictionary.semantic_type(m.concept_id) == "anatomy":
                    if any(r.e2 == m for r in relations):
                        continue  # consumed as a location
                results.append((m.concept_id, m.polarity, located.get(id(m))))
        return results
