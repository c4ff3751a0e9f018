"""Automatic ontology construction from corpus annotations: compound
splitting into simple entities, multi-stage concept clustering, taxonomy
building against curated seed ontologies, and metadata attachment.

Concept identity is the stable hash of the sorted semantic blocks, so ids
survive re-runs and can key knowledge-graph joins. The child_of graph is
kept acyclic and transitively reduced after every build and every coarsen.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import networkx as nx

from .corpus import CaseRecord
from .errors import ClusteringConflictError, ParseError, TaxonomyError, TriageKitError
from .textproc import CONNECTIVES, MedicalDictionary, data_path, normalize_word, _read_lines

LINKING_CHARS = ("s", "n", "e")  # German Fugenelemente covered by the splitter
MIN_SIMPLE_LENGTH = 3
NEGATION_MARKER_BLOCKS = frozenset({"frei"})

ONTOLOGY_FORMAT_VERSION = 1

NON_TAXONOMIC_RELATIONS = ("located_in", "negation_of", "characterization_of", "specification_of")


def concept_id_for(blocks: Iterable[str]) -> str:
    digest = hashlib.sha1("|".join(sorted(blocks)).encode("utf-8")).hexdigest()
    return f"k_{digest[:10]}"


@dataclass(frozen=True)
class Annotation:
    """One extracted expression: a dictionary concept, optionally composed
    with a body location found by relation extraction."""

    concept_id: str
    location_id: str | None = None


@dataclass(frozen=True)
class Concept:
    concept_id: str
    canonical: str
    semantic_type: str
    blocks: frozenset[str]
    synonyms: frozenset[str]
    flags: frozenset[str]
    members: frozenset[str]  # dictionary entries and (entry@location) keys merged here


def load_simple_lexicon(path: str | Path | None = None) -> frozenset[str]:
    if path is None:
        path = data_path("simple_lexicon.txt")
    lexicon = frozenset(normalize_word(w) for w in _read_lines(path))
    short = [w for w in lexicon if len(w) < MIN_SIMPLE_LENGTH]
    if short:
        raise ParseError(f"simple entities below minimum length {MIN_SIMPLE_LENGTH}: {sorted(short)}")
    return lexicon


def load_synonym_classes(path: str | Path | None = None) -> dict[str, str]:
    """word -> representative simple entity (identity entries implied)."""
    if path is None:
        path = data_path("simple_synonyms.tsv")
    classes: dict[str, str] = {}
    for lineno, line in enumerate(_read_lines(path), start=1):
        cols = line.split("\t")
        if len(cols) != 2:
            raise ParseError("synonym class row needs 2 columns", lineno)
        rep = normalize_word(cols[0])
        for syn in cols[1].split("|"):
            syn = normalize_word(syn)
            if syn:
                classes[syn] = rep
    return classes


def load_seed_edges(path: str | Path) -> set[tuple[str, str]]:
    """Seed ontology: tab-separated child, parent, relation rows over simple
    entities."""
    edges = set()
    for lineno, line in enumerate(_read_lines(path), start=1):
        cols = line.split("\t")
        if len(cols) != 3:
            raise ParseError("seed row needs 3 columns (child, parent, relation)", lineno)
        if cols[2] != "child_of":
            raise ParseError(f"unsupported seed relation {cols[2]!r}", lineno)
        edges.add((normalize_word(cols[0]), normalize_word(cols[1])))
    return edges


def default_seed_edges() -> set[tuple[str, str]]:
    return load_seed_edges(data_path("anatomy_seed.tsv")) | load_seed_edges(
        data_path("general_symptom_seed.tsv")
    )


def split_compound(term: str, lexicon: frozenset[str]) -> list[str]:
    """Greedy left-to-right longest-match decomposition of a compound into
    simple entities, allowing linking characters (s, n, e) between segments.
    Returns [] when the term cannot be fully covered (kept atomic)."""
    term = normalize_word(term)
    if not term:
        return []
    by_length = sorted({len(w) for w in lexicon}, reverse=True)

    def walk(pos: int, segments: list[str], linked: bool) -> list[str] | None:
        if pos == len(term):
            return segments if segments else None
        for length in by_length:
            if pos + length > len(term):
                continue
            piece = term[pos : pos + length]
            if piece in lexicon:
                found = walk(pos + length, segments + [piece], False)
                if found is not None:
                    return found
        # a linking character may only sit between segments, never lead or trail
        if segments and term[pos] in LINKING_CHARS and pos + 1 < len(term):
            return walk(pos + 1, segments, True)
        return None

    return walk(0, [], False) or []


class BlockBuilder:
    """Computes semantic blocks for dictionary entries, surfaces and
    composed (entry, location) annotations."""

    def __init__(
        self,
        dictionary: MedicalDictionary,
        lexicon: frozenset[str] | None = None,
        synonym_classes: dict[str, str] | None = None,
    ):
        self.dictionary = dictionary
        self.lexicon = lexicon if lexicon is not None else load_simple_lexicon()
        self.classes = synonym_classes if synonym_classes is not None else load_synonym_classes()
        self._entry_cache: dict[str, frozenset[str]] = {}

    def word_blocks(self, word: str) -> list[str]:
        word = self.classes.get(word, word)
        if word in self.lexicon:
            return [word]
        segments = split_compound(word, self.lexicon)
        if segments:
            return [self.classes.get(s, s) for s in segments]
        return [word]  # atomic fallback

    def surface_blocks(self, surface: str) -> frozenset[str]:
        blocks: set[str] = set()
        for raw in surface.split():
            word = normalize_word(raw)
            if not word or word in CONNECTIVES:
                continue
            blocks.update(self.word_blocks(word))
        return frozenset(blocks)

    def entry_blocks(self, concept_id: str) -> frozenset[str]:
        """Canonical block set of a dictionary entry: the smallest candidate
        whose elements are all simple entities, else the smallest overall."""
        cached = self._entry_cache.get(concept_id)
        if cached is not None:
            return cached
        entry = self.dictionary[concept_id]
        candidates = []
        for surface in (entry.canonical, *entry.synonyms):
            blocks = self.surface_blocks(surface)
            if blocks:
                candidates.append(tuple(sorted(blocks)))
        if not candidates:
            candidates.append((normalize_word(entry.canonical),))
        qualified = [c for c in candidates if all(b in self.lexicon for b in c)]
        best = min(qualified) if qualified else min(candidates)
        result = frozenset(best)
        self._entry_cache[concept_id] = result
        return result

    def annotation_blocks(self, annotation: Annotation) -> frozenset[str]:
        blocks = self.entry_blocks(annotation.concept_id)
        if annotation.location_id is not None:
            blocks = blocks | self.entry_blocks(annotation.location_id)
        return blocks


def cluster_concepts(
    annotations: Iterable[Annotation],
    dictionary: MedicalDictionary,
    *,
    blocks: BlockBuilder | None = None,
    include_full_dictionary: bool = True,
) -> list[Concept]:
    """Two-stage concept clustering.

    Stage 1 groups surfaces through their dictionary synonym entry; stage 2
    merges groups whose semantic-block sets are equal after mapping every
    block element to its synonym-class representative, so permuted and
    compositional phrasings of the same simple entities land in one concept.
    """
    builder = blocks or BlockBuilder(dictionary)

    # stage 1: dictionary-level groups, plus one group per composed annotation
    groups: dict[str, tuple[str, str | None]] = {}
    if include_full_dictionary:
        for concept_id in dictionary.concept_ids():
            groups[concept_id] = (concept_id, None)
    for annotation in annotations:
        if annotation.concept_id not in dictionary:
            raise TriageKitError(f"annotation references unknown concept {annotation.concept_id}")
        groups.setdefault(annotation.concept_id, (annotation.concept_id, None))
        if annotation.location_id is not None:
            key = f"{annotation.concept_id}@{annotation.location_id}"
            groups[key] = (annotation.concept_id, annotation.location_id)

    # stage 2: merge groups with equal block sets
    clusters: dict[frozenset[str], list[str]] = {}
    for key in sorted(groups):
        entry_id, location_id = groups[key]
        block_set = builder.annotation_blocks(Annotation(entry_id, location_id))
        clusters.setdefault(block_set, []).append(key)

    concepts = []
    for block_set in sorted(clusters, key=lambda b: tuple(sorted(b))):
        members = clusters[block_set]
        types = set()
        synonyms: set[str] = set()
        flags: set[str] = set()
        for key in members:
            entry_id, location_id = groups[key]
            entry = dictionary[entry_id]
            types.add(entry.semantic_type)
            flags.update(entry.flags)
            if location_id is None:
                synonyms.update(
                    normalize_surface(s) for s in (entry.canonical, *entry.synonyms)
                )
            else:
                loc = dictionary[location_id]
                flags.update(loc.flags)
                synonyms.add(normalize_surface(f"{entry.canonical} am {loc.canonical}"))
        if len(types) > 1:
            # composed annotations keep their subject's type; a true clash
            # between dictionary entries is a data error
            subject_types = {
                dictionary[groups[k][0]].semantic_type for k in members if groups[k][1] is None
            }
            if len(subject_types) > 1:
                raise ClusteringConflictError(
                    f"cluster {sorted(block_set)} mixes semantic types {sorted(types)}", members
                )
            types = subject_types or types
        semantic_type = sorted(types)[0]
        canonical = min(synonyms)
        concepts.append(
            Concept(
                concept_id=concept_id_for(block_set),
                canonical=canonical,
                semantic_type=semantic_type,
                blocks=block_set,
                synonyms=frozenset(synonyms),
                flags=frozenset(flags),
                members=frozenset(members),
            )
        )
    return concepts


def normalize_surface(surface: str) -> str:
    return " ".join(normalize_word(w) for w in surface.split() if normalize_word(w))


def build_taxonomy(
    concepts: Sequence[Concept],
    seed_edges: set[tuple[str, str]] | None = None,
) -> set[tuple[str, str]]:
    """child_of edges: concept A is child of B (same semantic type) when every
    block of B is matched by a block of A directly or through a seed child_of
    path, and not vice versa. The result is transitively reduced and must be
    acyclic."""
    if seed_edges is None:
        seed_edges = default_seed_edges()
    seed_graph = nx.DiGraph(sorted(seed_edges))  # child -> parent

    reach_cache: dict[str, set[str]] = {}

    def seed_reach(block: str) -> set[str]:
        if block not in reach_cache:
            if block in seed_graph:
                reach_cache[block] = {block} | nx.descendants(seed_graph, block)
            else:
                reach_cache[block] = {block}
        return reach_cache[block]

    def covers(a: Concept, b: Concept) -> bool:
        return all(any(target in seed_reach(block) for block in a.blocks) for target in b.blocks)

    graph = nx.DiGraph()
    graph.add_nodes_from(c.concept_id for c in concepts)
    by_type: dict[str, list[Concept]] = {}
    for c in concepts:
        by_type.setdefault(c.semantic_type, []).append(c)
    for group in by_type.values():
        for a in group:
            for b in group:
                if a.blocks == b.blocks:
                    continue
                if covers(a, b) and not covers(b, a):
                    graph.add_edge(a.concept_id, b.concept_id)

    try:
        cycle = nx.find_cycle(graph)
    except nx.NetworkXNoCycle:
        cycle = None
    if cycle:
        path = [edge[0] for edge in cycle] + [cycle[-1][1]]
        raise TaxonomyError("child_of cycle detected", path)
    reduced = nx.transitive_reduction(graph)
    return set(reduced.edges())


@dataclass
class Ontology:
    concepts: dict[str, Concept]
    child_of: set[tuple[str, str]] = field(default_factory=set)
    located_in: set[tuple[str, str]] = field(default_factory=set)
    negation_of: set[tuple[str, str]] = field(default_factory=set)
    characterization_of: set[tuple[str, str]] = field(default_factory=set)
    specification_of: set[tuple[str, str]] = field(default_factory=set)
    aliases: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._rebuild_indexes()

    def _rebuild_indexes(self) -> None:
        self._block_index = {c.blocks: cid for cid, c in self.concepts.items()}
        self._member_index: dict[str, str] = {}
        self._synonym_index: dict[str, str] = {}
        for cid, concept in sorted(self.concepts.items()):
            for member in concept.members:
                self._member_index[member] = cid
            for synonym in concept.synonyms:
                self._synonym_index.setdefault(synonym, cid)
        self._children: dict[str, set[str]] = {}
        for child, parent in self.child_of:
            self._children.setdefault(parent, set()).add(child)

    def validate(self) -> None:
        for edges in (self.child_of, self.located_in, self.negation_of,
                      self.characterization_of, self.specification_of):
            for a, b in edges:
                if a not in self.concepts or b not in self.concepts:
                    raise TriageKitError(f"edge ({a}, {b}) references unknown concept")
        graph = nx.DiGraph(sorted(self.child_of))
        try:
            cycle = nx.find_cycle(graph)
        except nx.NetworkXNoCycle:
            return
        path = [e[0] for e in cycle] + [cycle[-1][1]]
        raise TaxonomyError("child_of cycle detected", path)

    def canonical_id(self, concept_id: str) -> str:
        seen = set()
        while concept_id in self.aliases:
            if concept_id in seen:
                raise TriageKitError(f"alias cycle at {concept_id}")
            seen.add(concept_id)
            concept_id = self.aliases[concept_id]
        return concept_id

    def resolve(self, dict_concept_id: str, location_id: str | None = None) -> str | None:
        """Map a dictionary concept (optionally composed with a location) to
        its ontology concept id. Compositions never seen at build time still
        resolve when their combined block set names an existing concept."""
        key = dict_concept_id if location_id is None else f"{dict_concept_id}@{location_id}"
        hit = self._member_index.get(key)
        if hit is None and location_id is not None:
            subject = self._member_index.get(dict_concept_id)
            location = self._member_index.get(location_id)
            if subject and location:
                blocks = self.concepts[self.canonical_id(subject)].blocks | self.concepts[
                    self.canonical_id(location)
                ].blocks
                hit = self._block_index.get(blocks)
        return self.canonical_id(hit) if hit else None

    def resolve_surface(self, surface: str) -> str | None:
        hit = self._synonym_index.get(normalize_surface(surface))
        return self.canonical_id(hit) if hit else None

    def descendants(self, concept_id: str) -> set[str]:
        if concept_id not in self.concepts:
            raise TriageKitError(f"unknown concept {concept_id}")
        out: set[str] = set()
        frontier = [concept_id]
        while frontier:
            node = frontier.pop()
            for child in self._children.get(node, ()):
                if child not in out:
                    out.add(child)
                    frontier.append(child)
        return out

    def parents(self, concept_id: str) -> set[str]:
        return {p for c, p in self.child_of if c == concept_id}

    def concepts_sorted(self) -> list[Concept]:
        return [self.concepts[cid] for cid in sorted(self.concepts)]

    def save(self, path: str | Path) -> None:
        lines = [f"# triagekit ontology v{ONTOLOGY_FORMAT_VERSION}", "[concepts]"]
        for c in self.concepts_sorted():
            lines.append(
                "\t".join(
                    [
                        c.concept_id,
                        c.canonical,
                        c.semantic_type,
                        ",".join(sorted(c.flags)) or "-",
                        ",".join(sorted(c.blocks)),
                        "|".join(sorted(c.synonyms)) or "-",
                        ",".join(sorted(c.members)) or "-",
                    ]
                )
            )
        lines.append("[edges]")
        for name in ("child_of", *NON_TAXONOMIC_RELATIONS):
            for a, b in sorted(getattr(self, name)):
                lines.append(f"{a}\t{name}\t{b}")
        lines.append("[aliases]")
        for alias, target in sorted(self.aliases.items()):
            lines.append(f"{alias}\t{target}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Ontology":
        concepts: dict[str, Concept] = {}
        edges: dict[str, set[tuple[str, str]]] = {n: set() for n in ("child_of", *NON_TAXONOMIC_RELATIONS)}
        aliases: dict[str, str] = {}
        section = None
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line in ("[concepts]", "[edges]", "[aliases]"):
                section = line
                continue
            cols = line.split("\t")
            if section == "[concepts]":
                if len(cols) != 7:
                    raise ParseError("concept row needs 7 columns", lineno)
                cid, canonical, stype, flags, blocks, synonyms, members = cols
                concepts[cid] = Concept(
                    concept_id=cid,
                    canonical=canonical,
                    semantic_type=stype,
                    blocks=frozenset(b for b in blocks.split(",") if b),
                    synonyms=frozenset(s for s in synonyms.split("|") if s and s != "-"),
                    flags=frozenset(f for f in flags.split(",") if f and f != "-"),
                    members=frozenset(m for m in members.split(",") if m and m != "-"),
                )
            elif section == "[edges]":
                if len(cols) != 3 or cols[1] not in edges:
                    raise ParseError(f"bad edge row {line!r}", lineno)
                edges[cols[1]].add((cols[0], cols[2]))
            elif section == "[aliases]":
                if len(cols) != 2:
                    raise ParseError("alias row needs 2 columns", lineno)
                aliases[cols[0]] = cols[1]
            else:
                raise ParseError(f"content outside any section: {line!r}", lineno)
        ontology = cls(concepts=concepts, aliases=aliases, **edges)
        ontology.validate()
        return ontology


def annotations_from_records(records: Iterable[CaseRecord]) -> list[Annotation]:
    out = []
    for record in records:
        for mention in record.mentions:
            out.append(Annotation(mention.concept_id, mention.body_location))
    return out


def build_ontology(
    records: Iterable[CaseRecord],
    dictionary: MedicalDictionary,
    *,
    blocks: BlockBuilder | None = None,
    seed_edges: set[tuple[str, str]] | None = None,
) -> Ontology:
    """Full ontology build: cluster corpus annotations (plus the dictionary
    itself), derive child_of from blocks + seeds, populate located_in and
    negation_of from block structure."""
    builder = blocks or BlockBuilder(dictionary)
    concepts = cluster_concepts(
        annotations_from_records(records), dictionary, blocks=builder
    )
    child_of = build_taxonomy(concepts, seed_edges)

    located_in: set[tuple[str, str]] = set()
    negation_of: set[tuple[str, str]] = set()
    by_blocks = {c.blocks: c for c in concepts}
    anatomies = [c for c in concepts if c.semantic_type == "anatomy"]
    for concept in concepts:
        if concept.semantic_type in ("symptom", "disease", "operation"):
            for anatomy in anatomies:
                if anatomy.blocks < concept.blocks:
                    located_in.add((concept.concept_id, anatomy.concept_id))
            for marker in NEGATION_MARKER_BLOCKS & concept.blocks:
                target = by_blocks.get(concept.blocks - {marker})
                if target is not None:
                    negation_of.add((concept.concept_id, target.concept_id))

    ontology = Ontology(
        concepts={c.concept_id: c for c in concepts},
        child_of=child_of,
        located_in=located_in,
        negation_of=negation_of,
    )
    ontology.validate()
    return ontology


def coarsen(ontology: Ontology, merge_map: dict[str, str]) -> Ontology:
    """Merge fine concepts into coarse targets: synonyms, members and edges
    transfer to the target, dangling duplicates collapse, and the result must
    still be a valid ontology (cycles are rejected with the offending path).
    """
    if not merge_map:
        return ontology
    for fine, coarse in merge_map.items():
        if fine not in ontology.concepts:
            raise TriageKitError(f"merge source {fine} not in ontology")
        if coarse not in ontology.concepts:
            raise TriageKitError(f"merge target {coarse} not in ontology")
        if merge_map.get(coarse) is not None:
            raise TriageKitError(f"merge target {coarse} is itself merged away")

    def remap(cid: str) -> str:
        return merge_map.get(cid, cid)

    concepts: dict[str, Concept] = {}
    for cid, concept in ontology.concepts.items():
        target = remap(cid)
        if target == cid:
            concepts.setdefault(cid, concept)
    for cid, concept in ontology.concepts.items():
        target = remap(cid)
        if target == cid:
            continue
        base = concepts[target]
        concepts[target] = replace(
            base,
            synonyms=base.synonyms | concept.synonyms,
            flags=base.flags | concept.flags,
            members=base.members | concept.members,
        )

    def remap_edges(edges: set[tuple[str, str]]) -> set[tuple[str, str]]:
        return {(remap(a), remap(b)) for a, b in edges if remap(a) != remap(b)}

    aliases = dict(ontology.aliases)
    for fine, coarse in merge_map.items():
        aliases[fine] = coarse

    merged = Ontology(
        concepts=concepts,
        child_of=remap_edges(ontology.child_of),
        located_in=remap_edges(ontology.located_in),
        negation_of=remap_edges(ontology.negation_of),
        characterization_of=remap_edges(ontology.characterization_of),
        specification_of=remap_edges(ontology.specification_of),
        aliases=aliases,
    )
    merged.validate()  # raises TaxonomyError with the offending path on cycles
    return merged


def descendants(ontology: Ontology, concept_id: str) -> set[str]:
    return ontology.descendants(concept_id)
