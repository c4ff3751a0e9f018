"""Language-agnostic knowledge graph over case records and concepts.

One sparse adjacency matrix (CSR, float64 weights) per relation, with the
transpose pre-built so both traversal directions run in O(nnz of the touched
rows). The graph is immutable after build; queries share it read-only and use
query-local scratch only, so concurrent sessions never interfere.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import CaseRecord, RecommendationLabel
from .errors import (
    ConfigurationError,
    IngestionError,
    MappingError,
    PathError,
    QueryError,
    SnapshotError,
    TrainingError,
)
from .ontology import Ontology

NODE_TYPES = (
    "case_record",
    "age_group",
    "gender",
    "symptom",
    "disease",
    "red_flag",
    "recommendation",
)

# age-group buckets: paper names the relation but not the binning
AGE_GROUPS = ((0, 2), (3, 12), (13, 18), (19, 40), (41, 65), (66, 120))
GENDER_VALUES = ("female", "male", "other")

CONCEPT_TYPES = ("symptom", "disease")

RELATIONS = (
    ("symptom_to_patient", "symptom", "case_record"),
    ("disease_to_patient", "disease", "case_record"),
    ("negated_symptom_to_patient", "symptom", "case_record"),
    ("negated_disease_to_patient", "disease", "case_record"),
    ("historical_symptom_to_patient", "symptom", "case_record"),
    ("historical_disease_to_patient", "disease", "case_record"),
    ("red_flag_to_patient", "red_flag", "case_record"),
    ("age_group_to_patient", "age_group", "case_record"),
    ("gender_to_patient", "gender", "case_record"),
    ("patient_to_point_of_care", "case_record", "recommendation"),
)

SNAPSHOT_MAGIC = b"TKKG"
SNAPSHOT_VERSION = 1

FORWARD, REVERSE = "forward", "reverse"


def age_group_name(bounds: tuple[int, int]) -> str:
    lo, hi = bounds
    return f"{lo}-{hi}" if hi < 120 else f"{lo}+"


def age_group_of(age: int, groups: Sequence[tuple[int, int]] = AGE_GROUPS) -> str:
    for bounds in groups:
        if bounds[0] <= age <= bounds[1]:
            return age_group_name(bounds)
    raise QueryError(f"age {age} outside all age groups")


def label_key(label: RecommendationLabel) -> str:
    return f"{label.risk}|{label.point_of_care}|{label.time_frame}"


@dataclass
class NodeTable:
    """Contiguous integer node ids, dense per type; payload keys keep the
    sorted order that defines the numbering."""

    payloads: dict[str, list[str]]
    codes: dict[str, np.ndarray]

    @classmethod
    def build(cls, payloads: dict[str, list[str]]) -> "NodeTable":
        codes = {}
        for t_index, node_type in enumerate(NODE_TYPES):
            count = len(payloads.get(node_type, []))
            codes[node_type] = np.arange(count, dtype=np.int64) + 1_000_000 * t_index
        return cls(payloads={t: list(payloads.get(t, [])) for t in NODE_TYPES}, codes=codes)

    def count(self, node_type: str) -> int:
        return len(self.payloads[node_type])

    def index(self, node_type: str) -> dict[str, int]:
        return {p: i for i, p in enumerate(self.payloads[node_type])}

    def validate(self) -> None:
        seen: set[int] = set()
        for node_type in NODE_TYPES:
            codes = self.codes[node_type]
            if len(codes) != len(self.payloads[node_type]):
                raise MappingError(f"{node_type}: code/payload length mismatch")
            for code in codes.tolist():
                if code in seen:
                    raise MappingError(f"duplicate numeric code {code}")
                seen.add(code)


@dataclass
class SparseAdjacency:
    """One relation's adjacency in CSR form plus its pre-built transpose."""

    name: str
    src_type: str
    dst_type: str
    matrix: sp.csr_matrix
    transpose: sp.csr_matrix = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.transpose is None:
            self.transpose = self.matrix.T.tocsr()
        self.matrix.sort_indices()
        self.transpose.sort_indices()

    @property
    def row_offsets(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def column_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def weights(self) -> np.ndarray:
        return self.matrix.data

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def validate(self) -> None:
        if self.matrix.data.dtype != np.float64:
            raise ConfigurationError(f"{self.name}: weights must be float64")
        if np.any(self.matrix.data <= 0):
            raise ConfigurationError(f"{self.name}: weights must be > 0")
        for row in range(self.matrix.shape[0]):
            cols = self.matrix.indices[self.matrix.indptr[row] : self.matrix.indptr[row + 1]]
            if np.any(np.diff(cols) <= 0):
                raise ConfigurationError(f"{self.name}: row {row} columns not sorted/unique")


@dataclass(frozen=True)
class SparseVector:
    node_type: str
    indices: np.ndarray  # sorted unique int64
    values: np.ndarray  # float64

    @classmethod
    def from_pairs(cls, node_type: str, pairs: Iterable[tuple[int, float]]) -> "SparseVector":
        accum: dict[int, float] = {}
        for index, value in pairs:
            accum[index] = accum.get(index, 0.0) + value
        if not accum:
            return cls(node_type, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.float64))
        idx = np.array(sorted(accum), dtype=np.int64)
        val = np.array([accum[i] for i in idx.tolist()], dtype=np.float64)
        return cls(node_type, idx, val)

    @property
    def nnz(self) -> int:
        return len(self.indices)

    def to_dict(self) -> dict[int, float]:
        return dict(zip(self.indices.tolist(), self.values.tolist()))


@dataclass
class EdgeWeights:
    """Per-concept weight vectors (by node type); IDF by default, optionally
    learned by cross-entropy minimisation."""

    vectors: dict[str, np.ndarray]
    source: str = "idf"

    def vector(self, node_type: str) -> np.ndarray:
        return self.vectors[node_type]

    @property
    def mean_weight(self) -> float:
        parts = [v for v in self.vectors.values() if len(v)]
        if not parts:
            return 0.0
        stacked = np.concatenate(parts)
        return float(stacked.mean()) if len(stacked) else 0.0

    def validate(self) -> None:
        for name, vec in self.vectors.items():
            if not np.all(np.isfinite(vec)) or np.any(vec < 0):
                raise ConfigurationError(f"weights[{name}] must be finite and non-negative")


@dataclass(frozen=True)
class SimilarityConfig:
    lambda_neg: float = 0.5  # penalty multiplier on denied-symptom weights
    lambda_demo: float = 0.25  # demographic bonus relative to the mean weight
    age_groups: tuple[tuple[int, int], ...] = AGE_GROUPS


@dataclass(frozen=True)
class QueryProfile:
    affirmed: tuple[str, ...]  # ontology concept ids
    denied: tuple[str, ...] = ()
    age: int | None = None
    gender: str | None = None


@dataclass
class KnowledgeGraph:
    nodes: NodeTable
    relations: dict[str, SparseAdjacency]
    weights: EdgeWeights
    case_labels: list[RecommendationLabel] = field(default_factory=list)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)

    def __post_init__(self):
        self._index = {t: self.nodes.index(t) for t in NODE_TYPES}

    def node_id(self, node_type: str, payload: str) -> int | None:
        return self._index[node_type].get(payload)

    def concept_node(self, concept_id: str) -> tuple[str, int] | None:
        for node_type in CONCEPT_TYPES:
            local = self._index[node_type].get(concept_id)
            if local is not None:
                return node_type, local
        return None

    def case_id(self, local: int) -> str:
        return self.nodes.payloads["case_record"][local]

    def observed_concepts(self) -> set[str]:
        """Concept ids with at least one present-mention edge (df >= 1)."""
        out = set()
        for node_type in CONCEPT_TYPES:
            rel = self.relations[f"{node_type}_to_patient"].matrix
            df = np.diff(rel.indptr)
            payloads = self.nodes.payloads[node_type]
            out.update(payloads[i] for i in np.nonzero(df > 0)[0])
        return out

    @property
    def n_cases(self) -> int:
        return self.nodes.count("case_record")

    def fingerprint(self) -> str:
        h = hashlib.sha1()
        for name in sorted(self.relations):
            rel = self.relations[name]
            h.update(name.encode())
            h.update(rel.matrix.indptr.tobytes())
            h.update(rel.matrix.indices.tobytes())
            h.update(rel.matrix.data.tobytes())
        for t in NODE_TYPES:
            h.update("|".join(self.nodes.payloads[t]).encode())
        return h.hexdigest()

    def stats(self) -> str:
        lines = ["node counts:"]
        for t in NODE_TYPES:
            lines.append(f"  {t:22s} {self.nodes.count(t)}")
        lines.append("edge counts:")
        for name in sorted(self.relations):
            rel = self.relations[name]
            lines.append(f"  {name:32s} {rel.nnz}")
        lines.append(f"weights: {self.weights.source}")
        lines.append(f"fingerprint: {self.fingerprint()}")
        return "\n".join(lines)


def build_graph(
    corpus: Sequence[CaseRecord],
    ontology: Ontology,
    *,
    similarity: SimilarityConfig | None = None,
) -> KnowledgeGraph:
    """Ingest a corpus: one node per case record, concept, age group, gender
    and recommendation label; one sparse adjacency per relation. Negated
    mentions go into separate negated relations, never symptom_to_patient.
    Node numbering is deterministic (sorted by type, then payload key)."""
    similarity = similarity or SimilarityConfig()

    concepts_by_type: dict[str, set[str]] = {"symptom": set(), "disease": set()}
    for concept in ontology.concepts.values():
        if concept.semantic_type in CONCEPT_TYPES:
            concepts_by_type[concept.semantic_type].add(concept.concept_id)
    red_flags = sorted(
        c.concept_id
        for c in ontology.concepts.values()
        if c.semantic_type in CONCEPT_TYPES and "red_flag" in c.flags
    )

    label_keys = sorted({label_key(r.label) for r in corpus})
    payloads = {
        "case_record": [r.id for r in corpus],
        "age_group": [age_group_name(b) for b in similarity.age_groups],
        "gender": list(GENDER_VALUES),
        "symptom": sorted(concepts_by_type["symptom"]),
        "disease": sorted(concepts_by_type["disease"]),
        "red_flag": red_flags,
        "recommendation": label_keys,
    }
    if len(set(payloads["case_record"])) != len(corpus):
        raise IngestionError("duplicate case record ids in corpus")
    nodes = NodeTable.build(payloads)
    index = {t: {p: i for i, p in enumerate(payloads[t])} for t in NODE_TYPES}

    edges: dict[str, set[tuple[int, int]]] = {name: set() for name, _, _ in RELATIONS}
    for case_local, record in enumerate(corpus):
        for mention in record.mentions:
            resolved = ontology.resolve(mention.concept_id, mention.body_location)
            if resolved is None:
                raise IngestionError(
                    f"record {record.id}: mention {mention.concept_id}"
                    f"{'@' + mention.body_location if mention.body_location else ''}"
                    " does not resolve in the ontology"
                )
            concept = ontology.concepts[resolved]
            if concept.semantic_type not in CONCEPT_TYPES:
                continue  # anatomy/operation mentions carry no concept node type
            local = index[concept.semantic_type][resolved]
            prefix = {"present": "", "negated": "negated_", "historical": "historical_"}[
                mention.polarity
            ]
            edges[f"{prefix}{concept.semantic_type}_to_patient"].add((local, case_local))
            if mention.polarity == "present" and "red_flag" in concept.flags:
                edges["red_flag_to_patient"].add((index["red_flag"][resolved], case_local))
        edges["age_group_to_patient"].add(
            (index["age_group"][age_group_of(record.age, similarity.age_groups)], case_local)
        )
        edges["gender_to_patient"].add((index["gender"][record.gender], case_local))
        edges["patient_to_point_of_care"].add((case_local, index["recommendation"][label_key(record.label)]))

    relations = {}
    for name, src_type, dst_type in RELATIONS:
        shape = (nodes.count(src_type), nodes.count(dst_type))
        pairs = sorted(edges[name])
        if pairs:
            rows = np.array([p[0] for p in pairs], dtype=np.int64)
            cols = np.array([p[1] for p in pairs], dtype=np.int64)
            data = np.ones(len(pairs), dtype=np.float64)
            matrix = sp.csr_matrix((data, (rows, cols)), shape=shape)
        else:
            matrix = sp.csr_matrix(shape, dtype=np.float64)
        relations[name] = SparseAdjacency(name, src_type, dst_type, matrix)

    kg = KnowledgeGraph(
        nodes=nodes,
        relations=relations,
        weights=EdgeWeights(vectors={}),
        case_labels=[r.label for r in corpus],
        similarity=similarity,
    )
    kg.weights = idf_weights(kg)
    return kg


def idf_weights(kg: KnowledgeGraph) -> EdgeWeights:
    """ln(N / df) per concept over the present-mention relations; concepts
    never observed fall back to df=1 (the maximal weight)."""
    n = max(kg.n_cases, 1)
    vectors = {}
    for node_type in CONCEPT_TYPES:
        rel = kg.relations[f"{node_type}_to_patient"]
        df = np.diff(rel.matrix.indptr).astype(np.float64)
        if kg.n_cases == 0:
            vectors[node_type] = np.zeros(kg.nodes.count(node_type))
        else:
            vectors[node_type] = np.log(n / np.maximum(df, 1.0))
    weights = EdgeWeights(vectors=vectors, source="idf")
    weights.validate()
    return weights


def traverse(
    kg: KnowledgeGraph,
    path: Sequence[tuple[str, str]],
    frontier: SparseVector,
) -> SparseVector:
    """Multiply the frontier through each relation adjacency (transpose for
    reverse steps), accumulating products of edge weights. Exact sparse
    arithmetic; adjacencies are never densified."""
    current_type = frontier.node_type
    n = kg.nodes.count(current_type)
    row = sp.csr_matrix(
        (frontier.values, frontier.indices, np.array([0, frontier.nnz])), shape=(1, n)
    )
    for step, (name, direction) in enumerate(path):
        rel = kg.relations.get(name)
        if rel is None:
            raise PathError(f"step {step}: unknown relation {name!r}")
        if direction == FORWARD:
            expected, result_type, matrix = rel.src_type, rel.dst_type, rel.matrix
        elif direction == REVERSE:
            expected, result_type, matrix = rel.dst_type, rel.src_type, rel.transpose
        else:
            raise PathError(f"step {step}: unknown direction {direction!r}")
        if current_type != expected:
            raise PathError(
                f"step {step}: relation {name} expects frontier type {expected}, got {current_type}"
            )
        row = row @ matrix
        current_type = result_type
    # CSR matmul output is duplicate-free but may be unsorted
    row.sort_indices()
    return SparseVector(
        node_type=current_type,
        indices=row.indices.astype(np.int64),
        values=row.data.astype(np.float64),
    )


def _concept_frontier(
    kg: KnowledgeGraph, concept_ids: Iterable[str], weights: EdgeWeights
) -> dict[str, SparseVector]:
    by_type: dict[str, list[tuple[int, float]]] = {t: [] for t in CONCEPT_TYPES}
    for concept_id in concept_ids:
        hit = kg.concept_node(concept_id)
        if hit is None:
            raise QueryError(f"concept {concept_id} has no node in the graph")
        node_type, local = hit
        by_type[node_type].append((local, float(weights.vector(node_type)[local])))
    return {t: SparseVector.from_pairs(t, pairs) for t, pairs in by_type.items() if pairs}


def similar_cases(
    kg: KnowledgeGraph,
    profile: QueryProfile,
    k: int,
    weights: EdgeWeights | None = None,
) -> list[tuple[str, float]]:
    """Top-k cases by weighted concept overlap with demographic bonuses and a
    denied-symptom penalty; ties break by ascending case id."""
    if k < 1:
        raise QueryError(f"k must be >= 1, got {k}")
    if not profile.affirmed:
        raise QueryError("profile needs at least one affirmed concept")
    weights = weights or kg.weights
    cfg = kg.similarity
    scores = np.zeros(kg.n_cases, dtype=np.float64)

    for node_type, frontier in _concept_frontier(kg, profile.affirmed, weights).items():
        hit = traverse(kg, [(f"{node_type}_to_patient", FORWARD)], frontier)
        scores[hit.indices] += hit.values
    if profile.denied:
        for node_type, frontier in _concept_frontier(kg, profile.denied, weights).items():
            hit = traverse(kg, [(f"{node_type}_to_patient", FORWARD)], frontier)
            scores[hit.indices] -= cfg.lambda_neg * hit.values

    demo_bonus = cfg.lambda_demo * weights.mean_weight
    if profile.age is not None:
        local = kg.node_id("age_group", age_group_of(profile.age, cfg.age_groups))
        if local is not None:
            hit = traverse(
                kg,
                [("age_group_to_patient", FORWARD)],
                SparseVector.from_pairs("age_group", [(local, 1.0)]),
            )
            scores[hit.indices] += demo_bonus * hit.values
    if profile.gender is not None:
        local = kg.node_id("gender", profile.gender)
        if local is not None:
            hit = traverse(
                kg,
                [("gender_to_patient", FORWARD)],
                SparseVector.from_pairs("gender", [(local, 1.0)]),
            )
            scores[hit.indices] += demo_bonus * hit.values

    case_ids = kg.nodes.payloads["case_record"]
    ranked = sorted(range(kg.n_cases), key=lambda i: (-scores[i], case_ids[i]))
    return [(case_ids[i], float(scores[i])) for i in ranked[: min(k, kg.n_cases)]]


@dataclass(frozen=True)
class WeightTrainingConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    seed: int = 0
    enabled: bool = True


def learn_weights(
    kg: KnowledgeGraph,
    corpus: Sequence[CaseRecord],
    ontology: Ontology,
    config: WeightTrainingConfig | None = None,
) -> EdgeWeights:
    """Logistic (softmax) model over per-concept presence features predicting
    the risk class, trained by full-batch cross-entropy gradient descent; the
    learned coefficients become concept weights, clamped to >= 0. With
    training disabled this falls back to the IDF weights."""
    config = config or WeightTrainingConfig()
    if not config.enabled:
        return idf_weights(kg)
    risks = sorted({r.label.risk for r in corpus})
    if len(risks) < 2:
        raise TrainingError(f"degenerate training set: single risk class {risks}")
    risk_index = {r: i for i, r in enumerate(risks)}

    offsets = {}
    total = 0
    for node_type in CONCEPT_TYPES:
        offsets[node_type] = total
        total += kg.nodes.count(node_type)

    x = np.zeros((len(corpus), total), dtype=np.float64)
    y = np.zeros(len(corpus), dtype=np.int64)
    for row, record in enumerate(corpus):
        y[row] = risk_index[record.label.risk]
        for mention in record.mentions:
            if mention.polarity != "present":
                continue
            resolved = ontology.resolve(mention.concept_id, mention.body_location)
            hit = kg.concept_node(resolved) if resolved else None
            if hit is None:
                continue
            node_type, local = hit
            x[row, offsets[node_type] + local] = 1.0

    coef = np.zeros((len(risks), total), dtype=np.float64)
    bias = np.zeros(len(risks), dtype=np.float64)
    n = len(corpus)
    for _ in range(config.epochs):
        logits = x @ coef.T + bias
        logits -= logits.max(axis=1, keepdims=True)
        exp = np.exp(logits)
        probs = exp / exp.sum(axis=1, keepdims=True)
        grad = probs
        grad[np.arange(n), y] -= 1.0
        grad /= n
        coef -= config.learning_rate * (grad.T @ x)
        bias -= config.learning_rate * grad.sum(axis=0)
        if not np.all(np.isfinite(coef)):
            raise TrainingError("weight training diverged")

    per_concept = np.maximum(coef.max(axis=0), 0.0)
    vectors = {
        node_type: per_concept[offsets[node_type] : offsets[node_type] + kg.nodes.count(node_type)]
        for node_type in CONCEPT_TYPES
    }
    weights = EdgeWeights(vectors=vectors, source="learned")
    weights.validate()
    return weights


@dataclass(frozen=True)
class CoverageReport:
    mapped: int
    total: int

    @property
    def fraction(self) -> float:
        return self.mapped / self.total if self.total else 0.0


def map_to_codes(
    kg: KnowledgeGraph, code_table: dict[str, int]
) -> tuple[KnowledgeGraph, CoverageReport]:
    """Apply an external numeric-code table (e.g. terminology codes) to the
    concept nodes; unmapped nodes keep their internal codes and are counted
    in the coverage report. Duplicate external codes are rejected."""
    values = list(code_table.values())
    if len(set(values)) != len(values):
        raise MappingError("duplicate external codes in mapping table")
    new_codes = {t: v.copy() for t, v in kg.nodes.codes.items()}
    mapped = 0
    total = 0
    used = set()
    for node_type in CONCEPT_TYPES:
        for local, payload in enumerate(kg.nodes.payloads[node_type]):
            total += 1
            code = code_table.get(payload)
            if code is None:
                continue
            if code in used:
                raise MappingError(f"external code {code} assigned twice")
            used.add(code)
            new_codes[node_type][local] = code
            mapped += 1
    nodes = NodeTable(payloads=kg.nodes.payloads, codes=new_codes)
    nodes.validate()
    return replace(kg, nodes=nodes), CoverageReport(mapped=mapped, total=total)


# --------------------------------------------------------------------------
# snapshot: magic, version, JSON header, then little-endian CSR arrays
# --------------------------------------------------------------------------


def save_snapshot(kg: KnowledgeGraph, path: str | Path) -> None:
    header = {
        "schema_version": SNAPSHOT_VERSION,
        "node_types": {
            t: {"payloads": kg.nodes.payloads[t], "codes": kg.nodes.codes[t].tolist()}
            for t in NODE_TYPES
        },
        "case_labels": [label.to_dict() for label in kg.case_labels],
        "similarity": {
            "lambda_neg": kg.similarity.lambda_neg,
            "lambda_demo": kg.similarity.lambda_demo,
            "age_groups": [list(b) for b in kg.similarity.age_groups],
        },
        "weights_source": kg.weights.source,
        "relations": [
            {
                "name": name,
                "src": rel.src_type,
                "dst": rel.dst_type,
                "shape": list(rel.matrix.shape),
                "nnz": rel.nnz,
            }
            for name, rel in sorted(kg.relations.items())
        ],
        "weight_vectors": {t: len(kg.weights.vectors.get(t, ())) for t in CONCEPT_TYPES},
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<I", SNAPSHOT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, _rel in sorted(kg.relations.items()):
            rel = kg.relations[name]
            fh.write(rel.matrix.indptr.astype("<i8").tobytes())
            fh.write(rel.matrix.indices.astype("<i8").tobytes())
            fh.write(rel.matrix.data.astype("<f8").tobytes())
        for node_type in CONCEPT_TYPES:
            fh.write(kg.weights.vectors.get(node_type, np.zeros(0)).astype("<f8").tobytes())


def load_snapshot(path: str | Path) -> KnowledgeGraph:
    with open(path, "rb") as fh:
        if fh.read(4) != SNAPSHOT_MAGIC:
            raise SnapshotError(f"{path}: not a graph snapshot")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != SNAPSHOT_VERSION:
            raise SnapshotError(f"{path}: unsupported snapshot version {version}")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        payloads = {t: header["node_types"][t]["payloads"] for t in NODE_TYPES}
        codes = {
            t: np.array(header["node_types"][t]["codes"], dtype=np.int64) for t in NODE_TYPES
        }
        relations = {}
        for meta in header["relations"]:
            rows, cols = meta["shape"]
            nnz = meta["nnz"]
            indptr = np.frombuffer(fh.read(8 * (rows + 1)), dtype="<i8").astype(np.int64)
            indices = np.frombuffer(fh.read(8 * nnz), dtype="<i8").astype(np.int64)
            data = np.frombuffer(fh.read(8 * nnz), dtype="<f8").astype(np.float64)
            matrix = sp.csr_matrix((data, indices, indptr), shape=(rows, cols))
            relations[meta["name"]] = SparseAdjacency(meta["name"], meta["src"], meta["dst"], matrix)
        vectors = {}
        for node_type in CONCEPT_TYPES:
            count = header["weight_vectors"][node_type]
            vectors[node_type] = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
    sim = header["similarity"]
    kg = KnowledgeGraph(
        nodes=NodeTable(payloads=payloads, codes=codes),
        relations=relations,
        weights=EdgeWeights(vectors=vectors, source=header["weights_source"]),
        case_labels=[RecommendationLabel.from_dict(d) for d in header["case_labels"]],
        similarity=SimilarityConfig(
            lambda_neg=sim["lambda_neg"],
            lambda_demo=sim["lambda_demo"],
            age_groups=tuple(tuple(b) for b in sim["age_groups"]),
        ),
    )
    kg.nodes.validate()
    return kg


def synthetic_traversal_graph(
    n_src: int, n_dst: int, nnz: int, seed: int
) -> SparseAdjacency:
    """Random single-relation graph for latency benchmarks."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, n_src, nnz)
    cols = rng.integers(0, n_dst, nnz)
    matrix = sp.csr_matrix(
        (np.ones(nnz, dtype=np.float64), (rows, cols)), shape=(n_src, n_dst)
    )
    matrix.sum_duplicates()
    matrix.data[:] = 1.0
    return SparseAdjacency("synthetic", "symptom", "case_record", matrix)
