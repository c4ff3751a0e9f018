"""Question generation: pseudo-relevance-feedback term rankers, a masked-
concept neural predictor, inverse-probability masking evaluation, and
hierarchy-pruned question selection.

Rankers score expansion candidates from the usual two estimates, the
probability of a concept in the retrieved relevant cases R and in the whole
case base N, both approximated by counts with additive smoothing. Natural
logarithms throughout (the base only shifts scores monotonically).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Protocol, Sequence

import numpy as np

from .corpus import CaseRecord
from .errors import ConfigurationError, DataError
from .kg import CONCEPT_TYPES, FORWARD, REVERSE, KnowledgeGraph, QueryProfile, SparseVector
from .kg import similar_cases, traverse
from .ontology import Ontology

EPSILON = 1e-6  # additive smoothing for count-based probabilities
DEFAULT_RETRIEVAL_K = 50
DEFAULT_QUESTION_BUDGET = 10
DEFAULT_SCORE_FLOOR = -math.inf

KS_DEFAULT = (1, 5, 10)


# --------------------------------------------------------------------------
# ranker formulas (pure; probabilities already smoothed into (0, 1))
# --------------------------------------------------------------------------


def bim_score(p_r: float, p_n: float) -> float:
    """Binary independence model log-odds."""
    return math.log((p_r * (1.0 - p_n)) / (p_n * (1.0 - p_r)))


def chi_score(p_r: float, p_n: float, epsilon: float = EPSILON) -> float:
    """Chi-square-style divergence; an epsilon^2 guard keeps the log finite
    when the probabilities coincide."""
    return math.log(((p_r - p_n) ** 2 + epsilon**2) / p_n)


def kld_score(p_r: float, p_n: float) -> float:
    """Kullback-Leibler contribution of the concept."""
    return p_r * math.log(p_r / p_n)


def rsv_score(weight_sum: float, p_r: float, p_n: float) -> float:
    """Robertson selection value: summed term weights over the relevant
    records times the probability difference."""
    return weight_sum * (p_r - p_n)


def smoothed(count: float, total: float, epsilon: float = EPSILON) -> float:
    """(count + eps) / (total + 2 eps): strictly inside (0, 1) for
    0 <= count <= total."""
    return (count + epsilon) / (total + 2.0 * epsilon)


# --------------------------------------------------------------------------
# relevant set: per-concept counts in R and N, computed on the graph
# --------------------------------------------------------------------------


@dataclass
class RelevantSet:
    kg: KnowledgeGraph
    case_ids: list[str]
    size: int
    counts_r: dict[str, np.ndarray]  # node type -> count of relevant cases per concept
    counts_n: dict[str, np.ndarray]  # node type -> document frequency in the case base
    n_total: int
    epsilon: float = EPSILON

    def probabilities(self, node_type: str) -> tuple[np.ndarray, np.ndarray]:
        p_r = (self.counts_r[node_type] + self.epsilon) / (self.size + 2.0 * self.epsilon)
        p_n = (self.counts_n[node_type] + self.epsilon) / (self.n_total + 2.0 * self.epsilon)
        return p_r, p_n

    def count_r(self, concept_id: str) -> float:
        hit = self.kg.concept_node(concept_id)
        if hit is None:
            return 0.0
        node_type, local = hit
        return float(self.counts_r[node_type][local])


def build_relevant_set(kg: KnowledgeGraph, case_ids: Sequence[str]) -> RelevantSet:
    if not case_ids:
        raise DataError("relevant set must be non-empty")
    index = kg.nodes.index("case_record")
    locals_ = [index[cid] for cid in case_ids]
    frontier = SparseVector.from_pairs("case_record", [(i, 1.0) for i in locals_])
    counts_r = {}
    counts_n = {}
    for node_type in CONCEPT_TYPES:
        relation = f"{node_type}_to_patient"
        hit = traverse(kg, [(relation, REVERSE)], frontier)
        vec = np.zeros(kg.nodes.count(node_type), dtype=np.float64)
        vec[hit.indices] = hit.values
        counts_r[node_type] = vec
        counts_n[node_type] = np.diff(kg.relations[relation].matrix.indptr).astype(np.float64)
    return RelevantSet(
        kg=kg,
        case_ids=list(case_ids),
        size=len(case_ids),
        counts_r=counts_r,
        counts_n=counts_n,
        n_total=kg.n_cases,
    )


class Ranker:
    """Scores every concept node from a relevant set; subclasses implement
    the vectorized formula."""

    name = "base"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        raise NotImplementedError

    def score_all(self, rel: RelevantSet) -> dict[str, float]:
        out = {}
        for node_type in CONCEPT_TYPES:
            scores = self.score_vector(rel, node_type)
            for local, concept_id in enumerate(rel.kg.nodes.payloads[node_type]):
                out[concept_id] = float(scores[local])
        return out


class FrequencyRanker(Ranker):
    name = "f"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        return rel.counts_r[node_type].copy()


class BimRanker(Ranker):
    name = "BIM"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        p_r, p_n = rel.probabilities(node_type)
        return np.log((p_r * (1.0 - p_n)) / (p_n * (1.0 - p_r)))


class ChiRanker(Ranker):
    name = "CHI"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        p_r, p_n = rel.probabilities(node_type)
        return np.log(((p_r - p_n) ** 2 + rel.epsilon**2) / p_n)


class KldRanker(Ranker):
    name = "KLD"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        p_r, p_n = rel.probabilities(node_type)
        return p_r * np.log(p_r / p_n)


class RsvRanker(Ranker):
    """Term weight w(s, r) is the graph concept weight when s occurs in r,
    zero otherwise, so the inner sum is count * weight."""

    name = "RSV"

    def score_vector(self, rel: RelevantSet, node_type: str) -> np.ndarray:
        p_r, p_n = rel.probabilities(node_type)
        weights = rel.kg.weights.vector(node_type)
        return rel.counts_r[node_type] * weights * (p_r - p_n)


ALL_RANKERS = (FrequencyRanker, BimRanker, ChiRanker, KldRanker, RsvRanker)


def rank_frequency(concept_id: str, rel: RelevantSet) -> float:
    return rel.count_r(concept_id)


def _concept_probabilities(concept_id: str, rel: RelevantSet) -> tuple[float, float]:
    hit = rel.kg.concept_node(concept_id)
    if hit is None:
        raise DataError(f"unknown concept {concept_id}")
    node_type, local = hit
    p_r, p_n = rel.probabilities(node_type)
    return float(p_r[local]), float(p_n[local])


def rank_bim(concept_id: str, rel: RelevantSet) -> float:
    return bim_score(*_concept_probabilities(concept_id, rel))


def rank_chi(concept_id: str, rel: RelevantSet) -> float:
    return chi_score(*_concept_probabilities(concept_id, rel), epsilon=rel.epsilon)


def rank_kld(concept_id: str, rel: RelevantSet) -> float:
    return kld_score(*_concept_probabilities(concept_id, rel))


def rank_rsv(concept_id: str, rel: RelevantSet) -> float:
    node_type, local = rel.kg.concept_node(concept_id)
    weight = float(rel.kg.weights.vector(node_type)[local])
    p_r, p_n = _concept_probabilities(concept_id, rel)
    return rsv_score(rel.count_r(concept_id) * weight, p_r, p_n)


# --------------------------------------------------------------------------
# masked-concept prediction
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MaskedExample:
    input_concepts: tuple[str, ...]
    target: str

    def __post_init__(self):
        if not self.input_concepts:
            raise DataError("masked example needs a non-empty input")
        if self.target in self.input_concepts:
            raise DataError("target must not be part of the input")


def case_concepts(record: CaseRecord, ontology: Ontology) -> tuple[str, ...]:
    """Sorted unique present symptom/disease concepts of a record."""
    out = set()
    for m in record.mentions:
        if m.polarity != "present":
            continue
        cid = ontology.resolve(m.concept_id, m.body_location)
        if cid is not None and ontology.concepts[cid].semantic_type in CONCEPT_TYPES:
            out.add(cid)
    return tuple(sorted(out))


def concept_frequencies(records: Iterable[CaseRecord], ontology: Ontology) -> dict[str, int]:
    """Per-concept count of cases containing it (computed on the training
    split and reused for masking everywhere)."""
    freqs: dict[str, int] = {}
    for record in records:
        for cid in case_concepts(record, ontology):
            freqs[cid] = freqs.get(cid, 0) + 1
    return freqs


def sample_mask(
    concepts: Sequence[str], frequencies: dict[str, int], rng: np.random.Generator
) -> str:
    """Pick the concept to mask with probability proportional to the inverse
    of its corpus frequency (unseen concepts count as frequency 1)."""
    inv = np.array([1.0 / max(frequencies.get(c, 1), 1) for c in concepts])
    probs = inv / inv.sum()
    return concepts[int(rng.choice(len(concepts), p=probs))]


def build_masked_eval(
    records: Sequence[CaseRecord],
    ontology: Ontology,
    frequencies: dict[str, int],
    seed: int,
) -> tuple[list[MaskedExample], int]:
    """One inverse-probability mask per case; single-concept cases are
    skipped and counted."""
    rng = np.random.default_rng(seed)
    examples = []
    skipped = 0
    for record in records:
        concepts = case_concepts(record, ontology)
        if len(concepts) < 2:
            skipped += 1
            continue
        target = sample_mask(concepts, frequencies, rng)
        examples.append(
            MaskedExample(
                input_concepts=tuple(c for c in concepts if c != target), target=target
            )
        )
    return examples, skipped


@dataclass(frozen=True)
class PredictorConfig:
    hidden_dim: int = 128
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    init_scale: float = 0.05


class MaskedPredictor:
    """Bag-of-concepts multi-hot input -> hidden ReLU layer -> softmax over
    the concept vocabulary."""

    def __init__(self, vocab: Sequence[str], config: PredictorConfig):
        self.vocab = list(vocab)
        self.index = {c: i for i, c in enumerate(self.vocab)}
        self.config = config
        rng = np.random.default_rng(config.seed)
        v, h = len(self.vocab), config.hidden_dim
        s = config.init_scale
        self.w1 = rng.uniform(-s, s, size=(v, h))
        self.b1 = np.zeros(h)
        self.w2 = rng.uniform(-s, s, size=(h, v))
        self.b2 = np.zeros(v)

    def _encode(self, inputs: Sequence[Sequence[str]]) -> np.ndarray:
        x = np.zeros((len(inputs), len(self.vocab)), dtype=np.float64)
        for row, concepts in enumerate(inputs):
            for c in concepts:
                idx = self.index.get(c)
                if idx is None:
                    raise DataError(f"concept {c} outside the predictor vocabulary")
                x[row, idx] = 1.0
        return x

    def _forward(self, x: np.ndarray):
        z1 = x @ self.w1 + self.b1
        h1 = np.maximum(z1, 0.0)
        logits = h1 @ self.w2 + self.b2
        shifted = logits - logits.max(axis=1, keepdims=True)
        exp = np.exp(shifted)
        probs = exp / exp.sum(axis=1, keepdims=True)
        return probs, (x, z1, h1)

    def scores(self, input_concepts: Sequence[str]) -> np.ndarray:
        probs, _ = self._forward(self._encode([input_concepts]))
        return probs[0]

    def rank_concepts(self, input_concepts: Sequence[str]) -> list[str]:
        probs = self.scores(input_concepts)
        excluded = set(input_concepts)
        order = sorted(
            (c for c in self.vocab if c not in excluded),
            key=lambda c: (-probs[self.index[c]], c),
        )
        return order

    def train_epochs(
        self, examples_per_epoch, epochs: int, rng: np.random.Generator
    ) -> list[dict]:
        cfg = self.config
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        tensors = {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}
        m = {k: np.zeros_like(v) for k, v in tensors.items()}
        v2 = {k: np.zeros_like(v) for k, v in tensors.items()}
        t = 0
        history = []
        for epoch in range(epochs):
            examples = examples_per_epoch(epoch)
            x = self._encode([e.input_concepts for e in examples])
            y = np.array([self.index[e.target] for e in examples])
            order = rng.permutation(len(examples))
            epoch_loss, batches = 0.0, 0
            for start in range(0, len(examples), cfg.batch_size):
                idx = order[start : start + cfg.batch_size]
                xb, yb = x[idx], y[idx]
                probs, (xb_, z1, h1) = self._forward(xb)
                b = len(idx)
                loss = -float(np.mean(np.log(probs[np.arange(b), yb] + 1e-12)))
                dlogits = probs
                dlogits[np.arange(b), yb] -= 1.0
                dlogits /= b
                grads = {
                    "w2": h1.T @ dlogits,
                    "b2": dlogits.sum(axis=0),
                }
                dh1 = dlogits @ self.w2.T
                dz1 = dh1 * (z1 > 0.0)
                grads["w1"] = xb_.T @ dz1
                grads["b1"] = dz1.sum(axis=0)
                t += 1
                for name, tensor in tensors.items():
                    g = grads[name]
                    m[name] = beta1 * m[name] + (1 - beta1) * g
                    v2[name] = beta2 * v2[name] + (1 - beta2) * g * g
                    m_hat = m[name] / (1 - beta1**t)
                    v_hat = v2[name] / (1 - beta2**t)
                    tensor -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
                epoch_loss += loss
                batches += 1
            history.append({"epoch": epoch, "train_loss": epoch_loss / max(batches, 1)})
        return history


def train_masked_predictor(
    train_records: Sequence[CaseRecord],
    validation_records: Sequence[CaseRecord],
    ontology: Ontology,
    config: PredictorConfig | None = None,
) -> tuple[MaskedPredictor, list[dict]]:
    """Masks are resampled per epoch (seeded) with the inverse-probability
    law computed on the training split; returns the predictor and the loss
    history (validation loss logged per epoch)."""
    config = config or PredictorConfig()
    frequencies = concept_frequencies(train_records, ontology)
    vocab = sorted(frequencies)
    if not vocab:
        raise DataError("training split has no usable concepts")
    val_concepts = {
        c for r in validation_records for c in case_concepts(r, ontology)
    }
    unseen = val_concepts - set(vocab)
    if unseen:
        raise DataError(f"validation concepts missing from training vocabulary: {sorted(unseen)}")

    predictor = MaskedPredictor(vocab, config)
    mask_rng = np.random.default_rng(config.seed + 1)
    train_rng = np.random.default_rng(config.seed + 2)
    usable = [r for r in train_records if len(case_concepts(r, ontology)) >= 2]

    def examples_for(epoch: int) -> list[MaskedExample]:
        out = []
        for record in usable:
            concepts = case_concepts(record, ontology)
            target = sample_mask(concepts, frequencies, mask_rng)
            out.append(MaskedExample(tuple(c for c in concepts if c != target), target))
        return out

    val_examples, _ = build_masked_eval(validation_records, ontology, frequencies, config.seed + 3)
    history = []
    for entry in predictor.train_epochs(examples_for, config.epochs, train_rng):
        if val_examples:
            x = predictor._encode([e.input_concepts for e in val_examples])
            probs, _ = predictor._forward(x)
            y = np.array([predictor.index[e.target] for e in val_examples])
            entry["val_loss"] = -float(
                np.mean(np.log(probs[np.arange(len(y)), y] + 1e-12))
            )
        history.append(entry)
    return predictor, history


def save_predictor(predictor: MaskedPredictor, path) -> None:
    np.savez(
        path,
        w1=predictor.w1,
        b1=predictor.b1,
        w2=predictor.w2,
        b2=predictor.b2,
        vocab=np.array(predictor.vocab, dtype=np.str_),
        hidden_dim=np.array([predictor.config.hidden_dim]),
    )


def load_predictor(path) -> MaskedPredictor:
    data = np.load(path, allow_pickle=False)
    vocab = [str(v) for v in data["vocab"]]
    predictor = MaskedPredictor(vocab, PredictorConfig(hidden_dim=int(data["hidden_dim"][0])))
    predictor.w1 = data["w1"].astype(np.float64)
    predictor.b1 = data["b1"].astype(np.float64)
    predictor.w2 = data["w2"].astype(np.float64)
    predictor.b2 = data["b2"].astype(np.float64)
    return predictor


# --------------------------------------------------------------------------
# evaluation: Acc@k over masked examples
# --------------------------------------------------------------------------


class RankingMethod(Protocol):
    def rank_concepts(self, input_concepts: Sequence[str]) -> list[str]: ...


@dataclass
class RankerMethod:
    """Pseudo-relevance feedback: retrieve the top cases for the unmasked
    profile, then rank expansion candidates with the wrapped ranker."""

    kg: KnowledgeGraph
    ranker: Ranker
    retrieval_k: int = DEFAULT_RETRIEVAL_K

    @property
    def name(self) -> str:
        return self.ranker.name

    def rank_concepts(self, input_concepts: Sequence[str]) -> list[str]:
        usable = [c for c in input_concepts if self.kg.concept_node(c) is not None]
        if not usable:
            return []
        retrieved = similar_cases(
            self.kg, QueryProfile(affirmed=tuple(usable)), k=self.retrieval_k
        )
        rel = build_relevant_set(self.kg, [cid for cid, _ in retrieved])
        scores = self.ranker.score_all(rel)
        excluded = set(input_concepts)
        return sorted(
            (c for c in scores if c not in excluded), key=lambda c: (-scores[c], c)
        )


def eval_acc_at_k(
    method: RankingMethod,
    eval_set: Sequence[MaskedExample],
    ks: Sequence[int] = KS_DEFAULT,
) -> dict[int, float]:
    """Fraction of examples whose masked target appears in the top-k."""
    if not eval_set:
        raise DataError("empty evaluation set")
    if any(k < 1 for k in ks):
        raise ConfigurationError(f"k values must be >= 1, got {list(ks)}")
    max_k = max(ks)
    hits = {k: 0 for k in ks}
    for example in eval_set:
        top = method.rank_concepts(example.input_concepts)[:max_k]
        for k in ks:
            if example.target in top[:k]:
                hits[k] += 1
    return {k: hits[k] / len(eval_set) for k in ks}


# --------------------------------------------------------------------------
# question selection with hierarchy pruning
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateGates:
    age: int | None = None
    gender: str | None = None


def question_candidates(
    ontology: Ontology,
    vocabulary: Iterable[str],
    *,
    affirmed: Iterable[str],
    denied: Iterable[str],
    asked: Iterable[str],
    gates: CandidateGates = CandidateGates(),
) -> list[str]:
    """Vocabulary minus asked/affirmed/denied, minus all descendants of every
    denied concept, minus gender- and age-incompatible concepts."""
    blocked = set(affirmed) | set(denied) | set(asked)
    for concept_id in denied:
        if concept_id in ontology.concepts:
            blocked |= ontology.descendants(concept_id)
    out = []
    for concept_id in sorted(set(vocabulary)):
        if concept_id in blocked:
            continue
        concept = ontology.concepts.get(concept_id)
        if concept is None:
            continue
        if gates.gender is not None:
            if "female_only" in concept.flags and gates.gender != "female":
                continue
            if "male_only" in concept.flags and gates.gender != "male":
                continue
        if gates.age is not None:
            if "adult_only" in concept.flags and gates.age < 18:
                continue
            if "child_only" in concept.flags and gates.age >= 18:
                continue
        out.append(concept_id)
    return out


def next_question(
    kg: KnowledgeGraph,
    ontology: Ontology,
    ranker: Ranker,
    *,
    affirmed: Sequence[str],
    denied: Sequence[str] = (),
    asked: Sequence[str] = (),
    gates: CandidateGates = CandidateGates(),
    budget_remaining: int = DEFAULT_QUESTION_BUDGET,
    retrieval_k: int = DEFAULT_RETRIEVAL_K,
    score_floor: float = DEFAULT_SCORE_FLOOR,
) -> str | None:
    """Highest-scoring allowed concept as the next question; ties break by
    ascending concept id; None when the budget is exhausted or nothing scores
    above the floor."""
    if not affirmed:
        raise DataError("session needs at least one affirmed concept")
    if budget_remaining <= 0:
        return None
    # only concepts the case base has actually seen can be useful questions
    vocabulary = sorted(kg.observed_concepts())
    candidates = question_candidates(
        ontology, vocabulary, affirmed=affirmed, denied=denied, asked=asked, gates=gates
    )
    if not candidates:
        return None
    usable = [c for c in affirmed if kg.concept_node(c) is not None]
    if not usable:
        return None
    retrieved = similar_cases(kg, QueryProfile(affirmed=tuple(usable)), k=retrieval_k)
    rel = build_relevant_set(kg, [cid for cid, _ in retrieved])
    scores = ranker.score_all(rel)
    best = min(candidates, key=lambda c: (-scores.get(c, -math.inf), c))
    if scores.get(best, -math.inf) <= score_floor:
        return None
    return best
