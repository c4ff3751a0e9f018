"""Brute-force oracles: direct counting from raw case records, independent of
the graph/traversal implementations they check."""

import math

EPS = 1e-6


def present_concepts(record, ontology):
    out = set()
    for m in record.mentions:
        if m.polarity != "present":
            continue
        cid = ontology.resolve(m.concept_id, m.body_location)
        if cid is not None and ontology.concepts[cid].semantic_type in ("symptom", "disease"):
            out.add(cid)
    return out


def ranker_scores(concept, relevant_records, all_records, ontology, weight_fn):
    """All five ranker scores for one concept, computed by naive recount."""
    count_r = sum(1 for r in relevant_records if concept in present_concepts(r, ontology))
    df = sum(1 for r in all_records if concept in present_concepts(r, ontology))
    size_r = len(relevant_records)
    n = len(all_records)
    p_r = (count_r + EPS) / (size_r + 2 * EPS)
    p_n = (df + EPS) / (n + 2 * EPS)
    weight = weight_fn(concept)
    return {
        "f": float(count_r),
        "BIM": math.log(p_r * (1 - p_n) / (p_n * (1 - p_r))),
        "CHI": math.log(((p_r - p_n) ** 2 + EPS**2) / p_n),
        "KLD": p_r * math.log(p_r / p_n),
        "RSV": count_r * weight * (p_r - p_n),
    }
